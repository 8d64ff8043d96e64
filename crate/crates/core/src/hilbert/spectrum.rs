use ndarray::{s, Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::liouvillian::Liouvillian;
use super::{unvec, FockSpace};
use crate::error::{Error, Result};
use crate::linalg::{dense_eig, BandedLu, RowOverride};

/// Leading Liouvillian eigenmodes with biorthonormal left/right eigen-operators,
/// `Tr[ℓ_j† r_k] = δ_jk`. `r₀` has unit trace; other `r_k` unit Frobenius norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiouvillianSpectrum {
    pub space: FockSpace,
    /// Sorted by descending real part.
    pub eigenvalues: Vec<C64>,
    pub right_ops: Vec<Array2<C64>>,
    pub left_ops: Vec<Array2<C64>>,
    /// `‖L r_k − λ_k r_k‖` per mode.
    pub residuals: Vec<f64>,
    pub method: String,
    /// Total number of modes of the truncated generator, `N²`.
    pub total_modes: usize,
}

impl LiouvillianSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.total_modes
    }

    /// Largest `|Tr[ℓ_j† r_k] − δ_jk|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, l) in self.left_ops.iter().enumerate() {
            for (k, r) in self.right_ops.iter().enumerate() {
                let ip: C64 = l.iter().zip(r.iter()).map(|(a, b)| a.conj() * b).sum();
                let d = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((ip - d).norm());
            }
        }
        worst
    }

    /// Liouvillian gap `min_{k>0} |Re λ_k|` among the returned modes.
    pub fn gap(&self) -> Option<f64> {
        self.eigenvalues.iter().skip(1).map(|z| z.re.abs()).reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    /// Largest Fock dimension handled by the dense eigensolver.
    pub dense_max_dim: usize,
    /// Shift for the iterative solver, in units of κ (real, positive).
    pub shift_kappa: f64,
    pub tol: f64,
    pub max_krylov: usize,
    pub seed: u64,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        Self { dense_max_dim: 40, shift_kappa: 0.1, tol: 1e-10, max_krylov: 800, seed: 0x5eed }
    }
}

pub fn liouvillian_spectrum(l: &Liouvillian, k: usize) -> Result<LiouvillianSpectrum> {
    liouvillian_spectrum_with(l, k, &SpectrumSettings::default())
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(l: &Liouvillian, lam: C64, v: &[C64]) -> f64 {
    let lv = l.matrix.apply(v);
    lv.iter().zip(v).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt() / norm(v)
}

/// Arnoldi with full reorthogonalization on `op`; returns Ritz pairs of `op`
/// sorted by descending modulus, each with its Arnoldi residual estimate.
fn arnoldi(
    op: &dyn Fn(&mut [C64]) -> Result<()>,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<(C64, Vec<C64>, f64)>> {
    let m = m.min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v0: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let nv = norm(&v0);
    v0.iter_mut().for_each(|z| *z /= nv);
    let mut basis: Vec<Vec<C64>> = vec![v0];
    let mut h = Array2::<C64>::zeros((m + 1, m));
    let mut size = m;
    for j in 0..m {
        let mut w = basis[j].clone();
        op(&mut w)?;
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = inner(q, &w);
                h[(i, j)] += c;
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let hn = norm(&w);
        h[(j + 1, j)] = C64::new(hn, 0.0);
        if hn < 1e-14 * h.slice(s![..=j, j]).iter().map(|z| z.norm()).fold(0.0, f64::max) {
            size = j + 1;
            break;
        }
        w.iter_mut().for_each(|z| *z /= hn);
        basis.push(w);
    }
    let hm = h.slice(s![..size, ..size]).to_owned();
    let (theta, y) = hm.eig()?;
    let beta = h[(size, size - 1)].norm();
    let mut out: Vec<(C64, Vec<C64>, f64)> = (0..size)
        .map(|c| {
            let col = y.column(c);
            let mut v = vec![C64::new(0.0, 0.0); n];
            for (i, q) in basis.iter().take(size).enumerate() {
                let a = col[i];
                v.iter_mut().zip(q).for_each(|(x, qq)| *x += a * qq);
            }
            let nv = norm(&v);
            v.iter_mut().for_each(|z| *z /= nv);
            (theta[c], v, beta * col[size - 1].norm())
        })
        .collect();
    out.sort_by(|a, b| b.0.norm().total_cmp(&a.0.norm()));
    Ok(out)
}

struct Modes {
    values: Vec<C64>,
    right: Vec<Vec<C64>>,
    left: Vec<Vec<C64>>,
}

fn dense_modes(l: &Liouvillian) -> Result<Modes> {
    let e = dense_eig(&l.matrix.to_dense())?;
    let n = e.values.len();
    Ok(Modes {
        values: e.values.to_vec(),
        right: (0..n).map(|k| e.right.column(k).to_vec()).collect(),
        left: (0..n).map(|k| e.left.column(k).to_vec()).collect(),
    })
}

fn shift_invert_modes(l: &Liouvillian, k: usize, settings: &SpectrumSettings) -> Result<Modes> {
    let n = l.matrix.nrows;
    let sigma = C64::new(settings.shift_kappa * l.params.kappa, 0.0);
    let lu = BandedLu::factor(&l.matrix, sigma, &RowOverride::default())?;
    let scale = l.matrix.norm_one().max(1.0);
    let want = (k + k / 2 + 4).min(n);
    let mut m = (2 * want + 20).min(n);
    loop {
        let right = arnoldi(&|x: &mut [C64]| lu.solve(x), n, m, settings.seed)?;
        let left = arnoldi(&|x: &mut [C64]| lu.solve_adjoint(x), n, m, settings.seed ^ 0x9e37)?;
        let mut values = Vec::new();
        let mut rv = Vec::new();
        let mut lv = Vec::new();
        let mut worst = 0.0f64;
        for (theta, v, _) in right.iter().take(want) {
            let lam = sigma + 1.0 / theta;
            let target = (lam - sigma).conj();
            let (_, w, _) = left
                .iter()
                .min_by(|a, b| (1.0 / a.0 - target).norm().total_cmp(&(1.0 / b.0 - target).norm()))
                .unwrap();
            let res = residual(l, lam, v).max(residual_adjoint(l, lam.conj(), w));
            worst = worst.max(res / scale);
            values.push(lam);
            rv.push(v.clone());
            lv.push(w.clone());
        }
        if worst <= settings.tol {
            for (r, w) in rv.iter().zip(lv.iter_mut()) {
                let ip = inner(w, r);
                w.iter_mut().for_each(|z| *z /= ip.conj());
            }
            return Ok(Modes { values, right: rv, left: lv });
        }
        if m >= n || m >= settings.max_krylov {
            return Err(Error::NoConvergence {
                reason: format!("shift-invert Arnoldi with {m} vectors for {want} modes"),
                residual: worst,
            });
        }
        m = (2 * m).min(n).min(settings.max_krylov);
    }
}

fn residual_adjoint(l: &Liouvillian, mu: C64, w: &[C64]) -> f64 {
    let adj = l.matrix.adjoint();
    let lw = adj.apply(w);
    lw.iter().zip(w).map(|(a, b)| (a - mu * b).norm_sqr()).sum::<f64>().sqrt() / norm(w)
}

/// The `k` modes with largest real part (all `N²` when `k` exceeds that).
/// Dense for `N ≤ dense_max_dim` or when at least half of all modes are
/// requested; otherwise shift-invert Arnoldi about a small positive shift,
/// which returns the modes closest to the origin.
pub fn liouvillian_spectrum_with(l: &Liouvillian, k: usize, settings: &SpectrumSettings) -> Result<LiouvillianSpectrum> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 modes, got {k}")));
    }
    let n = l.dim();
    let total = n * n;
    let k = k.min(total);
    let (modes, method) = if n <= settings.dense_max_dim || 2 * k >= total {
        (dense_modes(l)?, "dense")
    } else {
        (shift_invert_modes(l, k, settings)?, "shift-invert")
    };
    let mut order: Vec<usize> = (0..modes.values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (modes.values[a], modes.values[b]);
        y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im))
    });
    order.truncate(k);

    let mut eigenvalues = Vec::with_capacity(k);
    let mut right_ops = Vec::with_capacity(k);
    let mut left_ops = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (pos, &i) in order.iter().enumerate() {
        let mut r = Array1::from(modes.right[i].clone());
        let mut w = Array1::from(modes.left[i].clone());
        let s = if pos == 0 {
            (0..n).map(|d| r[d + n * d]).sum::<C64>()
        } else {
            let nr = norm(r.as_slice().unwrap());
            // fix the phase by the largest component
            let big = r.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            big / big.norm() * nr
        };
        r.mapv_inplace(|z| z / s);
        w.mapv_inplace(|z| z * s.conj());
        residuals.push(residual(l, modes.values[i], r.as_slice().unwrap()));
        eigenvalues.push(modes.values[i]);
        right_ops.push(unvec(r.as_slice().unwrap(), n));
        left_ops.push(unvec(w.as_slice().unwrap(), n));
    }
    Ok(LiouvillianSpectrum {
        space: l.space,
        eigenvalues,
        right_ops,
        left_ops,
        residuals,
        method: method.to_string(),
        total_modes: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{liouvillian, steady_state, StateVector};
    use crate::model::ModelParams;

    #[test]
    fn kernel_structure() {
        let p = ModelParams::new(0.7, 1.0, 0.4, 0.5, 0.0, 0.1).unwrap();
        let s = FockSpace::new(12).unwrap();
        let l = liouvillian(&p, s);
        let sp = liouvillian_spectrum(&l, 144).unwrap();
        assert!(sp.eigenvalues[0].norm() < 1e-9);
        assert!(sp.eigenvalues.iter().all(|z| z.re <= 1e-9));
        assert!(sp.biorthogonality_error() < 1e-8);
        let rho = steady_state(&l).unwrap();
        assert!((&sp.right_ops[0] - &rho.rho).iter().all(|z| z.norm() < 1e-8));
        for i in 0..12 {
            for j in 0..12 {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((sp.left_ops[0][(i, j)] - C64::new(d, 0.0)).norm() < 1e-8);
            }
        }
        // closed under conjugation
        for z in &sp.eigenvalues {
            let m = sp.eigenvalues.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(m < 1e-8);
        }
    }

    #[test]
    fn two_level_linear_cavity() {
        // N = 2 fixes the sign convention: coherences decay as e^{±iΔt − κt/2}.
        let p = ModelParams::new(1.5, 0.0, 0.0, 0.0, 0.0, 0.2).unwrap();
        let l = liouvillian(&p, FockSpace::new(2).unwrap());
        let sp = liouvillian_spectrum(&l, 4).unwrap();
        let mut got = sp.eigenvalues.clone();
        got.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let want = [C64::new(-0.2, 0.0), C64::new(-0.1, -1.5), C64::new(-0.1, 1.5), C64::new(0.0, 0.0)];
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-12, "{g} vs {w}");
        }
        // |1⟩⟨0| (matrix element ρ_10) evolves with +iΔ
        let idx = sp.eigenvalues.iter().position(|z| (z - C64::new(-0.1, 1.5)).norm() < 1e-9).unwrap();
        let r = &sp.right_ops[idx];
        assert!(r[(1, 0)].norm() > 0.9 && r[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn shift_invert_agrees_with_dense() {
        let p = ModelParams::new(1.0, 1.0, 0.4, 0.5, 0.0, 0.1).unwrap();
        let s = FockSpace::new(14).unwrap();
        let l = liouvillian(&p, s);
        let dense = liouvillian_spectrum(&l, 8).unwrap();
        let it = liouvillian_spectrum_with(&l, 8, &SpectrumSettings { dense_max_dim: 4, ..Default::default() }).unwrap();
        assert_eq!(it.method, "shift-invert");
        assert!(it.biorthogonality_error() < 1e-8);
        // the iterative solver targets the origin; the slowest modes coincide
        for z in it.eigenvalues.iter().take(4) {
            let m = dense.eigenvalues.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(m < 1e-8, "{z}");
        }
        let _ = StateVector::vacuum(s);
    }

    #[test]
    fn rejects_k_below_two() {
        let p = ModelParams::new(1.0, 1.0, 0.4, 0.5, 0.0, 0.1).unwrap();
        let l = liouvillian(&p, FockSpace::new(4).unwrap());
        assert!(liouvillian_spectrum(&l, 1).is_err());
    }
}
