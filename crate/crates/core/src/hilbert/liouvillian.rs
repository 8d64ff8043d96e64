use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::operators::{annihilation, hamiltonian};
use super::{unvec, vec_of, DensityMatrix, FockSpace, POSITIVITY_TOL, TAIL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{dense_eig, hermitian_eig, BandedLu, CsrMatrix, RowOverride};
use crate::model::ModelParams;
use crate::ode::{Dopri5, OdeSettings};

/// Matrix of `ρ ↦ −i[H,ρ] + κ(bρb† − ½{b†b,ρ})` on column-stacked `ρ`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub space: FockSpace,
    pub params: ModelParams,
    pub matrix: CsrMatrix,
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        unvec(&self.matrix.apply(&vec_of(rho)), self.dim())
    }

    /// Euclidean norm of `vec(Lρ)`.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        self.matrix.apply(&rho.to_vec()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn liouvillian(p: &ModelParams, space: FockSpace) -> Liouvillian {
    let n = space.dim();
    let h = hamiltonian(p, space).elements;
    let b = annihilation(space).elements;
    let mut heff = h.clone();
    for k in 0..n {
        heff[(k, k)] -= C64::new(0.0, 0.5 * p.kappa * k as f64);
    }
    let mi = C64::new(0.0, -1.0);
    let mut t = Vec::with_capacity(n * n * 11);
    let nz: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .filter_map(|(i, k)| {
            let v = heff[(i, k)];
            (v != C64::new(0.0, 0.0)).then_some((i, k, v))
        })
        .collect();
    for j in 0..n {
        // −i Heff ρ
        for &(i, k, v) in &nz {
            t.push((i + n * j, k + n * j, mi * v));
        }
        // +i ρ Heff†: (ρ Heff†)_ij = Σ_l ρ_il conj(Heff_jl)
        for &(jj, l, v) in nz.iter().filter(|e| e.0 == j) {
            debug_assert_eq!(jj, j);
            for i in 0..n {
                t.push((i + n * j, i + n * l, -mi * v.conj()));
            }
        }
    }
    // κ bρb†: (bρb†)_ij = b_{i,i+1} ρ_{i+1,j+1} b_{j,j+1}
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let v = b[(i, i + 1)] * b[(j, j + 1)].conj() * p.kappa;
            t.push((i + n * j, (i + 1) + n * (j + 1), v));
        }
    }
    let matrix = CsrMatrix::from_triplets(n * n, n * n, t);
    Liouvillian { space, params: *p, matrix }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSettings {
    pub tail_tol: f64,
    /// Reciprocal condition number below which the pinned system is treated
    /// as singular (degenerate kernel). Kept near rounding level: strongly
    /// metastable phases have gaps of order 1e-12 and are still solvable.
    pub singular_rcond: f64,
    pub refinement_steps: usize,
}

impl Default for SteadyStateSettings {
    fn default() -> Self {
        Self { tail_tol: TAIL_TOL, singular_rcond: 1e-18, refinement_steps: 2 }
    }
}

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, &SteadyStateSettings::default())
}

/// Solves the linear system obtained by replacing the equation for `ρ_mm` with
/// `ρ_mm = 1`, then normalizes by the trace.
fn pinned_solve(l: &Liouvillian, m: usize, settings: &SteadyStateSettings) -> Result<Option<Vec<C64>>> {
    let n = l.dim();
    let idx = m + n * m;
    let ov = RowOverride { rows: vec![(idx, vec![(idx, C64::new(1.0, 0.0))])] };
    let lu = BandedLu::factor(&l.matrix, C64::new(0.0, 0.0), &ov)?;
    if lu.rcond() < settings.singular_rcond {
        return Ok(None);
    }
    let mut rhs = vec![C64::new(0.0, 0.0); n * n];
    rhs[idx] = C64::new(1.0, 0.0);
    let mut x = rhs.clone();
    lu.solve(&mut x)?;
    for _ in 0..settings.refinement_steps {
        let mut r = l.matrix.apply(&x);
        r[idx] = x[idx];
        for k in 0..r.len() {
            r[k] = rhs[k] - r[k];
        }
        lu.solve(&mut r)?;
        for k in 0..x.len() {
            x[k] += r[k];
        }
    }
    Ok(Some(x))
}

fn kernel_multiplicity(l: &Liouvillian) -> usize {
    if l.matrix.nrows <= 1600 {
        if let Ok(e) = dense_eig(&l.matrix.to_dense()) {
            let scale = l.matrix.norm_one().max(1.0);
            return e.values.iter().filter(|z| z.norm() < 1e-10 * scale).count().max(2);
        }
    }
    2
}

/// Unique stationary state of `l`, Hermitized and validated.
pub fn steady_state_with(l: &Liouvillian, settings: &SteadyStateSettings) -> Result<DensityMatrix> {
    let n = l.dim();
    let mut x = pinned_solve(l, 0, settings)?;
    // Re-pin on the most populated level when the vacuum weight is tiny.
    let needs_repin = match &x {
        None => true,
        Some(v) => {
            let tr: f64 = (0..n).map(|k| v[k + n * k].re).sum();
            1.0 / tr.abs() < 1e-6
        }
    };
    if needs_repin {
        let m = match &x {
            Some(v) => (0..n).max_by(|&a, &b| v[a + n * a].re.total_cmp(&v[b + n * b].re)).unwrap(),
            None => n / 4,
        };
        if m != 0 {
            if let Some(y) = pinned_solve(l, m, settings)? {
                x = Some(y);
            }
        }
    }
    let x = x.ok_or_else(|| Error::DegenerateSteadyState { multiplicity: kernel_multiplicity(l) })?;

    let raw = unvec(&x, n);
    let mut rho = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (raw[(i, j)] + raw[(j, i)].conj()));
    let tr = rho.diag().sum().re;
    if !(tr.is_finite() && tr.abs() > 0.0) {
        return Err(Error::Numerical("steady state has vanishing trace".into()));
    }
    rho.mapv_inplace(|z| z / tr);

    let (w, v) = hermitian_eig(&rho)?;
    let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if wmin < -POSITIVITY_TOL {
        return Err(Error::Numerical(format!(
            "steady state has eigenvalue {wmin:e} below −{POSITIVITY_TOL:e}; increase the dimension"
        )));
    }
    if wmin < 0.0 {
        let wc: Array1<f64> = w.mapv(|x| x.max(0.0));
        let s: f64 = wc.sum();
        rho = Array2::from_shape_fn((n, n), |(i, j)| {
            (0..n).map(|k| v[(i, k)] * v[(j, k)].conj() * wc[k]).sum::<C64>() / s
        });
        let tr = rho.diag().sum().re;
        rho.mapv_inplace(|z| z / tr);
    }
    DensityMatrix::new(l.space, rho, settings.tail_tol)
}

/// Integrates `dρ/dt = Lρ` from `rho0` at `t = 0` and returns `ρ` at each
/// requested (non-decreasing) time.
pub fn propagate(l: &Liouvillian, rho0: &Array2<C64>, times: &[f64], rtol: f64) -> Result<Vec<Array2<C64>>> {
    let n = l.dim();
    let m = &l.matrix;
    let mut ode = Dopri5::new(
        |_t, y: &[C64], dy: &mut [C64]| m.matvec(y, dy),
        0.0,
        &vec_of(rho0),
        OdeSettings { rtol, atol: rtol * 1e-4, ..Default::default() },
    );
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < ode.t() {
            return Err(Error::InvalidParameter("propagation times must be non-decreasing".into()));
        }
        ode.integrate_to(t)?;
        out.push(unvec(ode.y(), n));
    }
    Ok(out)
}
