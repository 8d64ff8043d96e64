use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DensityMatrix;
use crate::error::{Error, Result};

/// Mass deficit beyond which the grid is flagged as not covering the state.
pub const BOUNDARY_MASS_TOL: f64 = 1e-4;

/// Wigner function sampled on a rectangular grid. Axes are in rescaled units
/// `β̃ = β/√ℵ`; values are the Wigner density in `β` units, normalized so that
/// `∬ W dX dY = 1` in `β` units, i.e. `∬ W dX̃ dỸ = 1/ℵ` on these axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// `values[(iy, ix)]`.
    pub values: Array2<f64>,
    pub aleph: f64,
    /// Trapezoid integral over the grid in rescaled units.
    pub integral: f64,
    /// `1 − ℵ·integral`: weight falling outside the grid.
    pub mass_deficit: f64,
    pub boundary_warning: bool,
}

impl WignerGrid {
    /// Strict local maxima (8-neighbourhood, interior points) with value at
    /// least `rel_threshold` times the global maximum: `(x̃, ỹ, W)`.
    pub fn local_maxima(&self, rel_threshold: f64) -> Vec<(f64, f64, f64)> {
        let (ny, nx) = self.values.dim();
        let gmax = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out = Vec::new();
        for iy in 1..ny.saturating_sub(1) {
            for ix in 1..nx.saturating_sub(1) {
                let v = self.values[(iy, ix)];
                if v < rel_threshold * gmax {
                    continue;
                }
                let mut is_max = true;
                'nb: for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let w = self.values[((iy as i32 + dy) as usize, (ix as i32 + dx) as usize)];
                        if w >= v {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    out.push((self.x_axis[ix], self.y_axis[iy], v));
                }
            }
        }
        out.sort_by(|a, b| b.2.total_cmp(&a.2));
        out
    }

    /// Lobes: [`local_maxima`](Self::local_maxima) with any maximum closer
    /// than one zero-point width `1/√(2ℵ)` to a higher one dropped, so ridge
    /// ripples below quantum resolution count once.
    pub fn lobes(&self, rel_threshold: f64) -> Vec<(f64, f64, f64)> {
        let zpw = 1.0 / (2.0 * self.aleph).sqrt();
        let mut kept: Vec<(f64, f64, f64)> = Vec::new();
        for m in self.local_maxima(rel_threshold) {
            if kept.iter().all(|k| (k.0 - m.0).hypot(k.1 - m.1) >= zpw) {
                kept.push(m);
            }
        }
        kept
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `x,y,w` (rescaled axes).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,w\n");
        for (iy, y) in self.y_axis.iter().enumerate() {
            for (ix, x) in self.x_axis.iter().enumerate() {
                s.push_str(&format!("{x:.10},{y:.10},{:.12e}\n", self.values[(iy, ix)]));
            }
        }
        s
    }
}

/// `W(α) = (2/π) Σ_n (−1)ⁿ ⟨n|D†(α) ρ D(α)|n⟩`, by the Laguerre recurrence for
/// the matrix elements of displaced parity. `work` must have length `N`.
pub fn wigner_at(rho: &Array2<C64>, alpha: C64, work: &mut [C64]) -> f64 {
    let m = rho.nrows();
    let wl = work;
    wl[0] = C64::new((-2.0 * alpha.norm_sqr()).exp() / std::f64::consts::PI, 0.0);
    let mut w = (rho[(0, 0)] * wl[0]).re;
    for n in 1..m {
        wl[n] = 2.0 * alpha * wl[n - 1] / (n as f64).sqrt();
        w += 2.0 * (rho[(0, n)] * wl[n]).re;
    }
    for mm in 1..m {
        let sm = (mm as f64).sqrt();
        let mut temp = wl[mm];
        wl[mm] = (2.0 * alpha.conj() * temp - sm * wl[mm - 1]) / sm;
        w += (rho[(mm, mm)] * wl[mm]).re;
        for n in mm + 1..m {
            let t2 = (2.0 * alpha * wl[n - 1] - sm * temp) / (n as f64).sqrt();
            temp = wl[n];
            wl[n] = t2;
            w += 2.0 * (rho[(mm, n)] * wl[n]).re;
        }
    }
    2.0 * w
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (axis[i + 1] - axis[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Evaluates the Wigner function of `rho` on `x_axis × y_axis` given in
/// rescaled units, i.e. at `α = √ℵ (x̃ + iỹ)`.
pub fn wigner(rho: &DensityMatrix, x_axis: &[f64], y_axis: &[f64], aleph: f64) -> Result<WignerGrid> {
    if !(aleph > 0.0) {
        return Err(Error::InvalidParameter(format!("aleph must be > 0, got {aleph}")));
    }
    if x_axis.len() < 2 || y_axis.len() < 2 {
        return Err(Error::InvalidParameter("Wigner axes need at least two points".into()));
    }
    let sa = aleph.sqrt();
    let n = rho.space.dim();
    let rows: Vec<Vec<f64>> = y_axis
        .par_iter()
        .map(|&y| {
            let mut work = vec![C64::new(0.0, 0.0); n];
            x_axis.iter().map(|&x| wigner_at(&rho.rho, C64::new(x, y) * sa, &mut work)).collect()
        })
        .collect();
    let values = Array2::from_shape_fn((y_axis.len(), x_axis.len()), |(iy, ix)| rows[iy][ix]);
    let (wx, wy) = (trapezoid_weights(x_axis), trapezoid_weights(y_axis));
    let mut integral = 0.0;
    for (iy, a) in wy.iter().enumerate() {
        for (ix, b) in wx.iter().enumerate() {
            integral += a * b * values[(iy, ix)];
        }
    }
    let mass_deficit = 1.0 - aleph * integral;
    Ok(WignerGrid {
        x_axis: x_axis.to_vec(),
        y_axis: y_axis.to_vec(),
        values,
        aleph,
        integral,
        mass_deficit,
        boundary_warning: mass_deficit.abs() > BOUNDARY_MASS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{FockSpace, StateVector};

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn vacuum_gaussian() {
        let s = FockSpace::new(6).unwrap();
        let rho = StateVector::vacuum(s).to_density();
        let mut work = vec![C64::new(0.0, 0.0); 6];
        for &a in &[C64::new(0.0, 0.0), C64::new(0.4, -0.3), C64::new(-1.0, 0.7)] {
            let w = wigner_at(&rho.rho, a, &mut work);
            let expect = 2.0 / std::f64::consts::PI * (-2.0 * a.norm_sqr()).exp();
            assert!((w - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn coherent_state_is_displaced_gaussian() {
        let s = FockSpace::new(40).unwrap();
        let beta = C64::new(1.1, -0.8);
        let rho = StateVector::coherent(s, beta).unwrap().to_density();
        let mut work = vec![C64::new(0.0, 0.0); 40];
        for &a in &[beta, C64::new(0.5, 0.2), C64::new(1.5, -1.2), C64::new(-0.3, 0.9)] {
            let w = wigner_at(&rho.rho, a, &mut work);
            let expect = 2.0 / std::f64::consts::PI * (-2.0 * (a - beta).norm_sqr()).exp();
            assert!((w - expect).abs() < 1e-10, "{a}: {w} vs {expect}");
        }
    }

    #[test]
    fn fock_one_is_negative_at_origin() {
        let s = FockSpace::new(4).unwrap();
        let rho = StateVector::fock(s, 1).unwrap().to_density();
        let mut work = vec![C64::new(0.0, 0.0); 4];
        let w = wigner_at(&rho.rho, C64::new(0.0, 0.0), &mut work);
        assert!((w + 2.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn grid_normalization_in_rescaled_units() {
        let s = FockSpace::new(40).unwrap();
        let aleph = 4.0;
        let beta = C64::new(2.0, 1.0);
        let rho = StateVector::coherent(s, beta).unwrap().to_density();
        let g = wigner(&rho, &axis(-1.5, 3.0, 121), &axis(-2.0, 2.5, 121), aleph).unwrap();
        assert!((g.integral * aleph - 1.0).abs() < 1e-2);
        assert!(!g.boundary_warning);
        let peaks = g.local_maxima(0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].0 - 1.0).abs() < 0.04 && (peaks[0].1 - 0.5).abs() < 0.04);
        assert!(g.min_value() >= -2.0 / std::f64::consts::PI * (1.0 + 1e-6));
        let small = wigner(&rho, &axis(-0.5, 0.5, 11), &axis(-0.5, 0.5, 11), aleph).unwrap();
        assert!(small.boundary_warning);
    }

    #[test]
    fn lobes_merge_ripples_below_zero_point_width() {
        let xs = axis(-2.0, 2.0, 401);
        let aleph = 5.0;
        // a far-separated pair plus a ripple 0.15 from the left peak
        let bump = |x: f64, y: f64, x0: f64, h: f64| h * (-((x - x0).powi(2) + y * y) / 0.002).exp();
        let values = Array2::from_shape_fn((401, 401), |(iy, ix)| {
            let (x, y) = (xs[ix], xs[iy]);
            bump(x, y, -1.0, 1.0) + bump(x, y, -0.85, 0.9) + bump(x, y, 1.0, 0.5)
        });
        let g = WignerGrid {
            x_axis: xs.clone(),
            y_axis: xs.clone(),
            values,
            aleph,
            integral: 0.0,
            mass_deficit: 0.0,
            boundary_warning: false,
        };
        assert_eq!(g.local_maxima(0.1).len(), 3);
        let lobes = g.lobes(0.1);
        assert_eq!(lobes.len(), 2);
        assert!((lobes[1].0 - 1.0).abs() < 1e-9);
    }
}
