//! Chirality spectrum by the trajectory route (lag correlator of `⟨b⟩`) and
//! by the Liouvillian route (pole sum over eigenmodes), Bogoliubov peak
//! predictions and signed peak extraction.
//!
//! Both routes use the transform kernel `e^{−iΩτ}` and report
//! `ζ(Ω) = Σ_k w_k/(iΩ − λ_k)`, the one-sided transform of
//! `C(τ) = ⟨Y(τ)X(0) − X(τ)Y(0)⟩`. On a trajectory `C(τ) = −G(τ)`. The signed
//! spectrum is `2 Im ζ`; clockwise rotation gives positive peaks at
//! `Ω > 0`.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{x_quadrature, y_quadrature, DensityMatrix, LiouvillianSpectrum};
use crate::model::ModelParams;
use crate::semiclassics::{Chirality, FixedPoint};
use crate::trajectories::TrajectoryRecord;

/// Relative size of the correlator weight the retained modes may miss.
pub const WEIGHT_TAIL_TOL: f64 = 1e-3;
/// Largest admissible `Re λ_k` of a retained mode.
pub const CAUSALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Trajectory,
    Liouvillian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakSign {
    CwPositive,
    CcwNegative,
}

impl PeakSign {
    pub fn from_value(v: f64) -> Self {
        if v >= 0.0 {
            PeakSign::CwPositive
        } else {
            PeakSign::CcwNegative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub omega0: f64,
    /// Half-width at half-maximum.
    pub width: f64,
    pub sign: PeakSign,
    /// Signed area of the fitted Lorentzian; zero for predictions.
    pub weight: f64,
    /// The fit window was cut short by a neighbouring peak.
    pub merged: bool,
}

/// Damping applied to the lag correlator before transforming.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Taper {
    /// Multiply by `e^{−ητ}`.
    Exponential(f64),
    Rectangular,
}

impl Taper {
    /// `η = 4/max_lag`.
    pub fn default_for(max_lag: f64) -> Self {
        Taper::Exponential(4.0 / max_lag)
    }

    pub fn eta(&self) -> f64 {
        match *self {
            Taper::Exponential(eta) => eta,
            Taper::Rectangular => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetadata {
    pub params: Option<ModelParams>,
    pub aleph: Option<f64>,
    pub n_traj: Option<usize>,
    pub n_modes: Option<usize>,
    pub t_burn: Option<f64>,
    pub max_lag: Option<f64>,
    pub dt: Option<f64>,
    pub taper: Option<Taper>,
    /// `Σ_k w_k`, the coefficient of the `1/(iΩ)` tail.
    pub weight_sum: Option<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiralitySpectrum {
    pub omega_axis: Vec<f64>,
    pub zeta: Vec<C64>,
    /// `2 Im ζ`.
    pub signed: Vec<f64>,
    /// Jackknife standard error of `signed`; empty when not estimated.
    pub error: Vec<f64>,
    pub route: Route,
    pub metadata: SpectrumMetadata,
}

impl ChiralitySpectrum {
    fn new(omega_axis: &[f64], zeta: Vec<C64>, route: Route, metadata: SpectrumMetadata) -> Self {
        let signed = zeta.iter().map(|z| 2.0 * z.im).collect();
        ChiralitySpectrum { omega_axis: omega_axis.to_vec(), zeta, signed, error: Vec::new(), route, metadata }
    }

    /// Largest `|signed|` at the two ends of the axis relative to its maximum.
    pub fn tail_ratio(&self) -> f64 {
        let m = self.signed.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m == 0.0 {
            return 0.0;
        }
        let first = self.signed.first().map_or(0.0, |v| v.abs());
        let last = self.signed.last().map_or(0.0, |v| v.abs());
        first.max(last) / m
    }

    /// Columns `omega,re_zeta,im_zeta,signed,error,signed_colmax`; the last
    /// is `signed` over its largest magnitude on this axis, so a sweep of
    /// such files stacks into a column-normalized map.
    pub fn to_csv(&self) -> String {
        let peak = self.signed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        let mut s = String::from("omega,re_zeta,im_zeta,signed,error,signed_colmax\n");
        for (i, w) in self.omega_axis.iter().enumerate() {
            let e = self.error.get(i).copied().unwrap_or(0.0);
            s.push_str(&format!(
                "{w:.10},{:.12e},{:.12e},{:.12e},{e:.6e},{:.9}\n",
                self.zeta[i].re,
                self.zeta[i].im,
                self.signed[i],
                self.signed[i] * scale
            ));
        }
        s
    }
}

/// `G(τ_j) = ⟨Y(t)X(t+τ_j) − X(t)Y(t+τ_j)⟩_t` for `τ_j = j·dt_s ≤ max_lag`,
/// averaged over all sample times `t ≥ t_burn` for which `t + τ_j` is
/// recorded.
pub fn lag_correlator(rec: &TrajectoryRecord, t_burn: f64, max_lag: f64) -> Result<Vec<f64>> {
    if !(max_lag > 0.0 && t_burn >= 0.0) {
        return Err(Error::InvalidParameter(format!("need max_lag > 0 and t_burn ≥ 0, got {max_lag}, {t_burn}")));
    }
    let lags = (max_lag / rec.dt_s).round() as usize;
    let i0 = rec.index_at(t_burn);
    let n = rec.x.len().min(rec.y.len());
    if lags == 0 {
        return Err(Error::InvalidParameter("max_lag shorter than the sampling step".into()));
    }
    if n < i0 + lags + 1 {
        return Err(Error::InsufficientData { required: i0 + lags + 1, available: n });
    }
    let m = n - i0;
    let p = (2 * m).next_power_of_two();
    let mut buf: Vec<C64> = (0..p)
        .map(|i| if i < m { C64::new(rec.x[i0 + i], rec.y[i0 + i]) } else { C64::new(0.0, 0.0) })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(p).process(&mut buf);
    buf.iter_mut().for_each(|z| *z = C64::new(z.norm_sqr(), 0.0));
    planner.plan_fft_inverse(p).process(&mut buf);
    // buf[j]/p = Σ_i z̄_i z_{i+j}, whose imaginary part is Σ (X_i Y_{i+j} − Y_i X_{i+j})
    let mut g: Vec<f64> = (0..=lags).map(|j| -buf[j].im / (p as f64 * (m - j) as f64)).collect();
    g[0] = 0.0;
    Ok(g)
}

/// Trapezoid one-sided transform `dt Σ_j c_j g_j e^{−ητ_j} e^{−iΩτ_j}`.
fn one_sided_transform(g: &[C64], dt: f64, eta: f64, omega_axis: &[f64]) -> Vec<C64> {
    let last = g.len() - 1;
    let damped: Vec<C64> = g
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let c = if j == 0 || j == last { 0.5 } else { 1.0 };
            v * (c * dt * (-eta * j as f64 * dt).exp())
        })
        .collect();
    omega_axis
        .iter()
        .map(|&w| {
            let step = C64::from_polar(1.0, -w * dt);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in damped.iter().enumerate() {
                if j % 256 == 0 {
                    phase = C64::from_polar(1.0, -w * dt * j as f64);
                }
                acc += v * phase;
                phase *= step;
            }
            acc
        })
        .collect()
}

/// Trajectory-route spectrum averaged over `records`, with a jackknife
/// error band on the signed spectrum.
pub fn zeta_from_trajectories(
    records: &[TrajectoryRecord],
    t_burn: f64,
    max_lag: f64,
    taper: Taper,
    omega_axis: &[f64],
) -> Result<ChiralitySpectrum> {
    let first = records.first().ok_or(Error::InsufficientData { required: 1, available: 0 })?;
    let dt = first.dt_s;
    if records.iter().any(|r| (r.dt_s - dt).abs() > 1e-12 * dt) {
        return Err(Error::InvalidParameter("records use different sampling steps".into()));
    }
    let per: Vec<Vec<C64>> = records
        .par_iter()
        .enumerate()
        .map(|(idx, rec)| {
            let g = lag_correlator(rec, t_burn, max_lag).map_err(|e| Error::Trajectory { index: idx, source: Box::new(e) })?;
            let c: Vec<C64> = g.iter().map(|v| C64::new(-v, 0.0)).collect();
            Ok(one_sided_transform(&c, dt, taper.eta(), omega_axis))
        })
        .collect::<Result<_>>()?;
    let r = per.len() as f64;
    let nw = omega_axis.len();
    let mut zeta = vec![C64::new(0.0, 0.0); nw];
    for z in &per {
        for i in 0..nw {
            zeta[i] += z[i] / r;
        }
    }
    let metadata = SpectrumMetadata {
        n_traj: Some(records.len()),
        t_burn: Some(t_burn),
        max_lag: Some(max_lag),
        dt: Some(dt),
        taper: Some(taper),
        ..Default::default()
    };
    let mut out = ChiralitySpectrum::new(omega_axis, zeta, Route::Trajectory, metadata);
    if per.len() >= 2 {
        out.error = (0..nw)
            .map(|i| {
                let loo: Vec<f64> = per.iter().map(|z| (r * out.signed[i] - 2.0 * z[i].im) / (r - 1.0)).collect();
                let mean = loo.iter().sum::<f64>() / r;
                ((r - 1.0) / r * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
            })
            .collect();
    }
    Ok(out)
}

fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn overlap(l: &Array2<C64>, b: &Array2<C64>) -> C64 {
    l.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `w_k = Tr[Y r_k] Tr[ℓ_k† X ρ₀] − Tr[X r_k] Tr[ℓ_k† Y ρ₀]` for every
/// retained mode (including `k = 0`, whose weight vanishes).
pub fn chirality_weights(spec: &LiouvillianSpectrum, rho0: &DensityMatrix) -> Result<Vec<C64>> {
    if rho0.space != spec.space {
        return Err(Error::InvalidParameter("state and spectrum use different Fock spaces".into()));
    }
    let x = x_quadrature(spec.space).elements;
    let y = y_quadrature(spec.space).elements;
    let xr = x.dot(&rho0.rho);
    let yr = y.dot(&rho0.rho);
    Ok(spec
        .right_ops
        .iter()
        .zip(&spec.left_ops)
        .map(|(r, l)| trace_product(&y, r) * overlap(l, &xr) - trace_product(&x, r) * overlap(l, &yr))
        .collect())
}

struct Poles {
    lambda: Vec<C64>,
    weights: Vec<C64>,
    weight_sum: C64,
}

fn checked_poles(spec: &LiouvillianSpectrum, rho0: &DensityMatrix) -> Result<Poles> {
    if spec.len() < 2 {
        return Err(Error::InsufficientModes { excluded: f64::INFINITY, included: 0.0 });
    }
    if spec.eigenvalues[0].norm() > 1e-8 {
        return Err(Error::Numerical(format!("leading mode {} is not the steady state", spec.eigenvalues[0])));
    }
    if let Some(bad) = spec.eigenvalues.iter().find(|l| l.re > CAUSALITY_TOL) {
        return Err(Error::Numerical(format!("mode with Re λ = {} > 0 breaks causality", bad.re)));
    }
    let w = chirality_weights(spec, rho0)?;
    let weights: Vec<C64> = w[1..].to_vec();
    let lambda: Vec<C64> = spec.eigenvalues[1..].to_vec();
    let weight_sum: C64 = weights.iter().sum();
    // the full correlator at zero lag is ⟨[Y, X]⟩
    let x = x_quadrature(spec.space).elements;
    let y = y_quadrature(spec.space).elements;
    let comm = y.dot(&x) - x.dot(&y);
    let c0 = trace_product(&comm, &rho0.rho);
    let included: f64 = weights.iter().map(|z| z.norm()).sum();
    let excluded = (c0 - weight_sum).norm();
    if excluded > WEIGHT_TAIL_TOL * included.max(c0.norm()) {
        return Err(Error::InsufficientModes { excluded, included });
    }
    Ok(Poles { lambda, weights, weight_sum })
}

/// Operator ordering of the Liouvillian-route correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    /// `C(τ) = ⟨Y(τ)X(0) − X(τ)Y(0)⟩` with the product order as written.
    AsWritten,
    /// `Re C(τ)`, the symmetrized product. Its signed spectrum is odd in `Ω`,
    /// like the trajectory route; the even remainder comes from `Im C`.
    Symmetrized,
}

impl Poles {
    fn ordered(self, ordering: Ordering) -> Self {
        match ordering {
            Ordering::AsWritten => self,
            Ordering::Symmetrized => {
                let lambda = self.lambda.iter().flat_map(|l| [*l, l.conj()]).collect();
                let weights = self.weights.iter().flat_map(|w| [0.5 * w, 0.5 * w.conj()]).collect();
                Poles { lambda, weights, weight_sum: C64::new(self.weight_sum.re, 0.0) }
            }
        }
    }
}

/// Pole sum `ζ(Ω) = Σ_{k>0} w_k/(iΩ − λ_k)` on `omega_axis`.
pub fn zeta_from_liouvillian(
    spec: &LiouvillianSpectrum,
    rho0: &DensityMatrix,
    omega_axis: &[f64],
) -> Result<ChiralitySpectrum> {
    zeta_from_liouvillian_ordered(spec, rho0, omega_axis, Ordering::AsWritten)
}

pub fn zeta_from_liouvillian_ordered(
    spec: &LiouvillianSpectrum,
    rho0: &DensityMatrix,
    omega_axis: &[f64],
    ordering: Ordering,
) -> Result<ChiralitySpectrum> {
    let poles = checked_poles(spec, rho0)?.ordered(ordering);
    let zeta = omega_axis
        .iter()
        .map(|&w| poles.lambda.iter().zip(&poles.weights).map(|(l, wk)| wk / (C64::new(0.0, w) - l)).sum())
        .collect();
    let metadata = SpectrumMetadata { n_modes: Some(spec.len()), weight_sum: Some(poles.weight_sum), ..Default::default() };
    Ok(ChiralitySpectrum::new(omega_axis, zeta, Route::Liouvillian, metadata))
}

/// Liouvillian-route spectrum passed through the same discrete estimator as
/// the trajectory route: `C(τ) = Σ w_k e^{λ_k τ}` sampled at step `dt` up to
/// `max_lag`, tapered and transformed by the trapezoid rule.
pub fn zeta_from_liouvillian_windowed(
    spec: &LiouvillianSpectrum,
    rho0: &DensityMatrix,
    omega_axis: &[f64],
    dt: f64,
    max_lag: f64,
    taper: Taper,
) -> Result<ChiralitySpectrum> {
    zeta_from_liouvillian_windowed_ordered(spec, rho0, omega_axis, dt, max_lag, taper, Ordering::AsWritten)
}

pub fn zeta_from_liouvillian_windowed_ordered(
    spec: &LiouvillianSpectrum,
    rho0: &DensityMatrix,
    omega_axis: &[f64],
    dt: f64,
    max_lag: f64,
    taper: Taper,
    ordering: Ordering,
) -> Result<ChiralitySpectrum> {
    if !(dt > 0.0 && max_lag >= dt) {
        return Err(Error::InvalidParameter(format!("need 0 < dt ≤ max_lag, got {dt}, {max_lag}")));
    }
    let poles = checked_poles(spec, rho0)?.ordered(ordering);
    let lags = (max_lag / dt).round() as usize;
    let c: Vec<C64> = (0..=lags)
        .map(|j| {
            let t = j as f64 * dt;
            poles.lambda.iter().zip(&poles.weights).map(|(l, wk)| wk * (l * t).exp()).sum()
        })
        .collect();
    let zeta = one_sided_transform(&c, dt, taper.eta(), omega_axis);
    let metadata = SpectrumMetadata {
        n_modes: Some(spec.len()),
        max_lag: Some(max_lag),
        dt: Some(dt),
        taper: Some(taper),
        weight_sum: Some(poles.weight_sum),
        ..Default::default()
    };
    Ok(ChiralitySpectrum::new(omega_axis, zeta, Route::Liouvillian, metadata))
}

/// One peak per attractor at `|Im μ|` with half-width `|Re μ|` of its
/// Bogoliubov eigenvalues `μ`, signed by the rotation sense. Non-spiraling
/// attractors sit at `Ω = 0` with the slower decay rate as width.
pub fn bogoliubov_prediction(fps: &[FixedPoint]) -> Vec<SpectralPeak> {
    fps.iter()
        .filter(|fp| fp.is_attractor())
        .map(|fp| {
            let [e0, e1] = fp.eigenvalues;
            let j = fp.jacobian;
            let sign = match fp.chirality {
                Chirality::CW => PeakSign::CwPositive,
                Chirality::CCW => PeakSign::CcwNegative,
                _ if j[1][0] - j[0][1] > 0.0 => PeakSign::CcwNegative,
                _ => PeakSign::CwPositive,
            };
            SpectralPeak {
                omega0: e0.im.abs(),
                width: e0.re.abs().min(e1.re.abs()),
                sign,
                weight: 0.0,
                merged: false,
            }
        })
        .collect()
}

/// Fraction of the peak height down to which fit windows extend.
const FIT_FLOOR: f64 = 0.3;

fn lorentzian_sum(params: &[f64], w: f64) -> f64 {
    params.chunks(3).map(|p| p[0] * p[2] * p[2] / ((w - p[1]).powi(2) + p[2] * p[2])).sum()
}

/// Levenberg–Marquardt fit of a sum of Lorentzians `A γ²/((Ω−Ω₀)² + γ²)`,
/// parameters packed as `(A, Ω₀, γ)` triples.
fn fit_lorentzians(xs: &[f64], ys: &[f64], init: &[f64]) -> Option<Vec<f64>> {
    let np = init.len();
    let cost = |p: &[f64]| xs.iter().zip(ys).map(|(&x, &y)| (lorentzian_sum(p, x) - y).powi(2)).sum::<f64>();
    let mut p = init.to_vec();
    let mut c = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let mut jtj = Array2::<f64>::zeros((np, np));
        let mut jtr = Array1::<f64>::zeros(np);
        for (&x, &y) in xs.iter().zip(ys) {
            let r = lorentzian_sum(&p, x) - y;
            let mut row = vec![0.0; np];
            for (k, q) in p.chunks(3).enumerate() {
                let (a, w0, g) = (q[0], q[1], q[2]);
                let d = (x - w0).powi(2) + g * g;
                row[3 * k] = g * g / d;
                row[3 * k + 1] = 2.0 * a * g * g * (x - w0) / (d * d);
                row[3 * k + 2] = 2.0 * a * g * (x - w0).powi(2) / (d * d);
            }
            for i in 0..np {
                jtr[i] += row[i] * r;
                for k in 0..np {
                    jtj[(i, k)] += row[i] * row[k];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            let Ok(step) = a.solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(v, s)| v - s).collect();
            let ct = cost(&trial);
            if ct.is_finite() && ct < c && trial.chunks(3).all(|q| q[2] > 0.0) {
                let rel = (c - ct) / c.max(1e-300);
                p = trial;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-14 {
                    return Some(p);
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    p.iter().all(|v| v.is_finite()).then_some(p)
}

/// Signed peaks of `spectrum.signed`: interior extrema whose magnitude is at
/// least `threshold` times the largest, each refined by a Lorentzian fit.
/// All peaks are refined jointly; a peak whose window runs into a
/// neighbour before dropping to half height is flagged `merged`.
pub fn extract_peaks(spectrum: &ChiralitySpectrum, threshold: f64) -> Vec<SpectralPeak> {
    let (xs, ys) = (&spectrum.omega_axis, &spectrum.signed);
    let n = ys.len();
    let vmax = ys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if n < 3 || vmax == 0.0 {
        return Vec::new();
    }
    struct Cand {
        lo: usize,
        hi: usize,
        init: [f64; 3],
        merged: bool,
    }
    let mut cands = Vec::new();
    for i in 1..n - 1 {
        let v = ys[i];
        let s = v.signum();
        if v == 0.0 || v.abs() < threshold * vmax || s * ys[i - 1] > v.abs() || s * ys[i + 1] >= v.abs() {
            continue;
        }
        // walk down each flank while the magnitude keeps falling
        let mut hit_half = [false; 2];
        let mut lo = i;
        while lo > 0 && s * ys[lo - 1] < s * ys[lo] && s * ys[lo - 1] > FIT_FLOOR * v.abs() {
            lo -= 1;
        }
        let mut hi = i;
        while hi + 1 < n && s * ys[hi + 1] < s * ys[hi] && s * ys[hi + 1] > FIT_FLOOR * v.abs() {
            hi += 1;
        }
        let half_width = |k: usize, side: usize, hit: &mut [bool; 2]| -> Option<f64> {
            let (a, b) = if side == 0 { (k, k.checked_sub(1)?) } else { (k, (k + 1 < n).then_some(k + 1)?) };
            let (ya, yb) = (s * ys[a], s * ys[b]);
            if yb <= 0.5 * v.abs() && ya >= 0.5 * v.abs() {
                hit[side] = true;
                let t = (ya - 0.5 * v.abs()) / (ya - yb);
                Some((xs[a] + t * (xs[b] - xs[a]) - xs[i]).abs())
            } else {
                None
            }
        };
        let mut widths = Vec::new();
        for k in (lo..=i).rev() {
            if let Some(wd) = half_width(k, 0, &mut hit_half) {
                widths.push(wd);
                break;
            }
        }
        for k in i..=hi {
            if let Some(wd) = half_width(k, 1, &mut hit_half) {
                widths.push(wd);
                break;
            }
        }
        let spacing = 0.5 * (xs[(i + 1).min(n - 1)] - xs[i - 1]).abs();
        let g0 = if widths.is_empty() {
            (xs[hi] - xs[lo]).abs().max(spacing) * 0.5
        } else {
            widths.iter().sum::<f64>() / widths.len() as f64
        };
        // parabolic vertex for the initial centre
        let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
        let den = y0 - 2.0 * y1 + y2;
        let shift = if den != 0.0 { (0.5 * (y0 - y2) / den).clamp(-0.5, 0.5) } else { 0.0 };
        let w0 = xs[i] + shift * (xs[i + 1] - xs[i - 1]) * 0.5;
        let fell_to_floor = |k: usize| s * ys[k] <= FIT_FLOOR * v.abs();
        let cut_lo = lo > 0 && !fell_to_floor(lo - 1) && !hit_half[0];
        let cut_hi = hi + 1 < n && !fell_to_floor(hi + 1) && !hit_half[1];
        cands.push(Cand { lo: lo.saturating_sub(1), hi: (hi + 1).min(n - 1), init: [v, w0, g0.max(spacing * 0.25)], merged: cut_lo || cut_hi });
    }
    if cands.is_empty() {
        return Vec::new();
    }
    // individual fits, then a joint refinement over the union of windows
    let mut params = Vec::with_capacity(3 * cands.len());
    for c in &cands {
        let fit = fit_lorentzians(&xs[c.lo..=c.hi], &ys[c.lo..=c.hi], &c.init).unwrap_or(c.init.to_vec());
        params.extend(fit);
    }
    let mut mask = vec![false; n];
    for c in &cands {
        let span = c.hi - c.lo;
        for m in mask.iter_mut().take((c.hi + span).min(n - 1) + 1).skip(c.lo.saturating_sub(span)) {
            *m = true;
        }
    }
    let (jx, jy): (Vec<f64>, Vec<f64>) = (0..n).filter(|&k| mask[k]).map(|k| (xs[k], ys[k])).unzip();
    if let Some(joint) = fit_lorentzians(&jx, &jy, &params) {
        let sane = joint.chunks(3).zip(&cands).all(|(q, c)| {
            q[2] > 0.0 && q[1] >= xs[c.lo].min(xs[c.hi]) && q[1] <= xs[c.lo].max(xs[c.hi]) && q[0].signum() == c.init[0].signum()
        });
        if sane {
            params = joint;
        }
    }
    let mut peaks: Vec<SpectralPeak> = params
        .chunks(3)
        .zip(&cands)
        .map(|(q, c)| SpectralPeak {
            omega0: q[1],
            width: q[2].abs(),
            sign: PeakSign::from_value(q[0]),
            weight: std::f64::consts::PI * q[0] * q[2].abs(),
            merged: c.merged,
        })
        .collect();
    peaks.sort_by(|a, b| a.omega0.total_cmp(&b.omega0));
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{liouvillian, liouvillian_spectrum, steady_state, FockSpace};

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn record(x: Vec<f64>, y: Vec<f64>, dt: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            seed: 0,
            dt_s: dt,
            times: (0..x.len()).map(|k| k as f64 * dt).collect(),
            x,
            y,
            n: Vec::new(),
            b2: Vec::new(),
            jump_times: Vec::new(),
            final_norm_check: 1.0,
        }
    }

    fn circle(omega: f64, dt: f64, n: usize) -> TrajectoryRecord {
        let t = |k: usize| k as f64 * dt;
        record((0..n).map(|k| (omega * t(k)).cos()).collect(), (0..n).map(|k| (omega * t(k)).sin()).collect(), dt)
    }

    #[test]
    fn circular_signal_correlator() {
        let (omega, dt) = (1.3, 0.05);
        let rec = circle(omega, dt, 20_000);
        let g = lag_correlator(&rec, 0.0, 10.0).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        for (j, v) in g.iter().enumerate() {
            assert!((v + (omega * j as f64 * dt).sin()).abs() < 1e-9, "{j}: {v}");
        }
    }

    #[test]
    fn correlator_matches_direct_sum() {
        let n = 500;
        let x: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|k| ((k * 104729) % 97) as f64 / 48.0 - 1.0).collect();
        let rec = record(x.clone(), y.clone(), 0.1);
        let g = lag_correlator(&rec, 2.0, 3.0).unwrap();
        let i0 = 20;
        for j in 1..=30 {
            let m = n - i0 - j;
            let direct: f64 = (i0..i0 + m).map(|i| y[i] * x[i + j] - x[i] * y[i + j]).sum::<f64>() / m as f64;
            assert!((g[j] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn short_record_is_rejected() {
        let rec = circle(1.0, 0.1, 50);
        match lag_correlator(&rec, 2.0, 4.0) {
            Err(Error::InsufficientData { required, available }) => assert_eq!((required, available), (61, 50)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn white_noise_has_no_chirality() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let x = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let y = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let g = lag_correlator(&record(x, y, 0.1), 0.0, 5.0).unwrap();
        // each lag has standard error ≈ (1/12)·√2/√n
        assert!(g.iter().all(|v| v.abs() < 5.0 * (2.0f64).sqrt() / 12.0 / (n as f64).sqrt()));
    }

    #[test]
    fn counterclockwise_circle_gives_negative_peak() {
        let (omega, dt) = (2.0, 0.02);
        let recs = vec![circle(omega, dt, 40_000), circle(omega, dt, 40_000)];
        let ax = axis(0.0, 4.0, 401);
        let z = zeta_from_trajectories(&recs, 0.0, 40.0, Taper::default_for(40.0), &ax).unwrap();
        let peaks = extract_peaks(&z, 0.2);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].sign, PeakSign::CcwNegative);
        assert!((peaks[0].omega0 - omega).abs() < 0.01);
        assert!(z.error.iter().all(|e| *e < 1e-9));
    }

    #[test]
    fn linear_cavity_trajectories_carry_no_chirality() {
        // jumps leave coherent states unchanged, so ⟨b⟩ sits at β₀ forever
        use crate::hilbert::StateVector;
        use crate::trajectories::{run_ensemble, EnsembleSpec};
        let (delta, kappa, f) = (0.8, 0.1, 0.3);
        let p = ModelParams::new(delta, 0.0, 0.0, f, 0.0, kappa).unwrap();
        let beta0 = C64::new(0.0, f) / C64::new(-kappa / 2.0, delta);
        let space = FockSpace::new(12).unwrap();
        let spec = EnsembleSpec {
            t_burn: 0.0,
            t_total: 60.0,
            initial_state: StateVector::coherent(space, beta0).unwrap(),
            ..EnsembleSpec::new(space, kappa, 4)
        };
        let recs = run_ensemble(&spec, &p).unwrap();
        assert!(recs.iter().any(|r| !r.jump_times.is_empty()));
        let z = zeta_from_trajectories(&recs, 0.0, 20.0, Taper::default_for(20.0), &axis(0.0, 2.0, 41)).unwrap();
        assert!(z.signed.iter().all(|v| v.abs() < 1e-8), "{:?}", z.signed);
    }

    #[test]
    fn linear_cavity_pole_sum() {
        let (delta, kappa) = (0.8, 0.1);
        let p = ModelParams::new(delta, 0.0, 0.0, 0.0, 0.0, kappa).unwrap();
        let l = liouvillian(&p, FockSpace::new(6).unwrap());
        let spec = liouvillian_spectrum(&l, 36).unwrap();
        let rho = steady_state(&l).unwrap();
        let ax = axis(-2.0, 2.0, 2001);
        let z = zeta_from_liouvillian(&spec, &rho, &ax).unwrap();
        let sum = z.metadata.weight_sum.unwrap();
        assert!((sum - C64::new(0.0, -0.5)).norm() < 1e-10);
        for (w, v) in ax.iter().zip(&z.signed) {
            let exact = -(kappa / 2.0) / ((w - delta).powi(2) + kappa * kappa / 4.0);
            assert!((v - exact).abs() < 1e-9 * exact.abs().max(1.0));
        }
        let peaks = extract_peaks(&z, 0.1);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].sign, PeakSign::CcwNegative);
        assert!((peaks[0].omega0 - delta).abs() < 1e-6);
        assert!((peaks[0].width / (kappa / 2.0) - 1.0).abs() < 1e-3);
        // 1/Ω tail with coefficient Σ w_k
        let big = 1e4;
        let zb = zeta_from_liouvillian(&spec, &rho, &[big]).unwrap().zeta[0];
        assert!((zb * C64::new(0.0, big) - sum).norm() < 1e-4);
    }

    #[test]
    fn symmetrized_linear_cavity_is_odd() {
        let (delta, kappa) = (0.8, 0.1);
        let p = ModelParams::new(delta, 0.0, 0.0, 0.0, 0.0, kappa).unwrap();
        let l = liouvillian(&p, FockSpace::new(6).unwrap());
        let spec = liouvillian_spectrum(&l, 36).unwrap();
        let rho = steady_state(&l).unwrap();
        let ax = axis(-2.0, 2.0, 401);
        let z = zeta_from_liouvillian_ordered(&spec, &rho, &ax, Ordering::Symmetrized).unwrap();
        let lor = |x: f64| (kappa / 2.0) / (x * x + kappa * kappa / 4.0);
        for (w, v) in ax.iter().zip(&z.signed) {
            let exact = 0.5 * (lor(w + delta) - lor(w - delta));
            assert!((v - exact).abs() < 1e-9 * exact.abs().max(1.0), "{w} {v} {exact}");
        }
        let peaks: Vec<_> = extract_peaks(&z, 0.1).into_iter().filter(|p| p.omega0 > 0.0).collect();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].sign, PeakSign::CcwNegative);
    }

    #[test]
    fn windowed_variant_converges_to_pole_sum() {
        let p = ModelParams::new(0.8, 0.0, 0.0, 0.3, 0.0, 0.5).unwrap();
        let l = liouvillian(&p, FockSpace::new(12).unwrap());
        let spec = liouvillian_spectrum(&l, 144).unwrap();
        let rho = steady_state(&l).unwrap();
        let ax = axis(0.0, 2.0, 41);
        let exact = zeta_from_liouvillian(&spec, &rho, &ax).unwrap();
        let win = zeta_from_liouvillian_windowed(&spec, &rho, &ax, 0.005, 80.0, Taper::Rectangular).unwrap();
        for (a, b) in exact.zeta.iter().zip(&win.zeta) {
            assert!((a - b).norm() < 1e-4 * a.norm().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn truncated_mode_set_is_rejected() {
        let p = ModelParams::new(0.8, 0.3, 0.1, 0.3, 0.0, 0.5).unwrap();
        let l = liouvillian(&p, FockSpace::new(14).unwrap());
        let rho = steady_state(&l).unwrap();
        let mut spec = liouvillian_spectrum(&l, 196).unwrap();
        assert!(zeta_from_liouvillian(&spec, &rho, &[0.5]).is_ok());
        spec.eigenvalues.truncate(3);
        spec.right_ops.truncate(3);
        spec.left_ops.truncate(3);
        assert!(matches!(zeta_from_liouvillian(&spec, &rho, &[0.5]), Err(Error::InsufficientModes { .. })));
    }

    fn synthetic(ax: &[f64], peaks: &[(f64, f64, f64)]) -> ChiralitySpectrum {
        let zeta = ax
            .iter()
            .map(|&w| C64::new(0.0, 0.5 * peaks.iter().map(|&(a, c, g)| a * g * g / ((w - c).powi(2) + g * g)).sum::<f64>()))
            .collect();
        ChiralitySpectrum::new(ax, zeta, Route::Liouvillian, SpectrumMetadata::default())
    }

    #[test]
    fn single_lorentzian_recovered() {
        let ax = axis(0.0, 3.0, 301);
        let z = synthetic(&ax, &[(2.5, 1.234, 0.07)]);
        let p = extract_peaks(&z, 0.1);
        assert_eq!(p.len(), 1);
        assert!((p[0].omega0 - 1.234).abs() < 0.01 * 1.234);
        assert!((p[0].width - 0.07).abs() < 0.01 * 0.07);
        assert!(!p[0].merged);
    }

    #[test]
    fn separated_lorentzians_recovered() {
        let ax = axis(0.0, 3.0, 601);
        let truth = [(1.0, 1.0, 0.08), (-0.7, 1.32, 0.08)];
        let z = synthetic(&ax, &truth);
        let p = extract_peaks(&z, 0.1);
        assert_eq!(p.len(), 2);
        for (q, t) in p.iter().zip(&truth) {
            assert_eq!(q.sign, PeakSign::from_value(t.0));
            assert!((q.omega0 - t.1).abs() < 0.01 * t.1, "{q:?}");
            assert!((q.width - t.2).abs() < 0.01 * t.2, "{q:?}");
        }
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let ax = axis(0.0, 1.0, 50);
        let flat = ChiralitySpectrum::new(&ax, vec![C64::new(0.3, 0.2); 50], Route::Trajectory, SpectrumMetadata::default());
        assert!(extract_peaks(&flat, 0.1).is_empty());
        let zero = ChiralitySpectrum::new(&ax, vec![C64::new(0.0, 0.0); 50], Route::Trajectory, SpectrumMetadata::default());
        assert!(extract_peaks(&zero, 0.1).is_empty());
    }

    #[test]
    fn bogoliubov_linear_cavity() {
        let p = ModelParams::new(0.8, 0.0, 0.0, 0.0, 0.0, 0.1).unwrap();
        let fps = crate::semiclassics::fixed_points(&p).unwrap();
        let peaks = bogoliubov_prediction(&fps);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].omega0 - 0.8).abs() < 1e-12 && (peaks[0].width - 0.05).abs() < 1e-12);
        assert_eq!(peaks[0].sign, PeakSign::CcwNegative);
    }

    #[test]
    fn bogoliubov_three_alpha_has_two_cw_peaks() {
        let p = ModelParams::new(0.7, 1.0, 0.4, 0.5, 0.0, 0.1).unwrap();
        let fps = crate::semiclassics::fixed_points(&p).unwrap();
        let peaks = bogoliubov_prediction(&fps);
        assert_eq!(peaks.len(), 2);
        assert!(peaks.iter().all(|q| q.sign == PeakSign::CwPositive && q.width > 0.0));
    }
}
