use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::poly::Poly;
use super::stability::{classify, eigenvalues, linearize, Chirality, FpClass, Jacobian};
use super::gpe_rhs;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Maximum `|dβ/dt|` accepted at a reported fixed point.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Relative width of the stability band, in units of κ, inside which a fixed
/// point is reported as marginal.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub beta0: C64,
    pub n0: f64,
    pub jacobian: Jacobian,
    pub eigenvalues: [C64; 2],
    pub fp_class: FpClass,
    pub chirality: Chirality,
    pub residual: f64,
}

impl FixedPoint {
    pub fn from_beta(beta0: C64, p: &ModelParams) -> Self {
        let jacobian = linearize(beta0, p);
        let (fp_class, chirality) = classify(&jacobian, DEGENERACY_TOL * p.kappa);
        FixedPoint {
            beta0,
            n0: beta0.norm_sqr(),
            jacobian,
            eigenvalues: eigenvalues(&jacobian),
            fp_class,
            chirality,
            residual: gpe_rhs(beta0, p).norm(),
        }
    }

    pub fn is_attractor(&self) -> bool {
        self.fp_class == FpClass::Attractor
    }

    pub fn is_saddle(&self) -> bool {
        self.fp_class == FpClass::Saddle
    }
}

/// The stationarity condition reduced to a polynomial in `n = |β|²`.
///
/// Eliminating β and β* from `Aβ + Gβ* = −F e^{−iφ}` and its conjugate
/// (`A = −Δ − iκ/2 + Un`) gives `β(n) = (G f* − A* f)/(|A|² − G²)` with
/// `f = F e^{−iφ}`; imposing `|β(n)|² = n` yields
///
/// ```text
/// n (a² + κ²/4 − G²)² − F² [G² + a² + κ²/4 − 2G(a cos2φ + (κ/2) sin2φ)] = 0,
/// ```
///
/// with `a = Un − Δ`; degree 5 for `U ≠ 0`.
pub fn stationary_polynomial(p: &ModelParams) -> Poly {
    let a = Poly::linear(-p.delta, p.u);
    let q = p.kappa * p.kappa / 4.0;
    let a2 = a.mul(&a);
    let d = a2.add(&Poly::constant(q - p.g * p.g));
    let rhs = Poly::linear(0.0, 1.0).mul(&d.mul(&d));
    let (s2, c2) = (2.0 * p.phi).sin_cos();
    let lhs = a2
        .add(&Poly::constant(p.g * p.g + q))
        .add(&a.scale(-2.0 * p.g * c2))
        .add(&Poly::constant(-p.g * p.kappa * s2))
        .scale(p.f * p.f);
    rhs.add(&lhs.scale(-1.0))
}

/// Reconstructs β from a root `n` of the stationary polynomial, or `None`
/// when the 2×2 elimination system is singular at that `n`.
fn beta_from_n(n: f64, p: &ModelParams) -> Option<C64> {
    let a = C64::new(p.u * n - p.delta, -0.5 * p.kappa);
    let det = a.norm_sqr() - p.g * p.g;
    let scale = a.norm_sqr() + p.g * p.g;
    if det.abs() <= 1e-9 * scale.max(1e-300) {
        return None;
    }
    let f = p.drive();
    Some((f.conj() * p.g - a.conj() * f) / det)
}

/// Damped Newton iteration on the real 2D stationary system. Returns the
/// polished point and its residual.
pub fn newton_polish(mut beta: C64, p: &ModelParams, max_iter: usize) -> (C64, f64) {
    let mut r = gpe_rhs(beta, p);
    let mut res = r.norm();
    for _ in 0..max_iter {
        if res < 1e-14 * (1.0 + beta.norm()) {
            break;
        }
        let j = linearize(beta, p);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = -(j[1][1] * r.re - j[0][1] * r.im) / det;
        let dy = -(-j[1][0] * r.re + j[0][0] * r.im) / det;
        let step = C64::new(dx, dy);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = beta + step * lambda;
            let rt = gpe_rhs(trial, p);
            if rt.norm() < res || lambda < 1e-6 {
                beta = trial;
                r = rt;
                res = rt.norm();
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted || step.norm() * lambda <= 1e-16 * (1.0 + beta.norm()) {
            break;
        }
    }
    (beta, res)
}

fn push_unique(out: &mut Vec<C64>, beta: C64) {
    let tol = 1e-8 * (1.0 + beta.norm());
    if out.iter().all(|b| (b - beta).norm() > tol) {
        out.push(beta);
    }
}

/// Solutions on the circle `|β|² = n` when the elimination system is
/// singular there: seeds around the circle, Newton-polished in 2D.
fn circle_fallback(n: f64, p: &ModelParams, out: &mut Vec<C64>) {
    let r = n.max(0.0).sqrt();
    for k in 0..64 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
        let (b, res) = newton_polish(C64::from_polar(r, th), p, 100);
        if res < RESIDUAL_TOL && (b.norm_sqr() - n).abs() <= 1e-6 * n.max(1.0) {
            push_unique(out, b);
        }
    }
}

/// Nonzero occupations `n = (Δ ± √(G² − κ²/4))/U` of the parametric
/// branches without coherent drive, where the polynomial factors as `n·D(n)²`.
fn undriven_roots(p: &ModelParams) -> Vec<C64> {
    let disc = p.g * p.g - 0.25 * p.kappa * p.kappa;
    if p.u == 0.0 || disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    [p.delta - s, p.delta + s].iter().map(|&x| C64::new(x / p.u, 0.0)).collect()
}

/// All fixed points of the mean-field flow, sorted by occupation `n0`.
///
/// Every returned point satisfies `|dβ/dt| <` [`RESIDUAL_TOL`].
pub fn fixed_points(p: &ModelParams) -> Result<Vec<FixedPoint>> {
    p.validate()?;
    let poly = stationary_polynomial(p);
    let mut betas: Vec<C64> = Vec::new();
    let mut failures: Vec<(f64, f64)> = Vec::new();

    if p.f == 0.0 {
        betas.push(C64::new(0.0, 0.0));
    }

    let roots = if p.f == 0.0 { undriven_roots(p) } else { poly.roots()? };
    for z in roots {
        let scale = z.re.abs().max(1.0);
        if z.im.abs() > 1e-6 * scale {
            continue;
        }
        let n = if p.f == 0.0 { z.re } else { poly.polish(z.re, 50) };
        if n < -1e-9 * scale {
            continue;
        }
        let n = n.max(0.0);
        if p.f == 0.0 && n <= 1e-12 {
            continue;
        }
        let direct = if p.f == 0.0 { None } else { beta_from_n(n, p) };
        match direct {
            Some(b) => {
                let (b, res) = newton_polish(b, p, 50);
                if res < RESIDUAL_TOL {
                    push_unique(&mut betas, b);
                } else {
                    let before = betas.len();
                    circle_fallback(n, p, &mut betas);
                    if betas.len() == before {
                        failures.push((n, res));
                    }
                }
            }
            None => circle_fallback(n, p, &mut betas),
        }
    }

    if betas.is_empty() {
        let detail = failures
            .iter()
            .map(|(n, r)| format!("n={n:.6e} residual={r:.3e}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Numerical(format!(
            "no fixed point polished below {RESIDUAL_TOL:e} for {p:?} [{detail}]"
        )));
    }

    let mut fps: Vec<FixedPoint> = betas.into_iter().map(|b| FixedPoint::from_beta(b, p)).collect();
    fps.sort_by(|a, b| a.n0.total_cmp(&b.n0).then(a.beta0.im.total_cmp(&b.beta0.im)));
    Ok(fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64, f: f64) -> ModelParams {
        ModelParams::new(delta, 1.0, 0.4, f, 0.0, 0.1).unwrap()
    }

    #[test]
    fn undriven_origin_only() {
        for &delta in &[-2.0, 0.0, 0.1] {
            let p = ModelParams::new(delta, 1.0, 0.0, 0.0, 0.0, 0.1).unwrap();
            let fps = fixed_points(&p).unwrap();
            assert_eq!(fps.len(), 1, "delta {delta}");
            assert_eq!(fps[0].beta0, C64::new(0.0, 0.0));
            assert!(fps[0].is_attractor());
        }
    }

    #[test]
    fn linear_cavity_matches_closed_form() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.1).unwrap();
        let fps = fixed_points(&p).unwrap();
        assert_eq!(fps.len(), 1);
        let expected = C64::new(1.0, 0.0) / C64::new(1.0, 0.05);
        assert!((fps[0].beta0 - expected).norm() < 1e-12);
        assert!(gpe_rhs(expected, &p).norm() < 1e-12);
    }

    #[test]
    fn bistable_point_has_two_cw_attractors() {
        let fps = fixed_points(&params(0.7, 0.5)).unwrap();
        let attr: Vec<_> = fps.iter().filter(|f| f.is_attractor()).collect();
        let sad = fps.iter().filter(|f| f.is_saddle()).count();
        assert_eq!((attr.len(), sad), (2, 1));
        assert!(attr.iter().all(|f| f.chirality == Chirality::CW));
    }

    #[test]
    fn opposite_chirality_point() {
        let fps = fixed_points(&params(3.3, 1.5)).unwrap();
        let mut chir: Vec<_> =
            fps.iter().filter(|f| f.is_attractor()).map(|f| f.chirality).collect();
        chir.sort_by_key(|c| *c as u8);
        assert_eq!(fps.len(), 3);
        assert_eq!(chir, vec![Chirality::CW, Chirality::CCW]);
    }

    #[test]
    fn residuals_and_occupations() {
        for &(d, f) in &[(0.7, 0.5), (3.3, 1.5), (4.0, 0.2), (-1.0, 2.0), (2.5, 0.0)] {
            for fp in fixed_points(&params(d, f)).unwrap() {
                assert!(fp.residual < RESIDUAL_TOL);
                assert_eq!(fp.n0, fp.beta0.norm_sqr());
            }
        }
    }

    #[test]
    fn parametric_threshold_pairs_at_zero_drive() {
        // F = 0 with |Δ| small enough that the origin is unstable to the
        // parametric drive: the nontrivial roots are double roots of the
        // polynomial and need the circle fallback.
        let fps = fixed_points(&params(1.0, 0.0)).unwrap();
        let nontrivial: Vec<_> = fps.iter().filter(|f| f.n0 > 1e-9).collect();
        assert!(nontrivial.len() >= 2);
        for fp in &nontrivial {
            let partner = nontrivial.iter().any(|g| (g.beta0 + fp.beta0).norm() < 1e-8);
            assert!(partner, "missing ±β partner for {:?}", fp.beta0);
        }
    }
}
