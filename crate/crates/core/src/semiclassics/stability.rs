use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

/// Real 2×2 Jacobian of `(dX/dt, dY/dt)`, row-major.
pub type Jacobian = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FpClass {
    Attractor,
    Saddle,
    MarginalOrDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chirality {
    CW,
    CCW,
    NonSpiraling,
    Undefined,
}

impl Chirality {
    pub fn symbol(self) -> &'static str {
        match self {
            Chirality::CW => "CW",
            Chirality::CCW => "CCW",
            Chirality::NonSpiraling => "N",
            Chirality::Undefined => "U",
        }
    }
}

/// Analytic Jacobian of the mean-field flow at `beta`.
///
/// With `a = Δ − 2U|β|²` and `c = Uβ² + G` the fluctuation equation is
/// `δβ' = (ia − κ/2)δβ − i c δβ*`, which in real components reads
///
/// ```text
/// J = [[−κ/2 + Im c, −a − Re c],
///      [ a − Re c,   −κ/2 − Im c]]
/// ```
pub fn linearize(beta: C64, p: &ModelParams) -> Jacobian {
    let a = p.delta - 2.0 * p.u * beta.norm_sqr();
    let c = beta * beta * p.u + p.g;
    let h = 0.5 * p.kappa;
    [[-h + c.im, -a - c.re], [a - c.re, -h - c.im]]
}

/// Eigenvalues of a real 2×2 matrix, ordered by descending real part (and
/// descending imaginary part for a complex pair).
pub fn eigenvalues(j: &Jacobian) -> [C64; 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [C64::new(0.5 * tr + s, 0.0), C64::new(0.5 * tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [C64::new(0.5 * tr, s), C64::new(0.5 * tr, -s)]
    }
}

/// Stability class and rotation sense of the linear flow `ξ' = Jξ`.
///
/// Rotation is counterclockwise in the `(X, Y)` plane when `J₂₁ − J₁₂ > 0`.
pub fn classify(j: &Jacobian, degeneracy_tol: f64) -> (FpClass, Chirality) {
    let ev = eigenvalues(j);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let class = if ev[0].re < -degeneracy_tol && ev[1].re < -degeneracy_tol {
        FpClass::Attractor
    } else if det < -degeneracy_tol * degeneracy_tol {
        FpClass::Saddle
    } else {
        FpClass::MarginalOrDegenerate
    };
    let chirality = if class == FpClass::Saddle {
        Chirality::Undefined
    } else if ev[0].im != 0.0 {
        if j[1][0] - j[0][1] > 0.0 {
            Chirality::CCW
        } else {
            Chirality::CW
        }
    } else {
        Chirality::NonSpiraling
    };
    (class, chirality)
}
