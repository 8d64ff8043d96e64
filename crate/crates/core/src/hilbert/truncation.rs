use serde::{Deserialize, Serialize};

use super::liouvillian::{liouvillian, steady_state_with, Liouvillian, SteadyStateSettings};
use super::{DensityMatrix, FockSpace};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::semiclassics::fixed_points;

/// Hard cap on the Fock dimension used by automatic doubling.
pub const DEFAULT_DIM_CAP: usize = 256;

/// `N = ⌈c₁·ℵn̄ + c₂·√(ℵn̄) + c₃⌉` with `n̄ = max_k |β̃₀ᵏ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRule {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self { c1: 1.5, c2: 6.0, c3: 10.0 }
    }
}

impl TruncationRule {
    pub fn dim_for(&self, photons: f64) -> usize {
        let x = photons.max(0.0);
        (self.c1 * x + self.c2 * x.sqrt() + self.c3).ceil().max(2.0) as usize
    }
}

/// Initial Fock dimension for physical parameters `p` at scaling `aleph`,
/// sized from the largest classical fixed-point occupation.
pub fn choose_truncation(p: &ModelParams, aleph: f64) -> Result<FockSpace> {
    choose_truncation_with(p, aleph, &TruncationRule::default())
}

pub fn choose_truncation_with(p: &ModelParams, aleph: f64, rule: &TruncationRule) -> Result<FockSpace> {
    let classical = p.to_scaled(aleph)?.classical()?;
    let nmax = fixed_points(&classical)?.iter().map(|f| f.n0).fold(0.0, f64::max);
    FockSpace::new(rule.dim_for(aleph * nmax))
}

/// Steady state with automatic dimension doubling on tail violations, up to
/// `cap`.
pub fn steady_state_auto(
    p: &ModelParams,
    aleph: f64,
    cap: usize,
    settings: &SteadyStateSettings,
) -> Result<(DensityMatrix, Liouvillian)> {
    let mut space = choose_truncation(p, aleph)?;
    if space.dim() > cap {
        return Err(Error::ResourceCap(format!("initial dimension {} exceeds cap {cap}", space.dim())));
    }
    loop {
        let l = liouvillian(p, space);
        match steady_state_with(&l, settings) {
            Ok(rho) => return Ok((rho, l)),
            Err(Error::Truncation { dim, tail, .. }) => {
                if dim >= cap {
                    return Err(Error::ResourceCap(format!(
                        "tail population {tail:e} at dimension {dim} (cap {cap})"
                    )));
                }
                space = FockSpace::new((2 * dim).min(cap))?;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::number;

    #[test]
    fn undriven_is_small() {
        let p = ModelParams::new(0.5, 1.0, 0.0, 0.0, 0.0, 0.1).unwrap();
        assert_eq!(choose_truncation(&p, 1.0).unwrap().dim(), 10);
    }

    #[test]
    fn grows_with_aleph() {
        let s = crate::model::ScaledParams { tilde_u: 1.0, tilde_f: 1.5, aleph: 1.0, delta: 4.0, g: 0.4, phi: 0.0, kappa: 0.1 };
        let n1 = choose_truncation(&s.to_physical().unwrap(), 1.0).unwrap().dim();
        let s20 = crate::model::ScaledParams { aleph: 20.0, ..s };
        let n20 = choose_truncation(&s20.to_physical().unwrap(), 20.0).unwrap().dim();
        assert!(n20 > 10 * (n1 - 10) / 2, "{n1} {n20}");
    }

    #[test]
    fn doubling_converges_population() {
        let s = crate::model::ScaledParams { tilde_u: 1.0, tilde_f: 0.5, aleph: 1.0, delta: 1.0, g: 0.4, phi: 0.0, kappa: 0.1 };
        let p = s.to_physical().unwrap();
        let (rho, l) = steady_state_auto(&p, 1.0, DEFAULT_DIM_CAP, &SteadyStateSettings::default()).unwrap();
        let n = rho.space.dim();
        let nbar = rho.expect(&number(rho.space)).re;
        let l2 = liouvillian(&p, FockSpace::new(2 * n).unwrap());
        let rho2 = crate::hilbert::steady_state(&l2).unwrap();
        let nbar2 = rho2.expect(&number(rho2.space)).re;
        assert!(((nbar - nbar2) / nbar2).abs() < 1e-6, "{nbar} {nbar2}");
        assert!(l.residual(&rho) < 1e-10);
    }

    #[test]
    fn cap_is_enforced() {
        let p = ModelParams::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.1).unwrap();
        assert!(matches!(
            steady_state_auto(&p, 1.0, 50, &SteadyStateSettings::default()),
            Err(Error::ResourceCap(_))
        ));
    }
}
