//! Physical parameters of the driven-dissipative Kerr resonator and the
//! quantum/classical rescaling between them.
//!
//! All frequencies are in the rotating frame of the drive. The mean field is
//! `β = ⟨b̂⟩` and the phase-space coordinates are `X = Re β`, `Y = Im β`.
//!
//! # Quadrature convention
//!
//! Operator quadratures use the 1/2 normalisation
//!
//! ```text
//! X̂ = (b̂ + b̂†)/2,   Ŷ = (b̂ − b̂†)/(2i)
//! ```
//!
//! so that `⟨X̂⟩ = Re Tr[ρ b̂]` and `⟨Ŷ⟩ = Im Tr[ρ b̂]` hold exactly. The
//! commutator is `[X̂, Ŷ] = i/2` (away from the truncation edge).
//!
//! # Scaling
//!
//! The family `β̃ = β/√ℵ`, `U = Ũ/ℵ`, `F = F̃√ℵ` leaves the mean-field flow
//! invariant. Only `U` and `F` are rescaled; `Δ`, `G`, `φ` and `κ` are shared
//! by every member of the family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the resonator Hamiltonian and loss channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Rotating-frame detuning Δ.
    pub delta: f64,
    /// Kerr nonlinearity U.
    pub u: f64,
    /// Two-photon (parametric) drive amplitude G.
    pub g: f64,
    /// Single-photon drive amplitude F (non-negative).
    pub f: f64,
    /// Drive phase φ in radians.
    pub phi: f64,
    /// Single-photon loss rate κ.
    pub kappa: f64,
}

impl ModelParams {
    pub fn new(delta: f64, u: f64, g: f64, f: f64, phi: f64, kappa: f64) -> Result<Self> {
        Self { delta, u, g, f, phi, kappa }.canonical()
    }

    /// Checks the invariants and folds a negative drive amplitude into the
    /// phase (`F e^{-iφ} = |F| e^{-i(φ+π)}`).
    pub fn canonical(mut self) -> Result<Self> {
        let fields = [self.delta, self.u, self.g, self.f, self.phi, self.kappa];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter in {self:?}")));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.f < 0.0 {
            self.f = -self.f;
            self.phi += std::f64::consts::PI;
        }
        self.phi = self.phi.rem_euclid(2.0 * std::f64::consts::PI);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.canonical().map(|_| ())
    }

    /// Complex drive term `F e^{-iφ}` as it enters the mean-field equation.
    pub fn drive(&self) -> num_complex::Complex64 {
        num_complex::Complex64::from_polar(self.f, -self.phi)
    }

    pub fn to_scaled(&self, aleph: f64) -> Result<ScaledParams> {
        to_scaled(self, aleph)
    }
}

/// Parameters expressed in the rescaled (classical-limit) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub tilde_u: f64,
    pub tilde_f: f64,
    pub aleph: f64,
    pub delta: f64,
    pub g: f64,
    pub phi: f64,
    pub kappa: f64,
}

impl ScaledParams {
    pub fn to_physical(&self) -> Result<ModelParams> {
        to_physical(self)
    }

    /// The `ℵ = 1` member of the family, i.e. the flow in `β̃` coordinates.
    pub fn classical(&self) -> Result<ModelParams> {
        ModelParams::new(self.delta, self.tilde_u, self.g, self.tilde_f, self.phi, self.kappa)
    }
}

/// Maps rescaled parameters to physical ones: `U = Ũ/ℵ`, `F = F̃√ℵ`.
pub fn to_physical(s: &ScaledParams) -> Result<ModelParams> {
    check_aleph(s.aleph)?;
    ModelParams::new(
        s.delta,
        s.tilde_u / s.aleph,
        s.g,
        s.tilde_f * s.aleph.sqrt(),
        s.phi,
        s.kappa,
    )
}

/// Inverse of [`to_physical`]: `Ũ = Uℵ`, `F̃ = F/√ℵ`.
pub fn to_scaled(p: &ModelParams, aleph: f64) -> Result<ScaledParams> {
    check_aleph(aleph)?;
    Ok(ScaledParams {
        tilde_u: p.u * aleph,
        tilde_f: p.f / aleph.sqrt(),
        aleph,
        delta: p.delta,
        g: p.g,
        phi: p.phi,
        kappa: p.kappa,
    })
}

fn check_aleph(aleph: f64) -> Result<()> {
    if aleph.is_finite() && aleph > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("aleph must be finite and > 0, got {aleph}")))
    }
}

/// Detuning `Δ = (ω² − ω₀²)/(2ω)` between drive frequency ω and resonator
/// frequency ω₀.
pub fn detuning_from_frequencies(omega: f64, omega0: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() || !omega0.is_finite() {
        return Err(Error::InvalidParameter(format!("omega must be finite and > 0, got {omega}")));
    }
    Ok((omega * omega - omega0 * omega0) / (2.0 * omega))
}

/// Key-value model block shared by all configuration files.
///
/// `u` and `f` are the rescaled `Ũ`, `F̃`; the physical values follow from
/// `aleph` (default 1). When both `omega` and `omega0` are present they
/// override `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub delta: f64,
    pub u: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub f: f64,
    #[serde(default)]
    pub phi: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub aleph: f64,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub omega0: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn scaled(&self) -> Result<ScaledParams> {
        let delta = match (self.omega, self.omega0) {
            (Some(w), Some(w0)) => detuning_from_frequencies(w, w0)?,
            (None, None) => self.delta,
            _ => {
                return Err(Error::InvalidParameter(
                    "omega and omega0 must be given together".into(),
                ))
            }
        };
        check_aleph(self.aleph)?;
        let s = ScaledParams {
            tilde_u: self.u,
            tilde_f: self.f,
            aleph: self.aleph,
            delta,
            g: self.g,
            phi: self.phi,
            kappa: self.kappa,
        };
        // validates the remaining invariants
        s.to_physical()?;
        Ok(s)
    }

    pub fn physical(&self) -> Result<ModelParams> {
        self.scaled()?.to_physical()
    }
}
