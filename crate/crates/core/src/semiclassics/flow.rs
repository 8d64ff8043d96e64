use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::fixed_points::{fixed_points, FixedPoint};
use super::gpe_rhs;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{Dopri5, OdeSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Capture radius as a fraction of the smallest inter-attractor distance.
    pub capture_fraction: f64,
    /// Dwell time inside the capture radius, in units of 1/κ.
    pub dwell_kappa: f64,
    pub escape_radius: f64,
    /// Keep every accepted step in the outcome.
    pub record: bool,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            capture_fraction: 1e-2,
            dwell_kappa: 10.0,
            escape_radius: 1e3,
            record: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    /// `(t, β)` at every accepted step (empty unless recording is enabled).
    pub samples: Vec<(f64, C64)>,
    /// Index into [`FlowIntegrator::fixed_points`] of the capturing attractor.
    pub attractor: Option<usize>,
    pub t_end: f64,
    pub beta_end: C64,
}

/// Integrates the mean-field flow against a precomputed fixed-point set.
#[derive(Debug, Clone)]
pub struct FlowIntegrator {
    params: ModelParams,
    fps: Vec<FixedPoint>,
    capture_radius: f64,
    settings: FlowSettings,
}

impl FlowIntegrator {
    pub fn new(params: ModelParams, settings: FlowSettings) -> Result<Self> {
        let fps = fixed_points(&params)?;
        Ok(Self::with_fixed_points(params, fps, settings))
    }

    pub fn with_fixed_points(params: ModelParams, fps: Vec<FixedPoint>, settings: FlowSettings) -> Self {
        let attractors: Vec<C64> = fps.iter().filter(|f| f.is_attractor()).map(|f| f.beta0).collect();
        let mut dmin = f64::INFINITY;
        for i in 0..attractors.len() {
            for j in i + 1..attractors.len() {
                dmin = dmin.min((attractors[i] - attractors[j]).norm());
            }
        }
        if !dmin.is_finite() {
            dmin = attractors.first().map(|b| b.norm().max(1.0)).unwrap_or(1.0);
        }
        Self { params, fps, capture_radius: settings.capture_fraction * dmin, settings }
    }

    pub fn fixed_points(&self) -> &[FixedPoint] {
        &self.fps
    }

    pub fn capture_radius(&self) -> f64 {
        self.capture_radius
    }

    fn nearest_attractor(&self, beta: C64) -> Option<usize> {
        self.fps
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_attractor())
            .find(|(_, f)| (f.beta0 - beta).norm() < self.capture_radius)
            .map(|(i, _)| i)
    }

    /// Integrates from `beta_init` until captured by an attractor for the
    /// dwell time, or until `t_max`.
    pub fn integrate(&self, beta_init: C64, t_max: f64) -> Result<FlowOutcome> {
        if !(t_max > 0.0) {
            return Err(Error::InvalidParameter(format!("t_max must be > 0, got {t_max}")));
        }
        let p = self.params;
        let dwell = self.settings.dwell_kappa / p.kappa;
        let mut ode = Dopri5::new(
            move |_t, y: &[C64], dy: &mut [C64]| dy[0] = gpe_rhs(y[0], &p),
            0.0,
            &[beta_init],
            OdeSettings {
                rtol: self.settings.rtol,
                atol: self.settings.atol,
                h_max: 0.5 / p.kappa,
                ..Default::default()
            },
        );
        let mut samples = Vec::new();
        if self.settings.record {
            samples.push((0.0, beta_init));
        }
        let mut inside: Option<(usize, f64)> = self.nearest_attractor(beta_init).map(|i| (i, 0.0));
        loop {
            if let Some((idx, since)) = inside {
                if ode.t() - since >= dwell {
                    return Ok(FlowOutcome {
                        samples,
                        attractor: Some(idx),
                        t_end: ode.t(),
                        beta_end: ode.y()[0],
                    });
                }
            }
            if ode.t() >= t_max {
                break;
            }
            let t = ode.step(t_max)?;
            let b = ode.y()[0];
            if !b.norm().is_finite() || b.norm() > self.settings.escape_radius {
                return Err(Error::Numerical(format!(
                    "mean-field trajectory escaped |β| > {} at t = {t} (from β = {beta_init})",
                    self.settings.escape_radius
                )));
            }
            if self.settings.record {
                samples.push((t, b));
            }
            inside = match (self.nearest_attractor(b), inside) {
                (Some(i), Some((j, since))) if i == j => Some((j, since)),
                (Some(i), _) => Some((i, t)),
                (None, _) => None,
            };
        }
        Ok(FlowOutcome { samples, attractor: None, t_end: ode.t(), beta_end: ode.y()[0] })
    }
}

/// Convenience wrapper computing the fixed points first.
pub fn integrate_flow(beta_init: C64, p: &ModelParams, t_max: f64) -> Result<FlowOutcome> {
    FlowIntegrator::new(*p, FlowSettings::default())?.integrate(beta_init, t_max)
}

/// Accumulated polar angle of `β(t) − center` along a sampled path; positive
/// for counterclockwise motion.
pub fn signed_winding(samples: &[(f64, C64)], center: C64) -> f64 {
    let mut total = 0.0;
    for w in samples.windows(2) {
        let a = w[0].1 - center;
        let b = w[1].1 - center;
        total += (b * a.conj()).arg();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiclassics::Chirality;

    fn params(delta: f64, f: f64) -> ModelParams {
        ModelParams::new(delta, 1.0, 0.4, f, 0.0, 0.1).unwrap()
    }

    #[test]
    fn starting_on_attractor_is_captured_immediately() {
        let integ = FlowIntegrator::new(params(0.7, 0.5), FlowSettings::default()).unwrap();
        let (idx, fp) =
            integ.fixed_points().iter().enumerate().find(|(_, f)| f.is_attractor()).unwrap();
        let out = integ.integrate(fp.beta0, 1e4).unwrap();
        assert_eq!(out.attractor, Some(idx));
        assert!(out.t_end <= 10.0 / 0.1 + 1.0);
    }

    #[test]
    fn undriven_flow_decays_to_origin() {
        let p = ModelParams::new(0.5, 1.0, 0.0, 0.0, 0.0, 0.1).unwrap();
        for &b in &[C64::new(1.0, 1.0), C64::new(-2.0, 0.3)] {
            let out = integrate_flow(b, &p, 1e4).unwrap();
            assert_eq!(out.attractor, Some(0));
            assert!(out.beta_end.norm() < 1e-2);
        }
    }

    #[test]
    fn separatrix_splits_basins() {
        // Scan a line of initial conditions through the saddle: both
        // attractors must be reached.
        let integ = FlowIntegrator::new(
            params(0.7, 0.5),
            FlowSettings { record: false, ..Default::default() },
        )
        .unwrap();
        let mut reached = std::collections::BTreeSet::new();
        for k in 0..21 {
            let x = -1.5 + 3.0 * k as f64 / 20.0;
            for &y in &[-1.0, 0.0, 1.0] {
                let out = integ.integrate(C64::new(x, y), 1e4).unwrap();
                if let Some(i) = out.attractor {
                    reached.insert(i);
                }
            }
        }
        assert_eq!(reached.len(), 2);
    }

    #[test]
    fn winding_agrees_with_chirality() {
        for &(d, f) in &[(0.7, 0.5), (3.3, 1.5), (0.0, 0.5)] {
            let p = params(d, f);
            let integ = FlowIntegrator::new(p, FlowSettings::default()).unwrap();
            for fp in integ.fixed_points().iter().filter(|f| f.is_attractor()) {
                if fp.chirality == Chirality::NonSpiraling {
                    continue;
                }
                let start = fp.beta0 + C64::new(1e-3, 0.0);
                let out = integ.integrate(start, 2e3).unwrap();
                let w = signed_winding(&out.samples, fp.beta0);
                let expect = if w > 0.0 { Chirality::CCW } else { Chirality::CW };
                assert_eq!(fp.chirality, expect, "({d},{f}) winding {w}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        assert!(integrate_flow(C64::new(0.0, 0.0), &params(0.7, 0.5), 0.0).is_err());
    }
}
