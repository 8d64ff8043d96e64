//! Run configuration shared by all subcommands.

use std::path::Path;

use kerrflow::model::ModelConfig;
use kerrflow::{ModelParams, ScaledParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A list of values, either explicit or an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, steps: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::Values(ref v) => v.clone(),
            Axis::Range { start, stop, steps } => match steps {
                0 => vec![],
                1 => vec![start],
                n => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

/// Optional sweeps; unset axes take the value from `[model]`. Points are
/// ordered with `aleph` outermost and `delta` innermost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub aleph: Option<Axis>,
    pub f: Option<Axis>,
    pub delta: Option<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_delta: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub n_f: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { delta_min: -1.0, delta_max: 8.0, n_delta: 100, f_min: 0.0, f_max: 2.0, n_f: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HilbertConfig {
    /// Fixed Fock dimension; chosen from the classical occupation when unset.
    pub dim: Option<usize>,
    pub max_dim: usize,
    pub tail_tol: f64,
    /// Also write each steady state to the binary container.
    pub save_states: bool,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        Self { dim: None, max_dim: kerrflow::hilbert::DEFAULT_DIM_CAP, tail_tol: kerrflow::hilbert::TAIL_TOL, save_states: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    /// Defaults to `20/κ`.
    pub t_burn: Option<f64>,
    /// Defaults to `t_burn + 100/κ`.
    pub t_total: Option<f64>,
    pub dt_s: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Fixed Fock dimension for trajectories; otherwise the steady-state
    /// estimate times `dim_factor`.
    pub dim: Option<usize>,
    pub dim_factor: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_traj: 64, t_burn: None, t_total: None, dt_s: 0.1, rtol: 1e-8, atol: 1e-12, dim: None, dim_factor: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteChoice {
    Trajectory,
    Liouvillian,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub route: RouteChoice,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub max_lag: f64,
    /// Exponential taper rate; `4/max_lag` when unset, 0 for rectangular.
    pub taper_eta: Option<f64>,
    /// Liouvillian modes to keep; all `N²` when unset.
    pub n_modes: Option<usize>,
    pub peak_threshold: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            route: RouteChoice::Trajectory,
            omega_min: 0.0,
            omega_max: 4.0,
            n_omega: 401,
            max_lag: 200.0,
            taper_eta: None,
            n_modes: None,
            peak_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerConfig {
    /// Half-width of the square window in rescaled units.
    pub extent: f64,
    pub points: usize,
    pub peak_threshold: f64,
}

impl Default for WignerConfig {
    fn default() -> Self {
        Self { extent: 2.5, points: 101, peak_threshold: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub wigner: WignerConfig,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// One parameter point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub index: usize,
    pub scaled: ScaledParams,
    pub params: ModelParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        };
        Ok(cfg)
    }

    /// Fills in defaults that depend on other fields and checks ranges.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model.scaled().map_err(|e| CliError::Config(e.to_string()))?;
        let kappa = self.model.kappa;
        let e = &mut self.ensemble;
        let t_burn = *e.t_burn.get_or_insert(20.0 / kappa);
        let t_total = *e.t_total.get_or_insert(t_burn + 100.0 / kappa);
        if e.n_traj == 0 || !(t_total > t_burn && t_burn >= 0.0) || !(e.dt_s > 0.0) || !(e.dim_factor >= 1.0) {
            return bad(format!("invalid ensemble block {e:?}"));
        }
        let s = &self.spectrum;
        if s.n_omega < 2 || !(s.omega_max > s.omega_min) || !(s.max_lag > 0.0) || !(s.peak_threshold > 0.0) {
            return bad(format!("invalid spectrum block {s:?}"));
        }
        if s.max_lag > t_total - t_burn {
            return bad(format!("max_lag {} exceeds the stationary record length {}", s.max_lag, t_total - t_burn));
        }
        let w = &self.wigner;
        if w.points < 3 || !(w.extent > 0.0) {
            return bad(format!("invalid wigner block {w:?}"));
        }
        if self.grid.n_delta == 0 || self.grid.n_f == 0 {
            return bad("grid resolutions must be positive".into());
        }
        if self.hilbert.dim.is_some_and(|d| d < 2) || self.hilbert.max_dim < 2 {
            return bad("Fock dimensions must be at least 2".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(self)
    }

    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let base = self.model.scaled().map_err(|e| CliError::Config(e.to_string()))?;
        let axis = |a: &Option<Axis>, v: f64| a.as_ref().map_or(vec![v], Axis::values);
        let alephs = axis(&self.sweep.aleph, base.aleph);
        let fs = axis(&self.sweep.f, base.tilde_f);
        let deltas = axis(&self.sweep.delta, base.delta);
        let mut out = Vec::new();
        for &aleph in &alephs {
            for &f in &fs {
                for &delta in &deltas {
                    let scaled = ScaledParams { aleph, tilde_f: f, delta, ..base };
                    let params = scaled.to_physical().map_err(|e| CliError::Config(format!("sweep point: {e}")))?;
                    out.push(Point { index: out.len(), scaled, params });
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::Config("sweep has no points".into()));
        }
        Ok(out)
    }

    pub fn omega_axis(&self) -> Vec<f64> {
        let s = &self.spectrum;
        (0..s.n_omega).map(|i| s.omega_min + (s.omega_max - s.omega_min) * i as f64 / (s.n_omega - 1) as f64).collect()
    }
}
