//! Output directory handling: row-flushed CSV tables and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// CSV table that flushes after every row, so rows already written survive a
/// failure later in the sweep.
pub struct Table {
    w: BufWriter<File>,
    width: usize,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", header.join(","))?;
        w.flush()?;
        Ok(Self { w, width: header.len() })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.width);
        writeln!(self.w, "{}", cells.join(","))?;
        self.w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub tail_tol: f64,
    pub trace_tol: f64,
    pub hermiticity_tol: f64,
    pub positivity_tol: f64,
    pub jump_time_rtol: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub weight_tail_tol: f64,
    pub causality_tol: f64,
}

impl Tolerances {
    pub fn from_config(cfg: &RunConfig) -> Self {
        use kerrflow::{hilbert, spectra, trajectories};
        Self {
            tail_tol: cfg.hilbert.tail_tol,
            trace_tol: hilbert::TRACE_TOL,
            hermiticity_tol: hilbert::HERMITICITY_TOL,
            positivity_tol: hilbert::POSITIVITY_TOL,
            jump_time_rtol: trajectories::JUMP_TIME_RTOL,
            ode_rtol: cfg.ensemble.rtol,
            ode_atol: cfg.ensemble.atol,
            weight_tail_tol: spectra::WEIGHT_TAIL_TOL,
            causality_tol: spectra::CAUSALITY_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
    pub exit_code: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub status: String,
    pub config: Option<RunConfig>,
    pub workers: usize,
    pub seed: u64,
    pub save_trajectories: bool,
    pub tolerances: Option<Tolerances>,
    pub outputs: Vec<String>,
    pub failures: Vec<Failure>,
}

pub struct OutDir {
    pub root: PathBuf,
    outputs: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), outputs: Vec::new() })
    }

    /// Path of a new output file, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.root.join(name)
    }

    pub fn outputs(&self) -> Vec<String> {
        self.outputs.clone()
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.file(name);
        kerrflow::io::save_json(&path, value)?;
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        kerrflow::io::save_json(&self.root.join("manifest.json"), manifest)?;
        Ok(())
    }
}

/// Shortest round-trip formatting, switching to exponent form for very small
/// or large magnitudes. Identical inputs give identical text.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn num_round_trips() {
        for x in [0.0, 1.5, -3.25e-17, 6.02e23, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(2.5e-9), "2.5e-9");
    }
}
