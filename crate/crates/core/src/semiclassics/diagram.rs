use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{flow_graph_with, GraphSettings, RegionLabel};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Rectangular `(Δ, F)` grid. Endpoints are included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramGrid {
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_delta: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub n_f: usize,
}

impl DiagramGrid {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        Self::axis(self.delta_min, self.delta_max, self.n_delta)
    }

    pub fn fs(&self) -> Vec<f64> {
        Self::axis(self.f_min, self.f_max, self.n_f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub delta: f64,
    pub f: f64,
    pub label: RegionLabel,
    pub n_attractors: usize,
    pub n_saddles: usize,
    /// Attractor chiralities joined with `;`, ordered by occupation.
    pub chiralities: String,
    pub edges: Vec<(usize, usize)>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub grid: DiagramGrid,
    pub base: ModelParams,
    /// Row-major over `(f, delta)`: index `i_f * n_delta + i_delta`.
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, i_delta: usize, i_f: usize) -> &PhaseCell {
        &self.cells[i_f * self.grid.n_delta + i_delta]
    }

    /// CSV with columns `delta,f,region_label,n_attractors,n_saddles,chiralities`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,f,region_label,n_attractors,n_saddles,chiralities\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{:.10},{:.10},{},{},{},{}\n",
                c.delta, c.f, c.label, c.n_attractors, c.n_saddles, c.chiralities
            ));
        }
        s
    }
}

fn evaluate(p: &ModelParams, settings: &GraphSettings) -> PhaseCell {
    match flow_graph_with(p, settings) {
        Ok(g) => PhaseCell {
            delta: p.delta,
            f: p.f,
            label: g.region_label,
            n_attractors: g.n_attractors(),
            n_saddles: g.n_saddles(),
            chiralities: g.chiralities().iter().map(|c| c.symbol()).collect::<Vec<_>>().join(";"),
            edges: g.edges,
            diagnostics: g.diagnostics,
        },
        Err(e) => PhaseCell {
            delta: p.delta,
            f: p.f,
            label: RegionLabel::Boundary,
            n_attractors: 0,
            n_saddles: 0,
            chiralities: String::new(),
            edges: Vec::new(),
            diagnostics: vec![e.to_string()],
        },
    }
}

/// Evaluates the flow graph on every grid point. Per-point failures become
/// `Boundary` cells with diagnostics; the sweep itself never aborts.
pub fn phase_diagram(grid: &DiagramGrid, base: &ModelParams, settings: &GraphSettings) -> Result<PhaseDiagram> {
    if grid.n_delta == 0 || grid.n_f == 0 {
        return Err(Error::InvalidParameter("grid resolutions must be positive".into()));
    }
    base.validate()?;
    let deltas = grid.deltas();
    let fs = grid.fs();
    let points: Vec<ModelParams> = fs
        .iter()
        .flat_map(|&f| deltas.iter().map(move |&d| ModelParams { delta: d, f, ..*base }))
        .collect();
    let cells = points.par_iter().map(|p| evaluate(p, settings)).collect();
    Ok(PhaseDiagram { grid: *grid, base: *base, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_grid() {
        let base = ModelParams::new(0.0, 1.0, 0.4, 0.0, 0.0, 0.1).unwrap();
        let grid = DiagramGrid { delta_min: 0.7, delta_max: 0.7, n_delta: 1, f_min: 0.5, f_max: 0.5, n_f: 1 };
        let d = phase_diagram(&grid, &base, &GraphSettings::default()).unwrap();
        assert_eq!(d.cells.len(), 1);
        assert_eq!(d.cells[0].label, RegionLabel::R3a);
        assert!(d.to_csv().lines().count() == 2);
    }

    #[test]
    fn zero_resolution_rejected() {
        let base = ModelParams::new(0.0, 1.0, 0.4, 0.0, 0.0, 0.1).unwrap();
        let grid = DiagramGrid { delta_min: 0.0, delta_max: 1.0, n_delta: 0, f_min: 0.0, f_max: 1.0, n_f: 3 };
        assert!(phase_diagram(&grid, &base, &GraphSettings::default()).is_err());
    }

    #[test]
    fn large_drive_negative_detuning_corner_is_region_one() {
        let base = ModelParams::new(0.0, 1.0, 0.4, 0.0, 0.0, 0.1).unwrap();
        let grid = DiagramGrid { delta_min: -3.0, delta_max: -2.0, n_delta: 3, f_min: 1.5, f_max: 2.0, n_f: 3 };
        let d = phase_diagram(&grid, &base, &GraphSettings::default()).unwrap();
        assert!(d.cells.iter().all(|c| c.label == RegionLabel::R1));
    }
}
