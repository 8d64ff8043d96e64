use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::fixed_points::{fixed_points, FixedPoint};
use super::flow::{FlowIntegrator, FlowSettings};
use super::stability::{Chirality, FpClass};
use crate::error::Result;
use crate::model::ModelParams;

/// Dynamical phase read off the reduced graph invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    R1,
    R3a,
    R3b,
    R5a,
    R5b,
    /// On (or numerically too close to) a bifurcation, or a pattern outside
    /// the five known phases.
    Boundary,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::R1 => "1",
            RegionLabel::R3a => "3a",
            RegionLabel::R3b => "3b",
            RegionLabel::R5a => "5a",
            RegionLabel::R5b => "5b",
            RegionLabel::Boundary => "boundary",
        }
    }
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of distinct saddles whose unstable manifold ends on the CCW
/// attractor in the five-fixed-point phase labelled 5β. Pinned against the
/// large-detuning end of the `F/U = 0.5` and `F/U = 1.5` cuts, which lie in 5β;
/// the weak-drive strip where both saddles feed the CCW attractor is 5α.
pub const CCW_SADDLE_LINKS_5B: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSettings {
    pub flow: FlowSettings,
    /// Launch offset along the unstable eigenvector, relative to `max(1, |β₀|)`.
    pub launch_offset: f64,
    /// Horizon for each manifold branch, in units of 1/κ.
    pub horizon_kappa: f64,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            flow: FlowSettings { record: false, ..Default::default() },
            launch_offset: 1e-4,
            horizon_kappa: 2e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: Vec<FixedPoint>,
    /// `(saddle index, attractor index)` per unstable-manifold branch.
    pub edges: Vec<(usize, usize)>,
    pub region_label: RegionLabel,
    /// Why the point was not assigned one of the five phases, if so.
    pub diagnostics: Vec<String>,
}

impl FlowGraph {
    pub fn n_attractors(&self) -> usize {
        self.nodes.iter().filter(|f| f.is_attractor()).count()
    }

    pub fn n_saddles(&self) -> usize {
        self.nodes.iter().filter(|f| f.is_saddle()).count()
    }

    /// Attractor chiralities, ordered by occupation.
    pub fn chiralities(&self) -> Vec<Chirality> {
        self.nodes.iter().filter(|f| f.is_attractor()).map(|f| f.chirality).collect()
    }
}

/// Unit vector along the eigenvector of the positive eigenvalue of a saddle.
fn unstable_direction(fp: &FixedPoint) -> C64 {
    let j = fp.jacobian;
    let lam = fp.eigenvalues[0].re;
    // rows of (J − λI) are orthogonal to the eigenvector; use the larger one
    let r0 = (j[0][0] - lam, j[0][1]);
    let r1 = (j[1][0], j[1][1] - lam);
    let (a, b) = if r0.0.hypot(r0.1) >= r1.0.hypot(r1.1) { r0 } else { r1 };
    let v = C64::new(-b, a);
    if v.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        v / v.norm()
    }
}

pub fn flow_graph(p: &ModelParams) -> Result<FlowGraph> {
    flow_graph_with(p, &GraphSettings::default())
}

/// Fixed points, saddle→attractor connectivity and the region label.
pub fn flow_graph_with(p: &ModelParams, settings: &GraphSettings) -> Result<FlowGraph> {
    let nodes = fixed_points(p)?;
    let mut diagnostics = Vec::new();
    let mut edges = Vec::new();

    if nodes.iter().any(|f| f.fp_class == FpClass::MarginalOrDegenerate) {
        diagnostics.push("marginal fixed point".to_string());
        return Ok(FlowGraph { nodes, edges, region_label: RegionLabel::Boundary, diagnostics });
    }

    let integ = FlowIntegrator::with_fixed_points(*p, nodes.clone(), settings.flow);
    let t_max = settings.horizon_kappa / p.kappa;
    for (si, saddle) in nodes.iter().enumerate().filter(|(_, f)| f.is_saddle()) {
        let v = unstable_direction(saddle);
        let eps = settings.launch_offset * saddle.beta0.norm().max(1.0);
        for sign in [1.0, -1.0] {
            let start = saddle.beta0 + v * (sign * eps);
            match integ.integrate(start, t_max) {
                Ok(out) => match out.attractor {
                    Some(ai) => edges.push((si, ai)),
                    None => diagnostics.push(format!(
                        "manifold of saddle {si} (branch {sign:+}) not captured by t = {t_max}"
                    )),
                },
                Err(e) => diagnostics.push(format!("manifold of saddle {si}: {e}")),
            }
        }
    }

    let region_label = if diagnostics.is_empty() {
        label_pattern(&nodes, &edges, &mut diagnostics)
    } else {
        RegionLabel::Boundary
    };
    Ok(FlowGraph { nodes, edges, region_label, diagnostics })
}

fn label_pattern(nodes: &[FixedPoint], edges: &[(usize, usize)], diag: &mut Vec<String>) -> RegionLabel {
    let attractors: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_attractor()).collect();
    let n_sad = nodes.iter().filter(|f| f.is_saddle()).count();
    let count = |c: Chirality| attractors.iter().filter(|&&i| nodes[i].chirality == c).count();
    let (cw, ccw) = (count(Chirality::CW), count(Chirality::CCW));

    let label = match (attractors.len(), n_sad) {
        (1, 0) => Some(RegionLabel::R1),
        (2, 1) if cw == 2 => Some(RegionLabel::R3a),
        (2, 1) if cw == 1 && ccw == 1 => Some(RegionLabel::R3b),
        (3, 2) if cw == 2 && ccw == 1 => {
            let target = *attractors.iter().find(|&&i| nodes[i].chirality == Chirality::CCW).unwrap();
            let mut saddles: Vec<usize> =
                edges.iter().filter(|(_, a)| *a == target).map(|(s, _)| *s).collect();
            saddles.sort_unstable();
            saddles.dedup();
            match saddles.len() {
                CCW_SADDLE_LINKS_5B => Some(RegionLabel::R5b),
                0 => None,
                _ => Some(RegionLabel::R5a),
            }
        }
        _ => None,
    };
    label.unwrap_or_else(|| {
        let chir: Vec<&str> = attractors.iter().map(|&i| nodes[i].chirality.symbol()).collect();
        diag.push(format!(
            "unclassified pattern: {} attractors [{}], {} saddles, edges {:?}",
            attractors.len(),
            chir.join(","),
            n_sad,
            edges
        ));
        RegionLabel::Boundary
    })
}
