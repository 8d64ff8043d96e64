//! One function per subcommand. Sweeps evaluate points in parallel batches
//! and write rows in point order.

use kerrflow::hilbert::{
    liouvillian, liouvillian_spectrum, number, steady_state_auto, steady_state_with, wigner, DensityMatrix, FockSpace,
    Liouvillian, SteadyStateSettings,
};
use kerrflow::io::{save_density, save_spectrum, save_trajectories, DensityMetadata};
use kerrflow::semiclassics::{fixed_points, phase_diagram, DiagramGrid, GraphSettings};
use kerrflow::spectra::{
    bogoliubov_prediction, chirality_weights, extract_peaks, zeta_from_liouvillian, zeta_from_liouvillian_ordered,
    zeta_from_liouvillian_windowed, zeta_from_trajectories, ChiralitySpectrum, Ordering, SpectralPeak, Taper,
};
use kerrflow::trajectories::{ensemble_moments, run_ensemble, trajectory_space, EnsembleSpec};
use kerrflow::ModelParams;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Point, RouteChoice, RunConfig};
use crate::output::{num, Failure, OutDir, Table};
use crate::{exit_code_for, CliError};

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a mut OutDir,
    pub workers: usize,
    pub seed: u64,
    pub save_trajectories: bool,
}

/// Evaluates `f` on every point, `workers` at a time, handing results to
/// `sink` in point order. Point failures are collected, not propagated.
fn sweep<T: Send>(
    points: &[Point],
    workers: usize,
    f: impl Fn(&Point) -> Result<T, CliError> + Sync,
    mut sink: impl FnMut(&Point, T) -> Result<(), CliError>,
) -> Result<Vec<Failure>, CliError> {
    let mut failures = Vec::new();
    for chunk in points.chunks(workers.max(1)) {
        let results: Vec<_> = chunk.par_iter().map(&f).collect();
        for (pt, r) in chunk.iter().zip(results) {
            match r {
                Ok(v) => sink(pt, v)?,
                Err(e) => failures.push(Failure { index: pt.index, exit_code: exit_code_for(&e), error: e.to_string() }),
            }
        }
    }
    Ok(failures)
}

fn point_cells(pt: &Point) -> Vec<String> {
    vec![pt.index.to_string(), num(pt.scaled.aleph), num(pt.scaled.delta), num(pt.scaled.tilde_f)]
}

const POINT_HEADER: [&str; 4] = ["index", "aleph", "delta", "f"];

fn header(extra: &[&'static str]) -> Vec<&'static str> {
    POINT_HEADER.iter().chain(extra).copied().collect()
}

fn solve_steady(cfg: &RunConfig, pt: &Point) -> Result<(DensityMatrix, Liouvillian), CliError> {
    let settings = SteadyStateSettings { tail_tol: cfg.hilbert.tail_tol, ..Default::default() };
    Ok(match cfg.hilbert.dim {
        Some(n) => {
            let l = liouvillian(&pt.params, FockSpace::new(n)?);
            (steady_state_with(&l, &settings)?, l)
        }
        None => steady_state_auto(&pt.params, pt.scaled.aleph, cfg.hilbert.max_dim, &settings)?,
    })
}

/// `|β̃|²` of the classical attractors, `;`-joined.
fn classical_populations(pt: &Point) -> Result<String, CliError> {
    let fps = fixed_points(&pt.scaled.classical()?)?;
    Ok(fps.iter().filter(|f| f.is_attractor()).map(|f| num(f.n0)).collect::<Vec<_>>().join(";"))
}

pub fn phase_diagram_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let g = ctx.cfg.grid;
    let grid = DiagramGrid { delta_min: g.delta_min, delta_max: g.delta_max, n_delta: g.n_delta, f_min: g.f_min, f_max: g.f_max, n_f: g.n_f };
    // the flow in rescaled units is the same for every ℵ
    let base = ctx.cfg.model.scaled()?.classical()?;
    let d = phase_diagram(&grid, &base, &GraphSettings::default())?;
    std::fs::write(ctx.out.file("phase_diagram.csv"), d.to_csv())?;
    ctx.out.write_json("phase_diagram.json", &d)?;
    Ok(Vec::new())
}

pub fn steady_state_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let cfg = ctx.cfg;
    let points = cfg.points()?;
    let mut table = Table::create(
        &ctx.out.file("steady_state.csv"),
        &header(&["dim", "photons", "rssp", "purity", "tail", "min_eigenvalue", "residual", "classical_rssp"]),
    )?;
    let out = &mut *ctx.out;
    sweep(
        &points,
        ctx.workers,
        |pt| {
            let (rho, l) = solve_steady(cfg, pt)?;
            let diag = rho.diagnostics()?;
            let residual = l.residual(&rho);
            Ok((rho, residual, diag, classical_populations(pt)?))
        },
        |pt, (rho, residual, diag, classical)| {
            let n = rho.expect(&number(rho.space)).re;
            let purity = rho.rho.dot(&rho.rho).diag().sum().re;
            let mut row = point_cells(pt);
            row.extend([
                rho.space.dim().to_string(),
                num(n),
                num(n / pt.scaled.aleph),
                num(purity),
                num(diag.tail_population),
                num(diag.min_eigenvalue),
                num(residual),
                classical,
            ]);
            table.row(&row)?;
            if cfg.hilbert.save_states {
                let stem = out.root.join(format!("rho_{:04}", pt.index));
                out.file(&format!("rho_{:04}.krcx", pt.index));
                out.file(&format!("rho_{:04}.json", pt.index));
                let meta = DensityMetadata {
                    params: pt.params,
                    aleph: Some(pt.scaled.aleph),
                    dim: rho.space.dim(),
                    trace: rho.trace().re,
                    hermiticity_error: diag.hermiticity,
                    min_eigenvalue: diag.min_eigenvalue,
                    tail_population: diag.tail_population,
                    residual: Some(residual),
                };
                save_density(&stem, &rho, &meta)?;
            }
            Ok(())
        },
    )
}

#[derive(Serialize)]
struct WignerSummary {
    index: usize,
    params: ModelParams,
    aleph: f64,
    maxima: Vec<(f64, f64, f64)>,
    attractors: Vec<(f64, f64)>,
    mass_deficit: f64,
    boundary_warning: bool,
    min_value: f64,
}

pub fn wigner_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let cfg = ctx.cfg;
    let points = cfg.points()?;
    let w = cfg.wigner;
    let axis: Vec<f64> = (0..w.points).map(|i| -w.extent + 2.0 * w.extent * i as f64 / (w.points - 1) as f64).collect();
    let mut table = Table::create(&ctx.out.file("wigner.csv"), &header(&["dim", "n_maxima", "n_attractors", "mass_deficit"]))?;
    let out = &mut *ctx.out;
    sweep(
        &points,
        ctx.workers,
        |pt| {
            let (rho, _) = solve_steady(cfg, pt)?;
            let grid = wigner(&rho, &axis, &axis, pt.scaled.aleph)?;
            let fps = fixed_points(&pt.scaled.classical()?)?;
            let attractors = fps.iter().filter(|f| f.is_attractor()).map(|f| (f.beta0.re, f.beta0.im)).collect();
            Ok((rho.space.dim(), grid, attractors))
        },
        |pt, (dim, grid, attractors): (usize, kerrflow::hilbert::WignerGrid, Vec<(f64, f64)>)| {
            let maxima = grid.lobes(w.peak_threshold);
            let mut row = point_cells(pt);
            row.extend([dim.to_string(), maxima.len().to_string(), attractors.len().to_string(), num(grid.mass_deficit)]);
            table.row(&row)?;
            std::fs::write(out.file(&format!("wigner_{:04}.csv", pt.index)), grid.to_csv())?;
            let summary = WignerSummary {
                index: pt.index,
                params: pt.params,
                aleph: pt.scaled.aleph,
                maxima,
                attractors,
                mass_deficit: grid.mass_deficit,
                boundary_warning: grid.boundary_warning,
                min_value: grid.min_value(),
            };
            out.write_json(&format!("wigner_{:04}.json", pt.index), &summary)
        },
    )
}

fn ensemble_spec(cfg: &RunConfig, pt: &Point, seed: u64, moments: bool) -> Result<EnsembleSpec, CliError> {
    let e = cfg.ensemble;
    let space = match e.dim {
        Some(n) => FockSpace::new(n)?,
        None => trajectory_space(&pt.params, pt.scaled.aleph, e.dim_factor)?,
    };
    let mut spec = EnsembleSpec::new(space, pt.params.kappa, e.n_traj);
    spec.t_burn = e.t_burn.expect("resolved");
    spec.t_total = e.t_total.expect("resolved");
    spec.dt_s = e.dt_s;
    spec.ode.rtol = e.rtol;
    spec.ode.atol = e.atol;
    spec.tail_tol = cfg.hilbert.tail_tol;
    spec.record_moments = moments;
    // disjoint seed blocks per point
    spec.base_seed = seed.wrapping_add((pt.index as u64).wrapping_mul(e.n_traj as u64));
    spec.validate()?;
    Ok(spec)
}

pub fn trajectories_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let cfg = ctx.cfg;
    let points = cfg.points()?;
    let (seed, save) = (ctx.seed, ctx.save_trajectories);
    let mut table = Table::create(
        &ctx.out.file("trajectories.csv"),
        &header(&["dim", "n_traj", "base_seed", "mean_photons", "jump_rate", "kappa_photons"]),
    )?;
    let out = &mut *ctx.out;
    // trajectories are already parallel inside each ensemble
    sweep(
        &points,
        1,
        |pt| {
            let spec = ensemble_spec(cfg, pt, seed, true)?;
            let recs = run_ensemble(&spec, &pt.params)?;
            Ok((spec, recs))
        },
        |pt, (spec, recs)| {
            let m = ensemble_moments(&recs)?;
            let i0 = m.times.iter().position(|&t| t >= spec.t_burn - 1e-9).unwrap_or(m.times.len());
            let stationary = &m.n[i0..];
            let mean_n = stationary.iter().sum::<f64>() / stationary.len().max(1) as f64;
            let jumps: usize = recs.iter().map(|r| r.jump_times.iter().filter(|&&t| t >= spec.t_burn).count()).sum();
            let rate = jumps as f64 / (recs.len() as f64 * (spec.t_total - spec.t_burn));
            let mut row = point_cells(pt);
            row.extend([
                spec.space.dim().to_string(),
                recs.len().to_string(),
                spec.base_seed.to_string(),
                num(mean_n),
                num(rate),
                num(pt.params.kappa * mean_n),
            ]);
            table.row(&row)?;
            let mut t = Table::create(
                &out.file(&format!("moments_{:04}.csv", pt.index)),
                &["t", "re_b", "im_b", "photons", "photons_stderr", "re_b2", "im_b2"],
            )?;
            for k in 0..m.times.len() {
                t.row(&[num(m.times[k]), num(m.b[k].re), num(m.b[k].im), num(m.n[k]), num(m.n_stderr[k]), num(m.b2[k].re), num(m.b2[k].im)])?;
            }
            if save {
                out.file(&format!("trajectories_{:04}.krcx", pt.index));
                out.file(&format!("trajectories_{:04}.json", pt.index));
                save_trajectories(&out.root.join(format!("trajectories_{:04}", pt.index)), &recs, &spec, &pt.params, Some(pt.scaled.aleph))?;
            }
            Ok(())
        },
    )
}

#[derive(Serialize)]
struct ChiralitySummary {
    index: usize,
    params: ModelParams,
    aleph: f64,
    peaks: Vec<(String, Vec<SpectralPeak>)>,
    bogoliubov: Vec<SpectralPeak>,
}

fn peak_list(peaks: &[SpectralPeak]) -> String {
    peaks.iter().map(|p| format!("{}{}", num(p.omega0), if p.weight >= 0.0 { "+" } else { "-" })).collect::<Vec<_>>().join(";")
}

pub fn chirality_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let cfg = ctx.cfg;
    let points = cfg.points()?;
    let sc = cfg.spectrum;
    let omega = cfg.omega_axis();
    let taper = match sc.taper_eta {
        None => Taper::default_for(sc.max_lag),
        Some(e) if e > 0.0 => Taper::Exponential(e),
        Some(_) => Taper::Rectangular,
    };
    let (seed, save) = (ctx.seed, ctx.save_trajectories);
    let mut table = Table::create(&ctx.out.file("chirality.csv"), &header(&["route", "peaks", "bogoliubov"]))?;
    let out = &mut *ctx.out;
    sweep(
        &points,
        1,
        |pt| {
            let mut spectra: Vec<(String, ChiralitySpectrum)> = Vec::new();
            let mut batch = None;
            if matches!(sc.route, RouteChoice::Trajectory | RouteChoice::Both) {
                let spec = ensemble_spec(cfg, pt, seed, false)?;
                let recs = run_ensemble(&spec, &pt.params)?;
                let mut z = zeta_from_trajectories(&recs, spec.t_burn, sc.max_lag, taper, &omega)?;
                z.metadata.params = Some(pt.params);
                z.metadata.aleph = Some(pt.scaled.aleph);
                spectra.push(("trajectory".into(), z));
                if save {
                    batch = Some((spec, recs));
                }
            }
            if matches!(sc.route, RouteChoice::Liouvillian | RouteChoice::Both) {
                let (rho, l) = solve_steady(cfg, pt)?;
                let n = rho.space.dim();
                let modes = sc.n_modes.unwrap_or(n * n);
                let spec = liouvillian_spectrum(&l, modes)?;
                for (name, mut z) in [
                    ("liouvillian", zeta_from_liouvillian(&spec, &rho, &omega)?),
                    ("liouvillian_symmetrized", zeta_from_liouvillian_ordered(&spec, &rho, &omega, Ordering::Symmetrized)?),
                    ("liouvillian_windowed", zeta_from_liouvillian_windowed(&spec, &rho, &omega, cfg.ensemble.dt_s, sc.max_lag, taper)?),
                ] {
                    z.metadata.params = Some(pt.params);
                    z.metadata.aleph = Some(pt.scaled.aleph);
                    spectra.push((name.into(), z));
                }
            }
            let fps = fixed_points(&pt.scaled.classical()?)?;
            Ok((spectra, bogoliubov_prediction(&fps), batch))
        },
        |pt, (spectra, prediction, batch)| {
            let mut summary =
                ChiralitySummary { index: pt.index, params: pt.params, aleph: pt.scaled.aleph, peaks: Vec::new(), bogoliubov: prediction };
            for (name, z) in &spectra {
                let peaks = extract_peaks(z, sc.peak_threshold);
                let mut row = point_cells(pt);
                row.extend([name.clone(), peak_list(&peaks), peak_list(&summary.bogoliubov)]);
                table.row(&row)?;
                std::fs::write(out.file(&format!("chirality_{:04}_{name}.csv", pt.index)), z.to_csv())?;
                summary.peaks.push((name.clone(), peaks));
            }
            out.write_json(&format!("chirality_{:04}.json", pt.index), &summary)?;
            if let Some((spec, recs)) = batch {
                out.file(&format!("trajectories_{:04}.krcx", pt.index));
                out.file(&format!("trajectories_{:04}.json", pt.index));
                save_trajectories(&out.root.join(format!("trajectories_{:04}", pt.index)), &recs, &spec, &pt.params, Some(pt.scaled.aleph))?;
            }
            Ok(())
        },
    )
}

pub fn liouvillian_cmd(ctx: &mut Context) -> Result<Vec<Failure>, CliError> {
    let cfg = ctx.cfg;
    let points = cfg.points()?;
    let sc = cfg.spectrum;
    let omega = cfg.omega_axis();
    let mut summary = Table::create(&ctx.out.file("liouvillian.csv"), &header(&["dim", "n_modes", "gap", "rssp", "weight_sum_re", "weight_sum_im"]))?;
    let mut modes_table = Table::create(
        &ctx.out.file("liouvillian_modes.csv"),
        &header(&["k", "re_lambda", "im_lambda", "re_weight", "im_weight", "residual"]),
    )?;
    let mut zeta_table =
        Table::create(&ctx.out.file("liouvillian_zeta.csv"), &header(&["omega", "signed", "signed_symmetrized"]))?;
    let out = &mut *ctx.out;
    sweep(
        &points,
        ctx.workers,
        |pt| {
            let (rho, l) = solve_steady(cfg, pt)?;
            let n = rho.space.dim();
            let spec = liouvillian_spectrum(&l, sc.n_modes.unwrap_or(n * n))?;
            let weights = chirality_weights(&spec, &rho)?;
            let z = zeta_from_liouvillian(&spec, &rho, &omega)?;
            let zs = zeta_from_liouvillian_ordered(&spec, &rho, &omega, Ordering::Symmetrized)?;
            let rssp = rho.expect(&number(rho.space)).re / pt.scaled.aleph;
            Ok((spec, weights, z, zs, rssp))
        },
        |pt, (spec, weights, z, zs, rssp)| {
            let ws = z.metadata.weight_sum.unwrap_or_default();
            let mut row = point_cells(pt);
            row.extend([
                spec.space.dim().to_string(),
                spec.len().to_string(),
                spec.gap().map_or(String::from("nan"), num),
                num(rssp),
                num(ws.re),
                num(ws.im),
            ]);
            summary.row(&row)?;
            for k in 0..spec.len() {
                let mut row = point_cells(pt);
                let (l, w) = (spec.eigenvalues[k], weights[k]);
                row.extend([k.to_string(), num(l.re), num(l.im), num(w.re), num(w.im), num(spec.residuals[k])]);
                modes_table.row(&row)?;
            }
            for i in 0..omega.len() {
                let mut row = point_cells(pt);
                row.extend([num(omega[i]), num(z.signed[i]), num(zs.signed[i])]);
                zeta_table.row(&row)?;
            }
            if cfg.hilbert.save_states {
                let stem = out.root.join(format!("modes_{:04}", pt.index));
                for suffix in ["_eigenvalues.krcx", "_right.krcx", "_left.krcx", ".json"] {
                    out.file(&format!("modes_{:04}{suffix}", pt.index));
                }
                save_spectrum(&stem, &spec, &pt.params, Some(pt.scaled.aleph))?;
            }
            Ok(())
        },
    )
}
