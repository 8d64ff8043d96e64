//! Photon-counting quantum-jump unraveling of the master equation.
//!
//! Between jumps the unnormalized state obeys `dψ/dt = −i(H − iκ/2 b†b)ψ`.
//! It is integrated in the interaction picture of the diagonal (detuning and
//! Kerr) part of `H`, which removes the `~U N²` stiffness from the explicit
//! stepper. The frame is unitary, so norms are unaffected, and it is rebased
//! after every jump.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{choose_truncation, FockSpace, StateVector, TAIL_TOL};
use crate::model::ModelParams;
use crate::ode::{Dopri5, OdeSettings};

/// Relative precision of the jump-time bisection.
pub const JUMP_TIME_RTOL: f64 = 1e-10;

/// Settings for a batch of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    /// Samples before `t_burn` are recorded but excluded from stationary
    /// statistics downstream.
    pub t_burn: f64,
    pub t_total: f64,
    pub dt_s: f64,
    pub base_seed: u64,
    pub space: FockSpace,
    pub initial_state: StateVector,
    pub ode: OdeSettings,
    pub tail_tol: f64,
    /// Also record `⟨b†b⟩` and `⟨b²⟩` at every sample.
    pub record_moments: bool,
}

impl EnsembleSpec {
    /// Vacuum start, `t_burn = 20/κ`, `t_total = t_burn + 100/κ`, `dt_s = 0.1`.
    pub fn new(space: FockSpace, kappa: f64, n_traj: usize) -> Self {
        let t_burn = 20.0 / kappa;
        EnsembleSpec {
            n_traj,
            t_burn,
            t_total: t_burn + 100.0 / kappa,
            dt_s: 0.1,
            base_seed: 0,
            space,
            initial_state: StateVector::vacuum(space),
            ode: OdeSettings { rtol: 1e-8, atol: 1e-12, ..Default::default() },
            tail_tol: TAIL_TOL,
            record_moments: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_traj < 1 {
            return bad("n_traj must be ≥ 1".into());
        }
        if !(self.t_burn >= 0.0 && self.t_total > self.t_burn && self.t_total.is_finite()) {
            return bad(format!("need t_total > t_burn ≥ 0, got t_burn = {}, t_total = {}", self.t_burn, self.t_total));
        }
        if !(self.dt_s > 0.0 && self.dt_s <= self.t_total) {
            return bad(format!("sampling step {} out of range", self.dt_s));
        }
        if self.initial_state.space != self.space {
            return bad("initial state lives in a different Fock space".into());
        }
        let n2 = self.initial_state.norm_sqr();
        if (n2 - 1.0).abs() > 1e-10 {
            return bad(format!("initial state not normalized: ‖ψ‖² = {n2}"));
        }
        if !(self.ode.rtol > 0.0 && self.ode.atol > 0.0) {
            return bad("integrator tolerances must be positive".into());
        }
        Ok(())
    }

    /// Uniform sampling grid `k·dt_s`, `k = 0 … ⌊t_total/dt_s⌋`.
    pub fn sample_times(&self) -> Vec<f64> {
        let m = (self.t_total / self.dt_s * (1.0 + 1e-12)).floor() as usize;
        (0..=m).map(|k| k as f64 * self.dt_s).collect()
    }
}

/// One stochastic realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub dt_s: f64,
    pub times: Vec<f64>,
    /// `Re⟨b⟩` of the normalized state.
    pub x: Vec<f64>,
    /// `Im⟨b⟩`.
    pub y: Vec<f64>,
    /// `⟨b†b⟩`, empty unless moments were requested.
    pub n: Vec<f64>,
    /// `⟨b²⟩`, empty unless moments were requested.
    pub b2: Vec<C64>,
    pub jump_times: Vec<f64>,
    /// Squared norm of the unnormalized state at `t_total`, i.e. the
    /// survival probability since the last jump. Lies in `(r, 1]`.
    pub final_norm_check: f64,
}

impl TrajectoryRecord {
    pub fn beta(&self, k: usize) -> C64 {
        C64::new(self.x[k], self.y[k])
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt_s) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Matrix elements of `H` split into the diagonal and the off-diagonal bands.
struct Generator {
    /// `E_n = ⟨n|H|n⟩`.
    energy: Vec<f64>,
    u: f64,
    half_kappa: f64,
    /// `⟨k+1|H|k⟩`.
    sub1: Vec<C64>,
    /// `⟨k+2|H|k⟩` (real and symmetric).
    sub2: Vec<f64>,
}

impl Generator {
    fn new(p: &ModelParams, dim: usize) -> Self {
        let f = p.drive();
        Generator {
            energy: (0..dim).map(|k| (-p.delta + p.u) * k as f64 + 0.5 * p.u * (k * k.saturating_sub(1)) as f64).collect(),
            u: p.u,
            half_kappa: 0.5 * p.kappa,
            sub1: (0..dim - 1).map(|k| f * ((k + 1) as f64).sqrt()).collect(),
            sub2: (0..dim.saturating_sub(2)).map(|k| 0.5 * p.g * (((k + 1) * (k + 2)) as f64).sqrt()).collect(),
        }
    }

    /// `out = V u` for the off-diagonal part `V` of `H`.
    fn apply_offdiag(&self, u: &[C64], out: &mut [C64]) {
        let n = u.len();
        for k in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            if k >= 1 {
                acc += self.sub1[k - 1] * u[k - 1];
            }
            if k + 1 < n {
                acc += self.sub1[k].conj() * u[k + 1];
            }
            if k >= 2 {
                acc += self.sub2[k - 2] * u[k - 2];
            }
            if k + 2 < n {
                acc += self.sub2[k] * u[k + 2];
            }
            out[k] = acc;
        }
    }

    fn mean_energy(&self, psi: &[C64], work: &mut [C64]) -> f64 {
        self.apply_offdiag(psi, work);
        let mut e = 0.0;
        for k in 0..psi.len() {
            e += (psi[k].conj() * work[k]).re + self.energy[k] * psi[k].norm_sqr();
        }
        e / norm_sqr(psi)
    }
}

/// Integration frame for one inter-jump segment: `ψ_n = e^{−iθ_n τ} φ_n`
/// with `θ_n = 0` up to the cutoff `nc` and `θ_n = E_n − E_nc` above it, and
/// an overall energy offset `E₀` (a global phase, dropped). Levels that carry
/// the state stay in the drive frame, where a state near a fixed point is
/// slow; the nearly empty top levels, whose diagonal energies make the system
/// stiff, are moved into the rotating frame.
struct Frame {
    nc: usize,
    /// `E_n − θ_n − E₀`.
    diag: Vec<f64>,
    /// `E_{nc+1} − E_nc`.
    step0: f64,
    u: f64,
}

/// Weight above the frame cutoff at the start of a segment.
const FRAME_TAIL: f64 = 1e-12;

impl Frame {
    fn new(gen: &Generator, psi: &[C64], work: &mut [C64]) -> Self {
        let dim = psi.len();
        let total = norm_sqr(psi);
        let mut nc = dim - 1;
        let mut tail = 0.0;
        while nc > 0 {
            tail += psi[nc].norm_sqr();
            if tail > FRAME_TAIL * total {
                break;
            }
            nc -= 1;
        }
        let nc = (nc + 2).min(dim - 1);
        let e0 = gen.mean_energy(psi, work);
        let diag = (0..dim).map(|k| gen.energy[k.min(nc)] - e0).collect();
        let step0 = if nc + 1 < dim { gen.energy[nc + 1] - gen.energy[nc] } else { 0.0 };
        Frame { nc, diag, step0, u: gen.u }
    }

    /// `phase[n] = e^{−iθ_n τ}`; entries up to `nc` are left at 1.
    fn phases(&self, tau: f64, phase: &mut [C64]) {
        let z = C64::from_polar(1.0, -self.u * tau);
        let mut r = C64::from_polar(1.0, -self.step0 * tau);
        let mut p = C64::new(1.0, 0.0);
        for ph in phase[self.nc + 1..].iter_mut() {
            p *= r;
            r *= z;
            *ph = p;
        }
    }

    fn to_drive_frame(&self, tau: f64, phase: &mut [C64], phi: &mut [C64]) {
        self.phases(tau, phase);
        for k in self.nc + 1..phi.len() {
            phi[k] *= phase[k];
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

struct Moments {
    b: C64,
    n: f64,
    b2: C64,
    tail: f64,
}

fn moments(psi: &[C64], tail_start: usize) -> Moments {
    let s = norm_sqr(psi);
    let mut b = C64::new(0.0, 0.0);
    let mut b2 = C64::new(0.0, 0.0);
    let mut n = 0.0;
    let mut tail = 0.0;
    for k in 0..psi.len() {
        let pk = psi[k].norm_sqr();
        n += k as f64 * pk;
        if k >= tail_start {
            tail += pk;
        }
        if k + 1 < psi.len() {
            b += psi[k].conj() * psi[k + 1] * ((k + 1) as f64).sqrt();
        }
        if k + 2 < psi.len() {
            b2 += psi[k].conj() * psi[k + 2] * (((k + 1) * (k + 2)) as f64).sqrt();
        }
    }
    Moments { b: b / s, n: n / s, b2: b2 / s, tail: tail / s }
}

fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Parameters as for [`ModelParams::validate`] except that `κ = 0` (closed
/// evolution) is admitted.
fn check_params(p: &ModelParams) -> Result<()> {
    if !(p.kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be ≥ 0, got {}", p.kappa)));
    }
    ModelParams { kappa: 1.0, ..*p }.validate()
}

/// Waiting-time unraveling of one trajectory with the given seed.
pub fn evolve_trajectory(spec: &EnsembleSpec, p: &ModelParams, seed: u64) -> Result<TrajectoryRecord> {
    spec.validate()?;
    check_params(p)?;
    let dim = spec.space.dim();
    let tail_start = spec.space.tail_start();
    let gen = Generator::new(p, dim);
    let times = spec.sample_times();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cap = if spec.record_moments { times.len() } else { 0 };
    let mut rec = TrajectoryRecord {
        seed,
        dt_s: spec.dt_s,
        times: times.clone(),
        x: Vec::with_capacity(times.len()),
        y: Vec::with_capacity(times.len()),
        n: Vec::with_capacity(cap),
        b2: Vec::with_capacity(cap),
        jump_times: Vec::new(),
        final_norm_check: 1.0,
    };

    let mut psi: Vec<C64> = spec.initial_state.amps.to_vec();
    let mut phase = vec![C64::new(1.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut next_sample = 0usize;
    let mut t0 = 0.0;
    let mut threshold = draw_threshold(&mut rng);

    let record = |rec: &mut TrajectoryRecord, t: f64, psi: &[C64]| -> Result<()> {
        let m = moments(psi, tail_start);
        if m.tail > spec.tail_tol {
            return Err(Error::Truncation { dim, tail: m.tail, tol: spec.tail_tol });
        }
        if !(m.b.re.is_finite() && m.b.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at t = {t}")));
        }
        rec.x.push(m.b.re);
        rec.y.push(m.b.im);
        if spec.record_moments {
            rec.n.push(m.n);
            rec.b2.push(m.b2);
        }
        Ok(())
    };

    // segments between jumps; local time τ = t − t0
    loop {
        let frame = Frame::new(&gen, &psi, &mut buf);
        let mut rhs_phase = vec![C64::new(1.0, 0.0); dim];
        let mut rhs_u = vec![C64::new(0.0, 0.0); dim];
        let (gen_ref, frame_ref) = (&gen, &frame);
        let rhs = move |tau: f64, phi: &[C64], dphi: &mut [C64]| {
            let nc = frame_ref.nc;
            frame_ref.phases(tau, &mut rhs_phase);
            rhs_u[..=nc].copy_from_slice(&phi[..=nc]);
            for k in nc + 1..phi.len() {
                rhs_u[k] = rhs_phase[k] * phi[k];
            }
            gen_ref.apply_offdiag(&rhs_u, dphi);
            for k in nc + 1..phi.len() {
                dphi[k] *= rhs_phase[k].conj();
            }
            for k in 0..phi.len() {
                let d = C64::new(-gen_ref.half_kappa * k as f64, -frame_ref.diag[k]);
                dphi[k] = C64::new(dphi[k].im, -dphi[k].re) + d * phi[k];
            }
        };
        let mut ode = Dopri5::new(rhs, 0.0, &psi, spec.ode);
        if next_sample < times.len() && times[next_sample] <= t0 {
            record(&mut rec, t0, &psi)?;
            next_sample += 1;
        }
        let tau_end = spec.t_total - t0;
        let mut jumped = false;
        while ode.t() < tau_end {
            ode.step(tau_end).map_err(|e| Error::Numerical(format!("integrator failed at t = {}: {e}", t0 + ode.t())))?;
            let (ta, tb) = (ode.t_prev(), ode.t());
            let nb = norm_sqr(ode.y());
            let tau_jump = if nb <= threshold {
                let (mut lo, mut hi) = (ta, tb);
                while hi - lo > JUMP_TIME_RTOL * (t0 + hi).max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    ode.dense(mid, &mut buf);
                    if norm_sqr(&buf) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            } else {
                None
            };
            let t_limit = tau_jump.unwrap_or(tb);
            while next_sample < times.len() && times[next_sample] - t0 <= t_limit {
                let tau = times[next_sample] - t0;
                ode.dense(tau, &mut buf);
                frame.to_drive_frame(tau, &mut phase, &mut buf);
                record(&mut rec, t0 + tau, &buf)?;
                next_sample += 1;
            }
            if let Some(tau) = tau_jump {
                ode.dense(tau, &mut buf);
                frame.to_drive_frame(tau, &mut phase, &mut buf);
                for k in 0..dim - 1 {
                    psi[k] = buf[k + 1] * ((k + 1) as f64).sqrt();
                }
                psi[dim - 1] = C64::new(0.0, 0.0);
                let s = norm_sqr(&psi);
                if !(s > 0.0) {
                    return Err(Error::Numerical(format!("jump from the vacuum at t = {}", t0 + tau)));
                }
                let s = s.sqrt();
                psi.iter_mut().for_each(|z| *z /= s);
                t0 += tau;
                rec.jump_times.push(t0);
                threshold = draw_threshold(&mut rng);
                jumped = true;
                break;
            }
        }
        if !jumped {
            rec.final_norm_check = norm_sqr(ode.y());
            break;
        }
    }
    if rec.x.len() != times.len() {
        return Err(Error::Numerical(format!("recorded {} of {} samples", rec.x.len(), times.len())));
    }
    Ok(rec)
}

/// Margin over the steady-state truncation used for trajectories, whose
/// conditional states stray further out than the ensemble average.
pub const TRAJECTORY_DIM_FACTOR: f64 = 1.5;

/// Fock space for trajectories at `p`: the steady-state estimate scaled by
/// `factor`.
pub fn trajectory_space(p: &ModelParams, aleph: f64, factor: f64) -> Result<FockSpace> {
    if !(factor >= 1.0) {
        return Err(Error::InvalidParameter(format!("dimension factor must be ≥ 1, got {factor}")));
    }
    let base = choose_truncation(p, aleph)?.dim();
    FockSpace::new((base as f64 * factor).ceil() as usize)
}

/// Runs `spec.n_traj` trajectories with seeds `base_seed + r` in parallel.
pub fn run_ensemble(spec: &EnsembleSpec, p: &ModelParams) -> Result<Vec<TrajectoryRecord>> {
    spec.validate()?;
    (0..spec.n_traj)
        .into_par_iter()
        .map(|r| {
            evolve_trajectory(spec, p, spec.base_seed.wrapping_add(r as u64))
                .map_err(|e| Error::Trajectory { index: r, source: Box::new(e) })
        })
        .collect()
}

/// Ensemble means and standard errors of the recorded moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub b: Vec<C64>,
    pub n: Vec<f64>,
    pub n_stderr: Vec<f64>,
    pub b2: Vec<C64>,
}

pub fn ensemble_moments(records: &[TrajectoryRecord]) -> Result<EnsembleMoments> {
    let first = records.first().ok_or(Error::InsufficientData { required: 1, available: 0 })?;
    let m = first.times.len();
    if records.iter().any(|r| r.n.len() != m || r.b2.len() != m || r.x.len() != m) {
        return Err(Error::InvalidParameter("records lack moments or have mismatched lengths".into()));
    }
    let r = records.len() as f64;
    let mut out = EnsembleMoments {
        times: first.times.clone(),
        b: vec![C64::new(0.0, 0.0); m],
        n: vec![0.0; m],
        n_stderr: vec![0.0; m],
        b2: vec![C64::new(0.0, 0.0); m],
    };
    for rec in records {
        for k in 0..m {
            out.b[k] += rec.beta(k) / r;
            out.n[k] += rec.n[k] / r;
            out.b2[k] += rec.b2[k] / r;
        }
    }
    for k in 0..m {
        let var = records.iter().map(|rec| (rec.n[k] - out.n[k]).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
        out.n_stderr[k] = (var / r).sqrt();
    }
    Ok(out)
}
