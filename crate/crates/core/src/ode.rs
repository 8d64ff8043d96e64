//! Adaptive Dormand–Prince 5(4) integrator on complex state vectors, with the
//! fourth-order continuous extension for dense output.
//!
//! Used for the mean-field flow (a one-component state `β`), the
//! non-Hermitian Schrödinger equation of the quantum-jump unraveling and the
//! vectorised master equation.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and limits for [`Dopri5`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

/// Stateful stepper for `dy/dt = f(t, y)`.
///
/// After each accepted [`step`](Dopri5::step) the interval `[t_prev, t]` is
/// covered by [`dense`](Dopri5::dense).
pub struct Dopri5<F> {
    f: F,
    settings: OdeSettings,
    t: f64,
    t_prev: f64,
    h: f64,
    y: Vec<C64>,
    y_prev: Vec<C64>,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    err: Vec<C64>,
    dense_coef: [Vec<C64>; 5],
    fsal: bool,
    pub steps: usize,
    pub rejected: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    pub fn new(f: F, t0: f64, y0: &[C64], settings: OdeSettings) -> Self {
        let n = y0.len();
        let z = || vec![C64::new(0.0, 0.0); n];
        Self {
            f,
            settings,
            t: t0,
            t_prev: t0,
            h: 0.0,
            y: y0.to_vec(),
            y_prev: y0.to_vec(),
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            err: z(),
            dense_coef: [z(), z(), z(), z(), z()],
            fsal: false,
            steps: 0,
            rejected: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t_prev(&self) -> f64 {
        self.t_prev
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    /// Replaces the state (e.g. after a quantum jump). The step size guess
    /// is kept; the FSAL derivative is recomputed.
    pub fn reset(&mut self, t: f64, y: &[C64]) {
        self.t = t;
        self.t_prev = t;
        self.y.copy_from_slice(y);
        self.y_prev.copy_from_slice(y);
        self.fsal = false;
    }

    fn weighted_norm(&self, v: &[C64], a: &[C64], b: &[C64]) -> f64 {
        let s = &self.settings;
        let mut acc = 0.0;
        for i in 0..v.len() {
            let sc = s.atol + s.rtol * a[i].norm().max(b[i].norm());
            let r = v[i].norm() / sc;
            acc += r * r;
        }
        (acc / v.len().max(1) as f64).sqrt()
    }

    fn initial_step(&mut self, t_end: f64) -> f64 {
        let n = self.y.len();
        let d0 = self.weighted_norm(&self.y, &self.y, &self.y);
        let d1 = self.weighted_norm(&self.k[0], &self.y, &self.y);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min((t_end - self.t).abs()).min(self.settings.h_max);
        for i in 0..n {
            self.tmp[i] = self.y[i] + self.k[0][i] * h0;
        }
        let (tmp, k1) = (&self.tmp, &mut self.k[1]);
        (self.f)(self.t + h0, tmp, k1);
        let mut diff = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            diff[i] = (self.k[1][i] - self.k[0][i]) / h0;
        }
        let d2 = self.weighted_norm(&diff, &self.y, &self.y);
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.settings.h_max)
    }

    /// Takes one accepted step without passing `t_end`. Returns the new time.
    pub fn step(&mut self, t_end: f64) -> Result<f64> {
        let n = self.y.len();
        if t_end <= self.t {
            return Ok(self.t);
        }
        if !self.fsal {
            let (y, k0) = (&self.y, &mut self.k[0]);
            (self.f)(self.t, y, k0);
            self.fsal = true;
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(t_end);
        }
        loop {
            if self.steps + self.rejected >= self.settings.max_steps {
                return Err(Error::Numerical(format!(
                    "ODE step budget {} exhausted at t = {}",
                    self.settings.max_steps, self.t
                )));
            }
            let mut h = self.h.min(self.settings.h_max);
            let last = self.t + h >= t_end;
            if last {
                h = t_end - self.t;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Numerical(format!("step size underflow at t = {}", self.t)));
            }
            let t = self.t;
            self.stages(t, h);
            for i in 0..n {
                self.err[i] = (self.k[0][i] * E1
                    + self.k[2][i] * E3
                    + self.k[3][i] * E4
                    + self.k[4][i] * E5
                    + self.k[5][i] * E6
                    + self.k[6][i] * E7)
                    * h;
            }
            let err = self.weighted_norm(&self.err, &self.y, &self.tmp);
            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * 0.2;
                continue;
            }
            if err <= 1.0 {
                let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
                // dense output coefficients for [t, t + h]
                for i in 0..n {
                    let y0 = self.y[i];
                    let y1 = self.tmp[i];
                    let r2 = y1 - y0;
                    let r3 = self.k[0][i] * h - r2;
                    let r4 = r2 - self.k[6][i] * h - r3;
                    let r5 = (self.k[0][i] * D1
                        + self.k[2][i] * D3
                        + self.k[3][i] * D4
                        + self.k[4][i] * D5
                        + self.k[5][i] * D6
                        + self.k[6][i] * D7)
                        * h;
                    self.dense_coef[0][i] = y0;
                    self.dense_coef[1][i] = r2;
                    self.dense_coef[2][i] = r3;
                    self.dense_coef[3][i] = r4;
                    self.dense_coef[4][i] = r5;
                }
                std::mem::swap(&mut self.y_prev, &mut self.y);
                self.y.copy_from_slice(&self.tmp);
                let (k0, k6) = self.k.split_at_mut(6);
                k0[0].copy_from_slice(&k6[0]);
                self.t_prev = t;
                self.t = if last { t_end } else { t + h };
                self.steps += 1;
                // keep the unclipped step proposal when the step was shortened
                // only to land on t_end
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                return Ok(self.t);
            }
            self.rejected += 1;
            self.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }

    fn stages(&mut self, t: f64, h: f64) {
        let n = self.y.len();
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        (self.f)(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        (self.f)(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        (self.f)(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        (self.f)(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        (self.f)(t + h, tmp, k6);
        for i in 0..n {
            tmp[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        (self.f)(t + h, tmp, k7);
    }

    /// Interpolates the last accepted step at time `t ∈ [t_prev, t]`.
    pub fn dense(&self, t: f64, out: &mut [C64]) {
        let h = self.t - self.t_prev;
        if h <= 0.0 {
            out.copy_from_slice(&self.y);
            return;
        }
        let th = (t - self.t_prev) / h;
        let th1 = 1.0 - th;
        let [c0, c1, c2, c3, c4] = &self.dense_coef;
        for i in 0..out.len() {
            out[i] = c0[i] + (c1[i] + (c2[i] + (c3[i] + c4[i] * th1) * th) * th1) * th;
        }
    }

    /// Integrates to `t_end`, returning the final state.
    pub fn integrate_to(&mut self, t_end: f64) -> Result<&[C64]> {
        while self.t < t_end {
            self.step(t_end)?;
        }
        Ok(&self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_with_rotation() {
        let lam = C64::new(-0.3, 2.0);
        let mut s = Dopri5::new(
            move |_t, y: &[C64], dy: &mut [C64]| dy[0] = lam * y[0],
            0.0,
            &[C64::new(1.0, 0.0)],
            OdeSettings { rtol: 1e-10, atol: 1e-14, ..Default::default() },
        );
        let y = s.integrate_to(5.0).unwrap()[0];
        let exact = (lam * 5.0).exp();
        assert!((y - exact).norm() < 1e-8, "{y} vs {exact}");
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        let lam = C64::new(-0.5, 3.0);
        let mut s = Dopri5::new(
            move |_t, y: &[C64], dy: &mut [C64]| dy[0] = lam * y[0],
            0.0,
            &[C64::new(1.0, 0.0)],
            OdeSettings { rtol: 1e-9, atol: 1e-13, ..Default::default() },
        );
        let mut out = [C64::new(0.0, 0.0)];
        let mut worst: f64 = 0.0;
        while s.t() < 3.0 {
            s.step(3.0).unwrap();
            for j in 1..4 {
                let t = s.t_prev() + (s.t() - s.t_prev()) * j as f64 / 4.0;
                s.dense(t, &mut out);
                worst = worst.max((out[0] - (lam * t).exp()).norm());
            }
        }
        assert!(worst < 1e-7, "dense interpolation error {worst}");
    }

    #[test]
    fn lands_exactly_on_end_time() {
        let mut s = Dopri5::new(
            |_t, y: &[C64], dy: &mut [C64]| dy[0] = -y[0],
            0.0,
            &[C64::new(1.0, 0.0)],
            OdeSettings::default(),
        );
        s.integrate_to(1.234).unwrap();
        assert_eq!(s.t(), 1.234);
    }
}
