//! Dormand–Prince 5(4) integrator with step-size control.

use crate::{Error, Result};

/// Autonomous or non-autonomous system `dy/dt = f(t, y)`.
pub trait OdeSystem<const D: usize> {
    fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { rtol: tol, atol: tol }
    }
}

/// Returned by the step observer to continue or halt integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

/// One accepted step, with endpoint states and slopes for Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep<const D: usize> {
    pub t0: f64,
    pub y0: [f64; D],
    pub f0: [f64; D],
    pub t1: f64,
    pub y1: [f64; D],
    pub f1: [f64; D],
}

impl<const D: usize> AcceptedStep<D> {
    /// Cubic Hermite interpolant on the step.
    pub fn hermite(&self, t: f64) -> [f64; D] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        std::array::from_fn(|i| {
            h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
        })
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combine<const D: usize>(y: &[f64; D], h: f64, ks: &[[f64; D]], w: &[f64]) -> [f64; D] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (k, &wj) in ks.iter().zip(w) {
            acc += wj * k[i];
        }
        y[i] + h * acc
    })
}

/// Adaptive explicit Runge–Kutta integrator (Dormand–Prince 5(4), FSAL).
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol, h_init: 1e-3, h_max: 0.5, h_min: 1e-14, max_steps: 10_000_000 }
    }

    /// Attempts one step of size `h` (may be negative). Returns the new state,
    /// its slope and the scaled error norm (≤ 1 means acceptable).
    pub fn attempt<S: OdeSystem<D>, const D: usize>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64; D],
        f: &[f64; D],
        h: f64,
    ) -> ([f64; D], [f64; D], f64) {
        let k1 = *f;
        let k2 = sys.rhs(t + C[1] * h, &combine(y, h, &[k1], &A2));
        let k3 = sys.rhs(t + C[2] * h, &combine(y, h, &[k1, k2], &A3));
        let k4 = sys.rhs(t + C[3] * h, &combine(y, h, &[k1, k2, k3], &A4));
        let k5 = sys.rhs(t + C[4] * h, &combine(y, h, &[k1, k2, k3, k4], &A5));
        let k6 = sys.rhs(t + C[5] * h, &combine(y, h, &[k1, k2, k3, k4, k5], &A6));
        let y_new = combine(y, h, &[k1, k2, k3, k4, k5, k6], &B);
        let k7 = sys.rhs(t + h, &y_new);
        let ks = [k1, k2, k3, k4, k5, k6, k7];
        let mut sq = 0.0;
        for i in 0..D {
            let mut e = 0.0;
            for (k, &ej) in ks.iter().zip(E.iter()) {
                e += ej * k[i];
            }
            let scale = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            sq += r * r;
        }
        (y_new, k7, (sq / D as f64).sqrt())
    }

    /// Integrates from `t0` to `t_end` (either direction), calling `observer`
    /// after every accepted step. Returns the final time and state.
    pub fn integrate<S, O, const D: usize>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; D],
        t_end: f64,
        mut observer: O,
    ) -> Result<(f64, [f64; D])>
    where
        S: OdeSystem<D>,
        O: FnMut(&AcceptedStep<D>) -> StepControl,
    {
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut t = t0;
        let mut y = y0;
        let mut f = sys.rhs(t, &y);
        let mut h = self.h_init.min(self.h_max) * dir;
        let mut steps = 0usize;
        while (t_end - t) * dir > 0.0 {
            if steps >= self.max_steps {
                return Err(Error::StepUnderflow { t, state: y.to_vec() });
            }
            let remaining = t_end - t;
            let last = h.abs() >= remaining.abs();
            let h_try = if last { remaining } else { h };
            let (y_new, f_new, err) = self.attempt(sys, t, &y, &f, h_try);
            let finite = y_new.iter().all(|v| v.is_finite()) && err.is_finite();
            if finite && err <= 1.0 {
                let t_new = if last { t_end } else { t + h_try };
                let step = AcceptedStep { t0: t, y0: y, f0: f, t1: t_new, y1: y_new, f1: f_new };
                t = t_new;
                y = y_new;
                f = f_new;
                steps += 1;
                if observer(&step) == StepControl::Stop {
                    return Ok((t, y));
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h_try.abs() * factor).min(self.h_max) * dir;
            } else {
                let factor = if finite { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
                h = h_try * factor;
                if h.abs() < self.h_min {
                    return Err(Error::StepUnderflow { t, state: y.to_vec() });
                }
            }
        }
        Ok((t, y))
    }

    /// Solution values at the requested (monotone) times, hitting each exactly.
    pub fn solve_at<S: OdeSystem<D>, const D: usize>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; D],
        times: &[f64],
    ) -> Result<Vec<[f64; D]>> {
        let mut out = Vec::with_capacity(times.len());
        let mut t = t0;
        let mut y = y0;
        for &target in times {
            if target != t {
                let (_, y_new) = self.integrate(sys, t, y, target, |_| StepControl::Continue)?;
                y = y_new;
                t = target;
            }
            out.push(y);
        }
        Ok(out)
    }
}
