//! Phase-plane analysis of the constant-scalar-curvature ODE
//! `4u'' − (n−2)²u + n(n−2)u^((n+2)/(n−2)) = 0`.
//!
//! Periodic positive solutions are closed orbits around the equilibrium `u₀` inside the
//! homoclinic loop through the origin. Their period `τ(α)`, as a function of the maximum
//! `α ∈ (u₀, 1)`, decides how many constant-scalar-curvature metrics exist on a circle of
//! circumference `T`: one branch for every `k ≥ 1` with `τ(α) = T/k`.

use std::f64::consts::PI;
use std::io;

use serde::Serialize;

use crate::exec::{map_slice, Execution};
use crate::numerics::ode::AcceptedStep;
use crate::numerics::{bisect, integrate, polynomial_fit, Dopri5, OdeSystem, StepControl, Tolerances};
use crate::{Error, Result};

/// Dimension-dependent constants of the ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeParams {
    pub n: u32,
}

impl OdeParams {
    pub fn new(n: u32) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 3, got {n}")));
        }
        Ok(Self { n })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn big_n(&self) -> f64 {
        2.0 * self.nf() / (self.nf() - 2.0)
    }

    /// Nonconstant equilibrium `((n−2)/n)^((n−2)/4)`.
    pub fn u0(&self) -> f64 {
        let n = self.nf();
        ((n - 2.0) / n).powf((n - 2.0) / 4.0)
    }

    /// Small-oscillation period `2π/√(n−2)`.
    pub fn t0(&self) -> f64 {
        2.0 * PI / (self.nf() - 2.0).sqrt()
    }

    fn c(&self) -> f64 {
        let m = self.nf() - 2.0;
        m * m / 4.0
    }

    /// Potential `U(u) = ((n−2)²/4)(u^N − u²)`, so that `H/2 = v² + U(u)`.
    pub fn potential(&self, u: f64) -> f64 {
        self.c() * (u.powf(self.big_n()) - u * u)
    }

    /// `U(u) − U(u₀)` without cancellation for `u` near `u₀`.
    pub fn potential_above_equilibrium(&self, u: f64) -> f64 {
        let u0 = self.u0();
        let d = u - u0;
        let pow_diff = u0.powf(self.big_n()) * (self.big_n() * (d / u0).ln_1p()).exp_m1();
        self.c() * (pow_diff - d * (u + u0))
    }

    pub fn potential_d1(&self, u: f64) -> f64 {
        let n = self.big_n();
        self.c() * (n * u.powf(n - 1.0) - 2.0 * u)
    }

    pub fn potential_d2(&self, u: f64) -> f64 {
        let n = self.big_n();
        self.c() * (n * (n - 1.0) * u.powf(n - 2.0) - 2.0)
    }

    pub fn potential_d3(&self, u: f64) -> f64 {
        let n = self.big_n();
        self.c() * n * (n - 1.0) * (n - 2.0) * u.powf(n - 3.0)
    }

    /// Largest admissible height `√(−U(u₀))`; the homoclinic loop.
    pub fn beta_max(&self) -> f64 {
        (-self.potential(self.u0())).sqrt()
    }
}

/// State `(u, u')` of the ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub u: f64,
    pub v: f64,
}

impl PhasePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// `(v, [(n−2)²u − n(n−2)u^((n+2)/(n−2))]/4)`.
pub fn vector_field(p: PhasePoint, params: &OdeParams) -> (f64, f64) {
    let n = params.nf();
    let accel = ((n - 2.0) * (n - 2.0) * p.u - n * (n - 2.0) * p.u.powf(params.big_n() - 1.0)) / 4.0;
    (p.v, accel)
}

/// `H(u, v) = 2v² + (n−2)²(u^N − u²)/2`.
pub fn hamiltonian(p: PhasePoint, params: &OdeParams) -> f64 {
    2.0 * p.v * p.v + 2.0 * params.potential(p.u)
}

struct YamabeOde(OdeParams);

impl OdeSystem<2> for YamabeOde {
    fn rhs(&self, _t: f64, y: &[f64; 2]) -> [f64; 2] {
        let (a, b) = vector_field(PhasePoint::new(y[0], y[1]), &self.0);
        [a, b]
    }
}

fn solver(tol: f64) -> Dopri5 {
    let mut s = Dopri5::new(Tolerances { rtol: tol, atol: tol * 1e-2 });
    s.h_max = 0.25;
    s.h_init = 1e-3;
    s
}

/// A trajectory of the ODE with its Hamiltonian bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct Orbit {
    pub params: OdeParams,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    /// Hamiltonian at the starting point.
    pub energy: f64,
}

impl Orbit {
    /// `max_i |H(p_i) − H(p_0)| / (1 + |H(p_0)|)`.
    pub fn relative_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|p| (hamiltonian(*p, &self.params) - self.energy).abs())
            .fold(0.0, f64::max)
            / (1.0 + self.energy.abs())
    }

    /// Largest distance from the equilibrium `(u₀, 0)`.
    pub fn max_radius(&self) -> f64 {
        let u0 = self.params.u0();
        self.states.iter().map(|p| ((p.u - u0).powi(2) + p.v * p.v).sqrt()).fold(0.0, f64::max)
    }

    pub fn last(&self) -> PhasePoint {
        *self.states.last().expect("orbit has at least the start point")
    }
}

/// Adaptive Runge–Kutta trajectory from `start` to `t_end` (negative `t_end` integrates backward).
pub fn integrate_orbit(start: PhasePoint, params: &OdeParams, t_end: f64, tol: f64) -> Result<Orbit> {
    if !(start.u > 0.0) {
        return Err(Error::InvalidParameter(format!("start must have u > 0, got {}", start.u)));
    }
    let mut times = vec![0.0];
    let mut states = vec![start];
    solver(tol).integrate(&YamabeOde(*params), 0.0, [start.u, start.v], t_end, |s| {
        times.push(s.t1);
        states.push(PhasePoint::new(s.y1[0], s.y1[1]));
        StepControl::Continue
    })?;
    Ok(Orbit { params: *params, times, states, energy: hamiltonian(start, params) })
}

/// States at the requested monotone times, integrating from `start` at `t = 0`.
pub fn sample_orbit(start: PhasePoint, params: &OdeParams, times: &[f64], tol: f64) -> Result<Vec<PhasePoint>> {
    let ys = solver(tol).solve_at(&YamabeOde(*params), 0.0, [start.u, start.v], times)?;
    Ok(ys.into_iter().map(|y| PhasePoint::new(y[0], y[1])).collect())
}

/// Which closed-form solution to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExplicitSolution {
    /// `u ≡ u₀`.
    Constant,
    /// `u₁(t) = cosh(t)^(−(n−2)/2)`.
    Spherical,
}

/// Maximum ODE residual of the closed-form solution on 4001 samples of `[−10, 10]`,
/// using its analytic second derivative.
pub fn explicit_solution_residual(params: &OdeParams, which: ExplicitSolution) -> f64 {
    let n = params.nf();
    let a = (n - 2.0) / 2.0;
    let p = params.big_n() - 1.0;
    (0..=4000)
        .map(|i| {
            let t = -10.0 + 20.0 * i as f64 / 4000.0;
            let (u, upp) = match which {
                ExplicitSolution::Constant => (params.u0(), 0.0),
                ExplicitSolution::Spherical => {
                    let c = t.cosh();
                    (c.powf(-a), a * a * c.powf(-a) - a * (a + 1.0) * c.powf(-a - 2.0))
                }
            };
            (4.0 * upp - (n - 2.0) * (n - 2.0) * u + n * (n - 2.0) * u.powf(p)).abs()
        })
        .fold(0.0, f64::max)
}

/// Settings for the event-detection period computation.
#[derive(Debug, Clone, Copy)]
pub struct PeriodOptions {
    pub tol: f64,
    /// Give up if no return happens before this time.
    pub t_cap: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        Self { tol: 1e-12, t_cap: 1e4 }
    }
}

fn polish_crossing(sys: &YamabeOde, step: &AcceptedStep<2>, integrator: &Dopri5) -> (f64, [f64; 2]) {
    // Hermite root for a starting guess, then Newton on v(t0 + h) with exact RK steps.
    let h_full = step.t1 - step.t0;
    let guess = bisect(|s| step.hermite(step.t0 + s * h_full)[1], 0.0, 1.0, 1e-14).unwrap_or(1.0);
    let mut h = guess * h_full;
    let mut y = step.hermite(step.t0 + h);
    for _ in 0..8 {
        let (y_new, f_new, _) = integrator.attempt(sys, step.t0, &step.y0, &step.f0, h);
        y = y_new;
        let dv = f_new[1];
        if dv == 0.0 {
            break;
        }
        let dh = y[1] / dv;
        h -= dh;
        if dh.abs() <= 1e-15 * (step.t0.abs() + h.abs()) {
            let (y_fin, _, _) = integrator.attempt(sys, step.t0, &step.y0, &step.f0, h);
            y = y_fin;
            break;
        }
    }
    (step.t0 + h, y)
}

/// Full period of the closed orbit through `(α, 0)`, detected as the second
/// `v = 0` crossing on the `u > u₀` side.
pub fn period(alpha: f64, params: &OdeParams, opts: PeriodOptions) -> Result<f64> {
    let u0 = params.u0();
    if !(alpha > u0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside ({u0}, 1)")));
    }
    let sys = YamabeOde(*params);
    let integrator = solver(opts.tol);
    let mut crossings = 0;
    let mut result = None;
    integrator.integrate(&sys, 0.0, [alpha, 0.0], opts.t_cap, |s| {
        let (v0, v1) = (s.y0[1], s.y1[1]);
        let crossed = (v0 < 0.0 && v1 >= 0.0) || (v0 > 0.0 && v1 <= 0.0);
        if !crossed {
            return StepControl::Continue;
        }
        let (t, y) = polish_crossing(&sys, s, &integrator);
        if (y[0] - u0).abs() <= 1e-10 {
            return StepControl::Continue;
        }
        crossings += 1;
        if crossings >= 2 && y[0] > u0 {
            result = Some(t);
            StepControl::Stop
        } else {
            StepControl::Continue
        }
    })?;
    result.ok_or(Error::NoReturn { t_cap: opts.t_cap })
}

/// Limit of `τ(α)` as `α ↘ u₀`, extrapolated from a geometric sequence of amplitudes.
pub fn period_limit_at_equilibrium(params: &OdeParams, opts: PeriodOptions) -> Result<f64> {
    let eps: Vec<f64> = (0..7).map(|k| 0.02 * 0.5f64.powi(k)).collect();
    let taus = eps
        .iter()
        .map(|e| period(params.u0() + e, params, opts))
        .collect::<Result<Vec<_>>>()?;
    // The period is analytic in the energy, which has no linear term in the amplitude.
    let c = polynomial_fit(&eps, &taus, &[0, 2, 3, 4]);
    Ok(c[0])
}

fn check_beta(beta: f64, params: &OdeParams) -> Result<()> {
    if !(beta > 0.0 && beta < params.beta_max()) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} outside (0, {})",
            params.beta_max()
        )));
    }
    Ok(())
}

/// Turning points `(z₋, z₊)` with `U(z±) = β² + U(u₀)`.
pub fn turning_points(beta: f64, params: &OdeParams) -> Result<(f64, f64)> {
    check_beta(beta, params)?;
    let u0 = params.u0();
    let b2 = beta * beta;
    let g = |u: f64| params.potential_above_equilibrium(u) - b2;
    let z_minus = bisect(g, 0.0, u0, 1e-17)?;
    let z_plus = bisect(g, u0, 1.0, 1e-17)?;
    Ok((z_minus, z_plus))
}

/// The height `β` of the orbit with maximum `α`, i.e. `β² = U(α) − U(u₀)`.
pub fn beta_of_alpha(alpha: f64, params: &OdeParams) -> Result<f64> {
    let u0 = params.u0();
    if !(alpha > u0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside ({u0}, 1)")));
    }
    Ok(params.potential_above_equilibrium(alpha).sqrt())
}

/// Full period from the turning-point integral `2∫ du / √(H/2 − U(u))`.
///
/// With `u = c + h·sin θ` the square-root singularities at `z±` cancel against `cos θ`.
/// The gap `H/2 − U(u)` is written as `U(z±) − U(z± ∓ d)` in the distance `d` to the
/// nearer turning point, so that it keeps full relative precision as `d → 0`.
pub fn period_quadrature(beta: f64, params: &OdeParams) -> Result<f64> {
    let (zm, zp) = turning_points(beta, params)?;
    let h = 0.5 * (zp - zm);
    let big_n = params.big_n();
    let k = params.c();
    // U(z) − U(z + d), accurate for small |d|.
    let drop = |z: f64, d: f64| -> f64 {
        k * (-z.powf(big_n) * (big_n * (d / z).ln_1p()).exp_m1() + d * (2.0 * z + d))
    };
    let integrand = |theta: f64| {
        let s = theta.sin();
        let cs = theta.cos();
        if cs <= 0.0 {
            return 0.0;
        }
        let gap = if s > 0.0 {
            drop(zp, -h * cs * cs / (1.0 + s))
        } else {
            drop(zm, h * cs * cs / (1.0 - s))
        };
        h * cs / gap.max(f64::MIN_POSITIVE).sqrt()
    };
    let r = integrate(integrand, -PI / 2.0, PI / 2.0, 1e-12, 1e-10)?;
    Ok(2.0 * r.value)
}

/// One row of a period table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodSample {
    pub alpha: f64,
    pub tau: f64,
    pub hamiltonian: f64,
    pub z_minus: f64,
    pub z_plus: f64,
}

/// Samples of the period function, sorted by amplitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodTable {
    pub params: OdeParams,
    pub samples: Vec<PeriodSample>,
}

impl PeriodTable {
    /// Evaluates `τ` by event detection on the given amplitudes.
    pub fn build(params: &OdeParams, alphas: &[f64], opts: PeriodOptions, exec: Execution) -> Result<Self> {
        let mut sorted = alphas.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("amplitudes must be distinct".into()));
        }
        let rows = map_slice(exec, &sorted, |&alpha| -> Result<PeriodSample> {
            let tau = period(alpha, params, opts)?;
            let (z_minus, z_plus) = turning_points(beta_of_alpha(alpha, params)?, params)?;
            Ok(PeriodSample {
                alpha,
                tau,
                hamiltonian: hamiltonian(PhasePoint::new(alpha, 0.0), params),
                z_minus,
                z_plus,
            })
        });
        let samples = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { params: *params, samples })
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].tau > w[0].tau)
    }

    /// CSV with columns `alpha,tau,H,z_minus,z_plus`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha", "tau", "H", "z_minus", "z_plus"])?;
        for s in &self.samples {
            out.write_record(
                [s.alpha, s.tau, s.hamiltonian, s.z_minus, s.z_plus].map(|x| format!("{x:.17e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Convexity of the orbit width `z₊ − z₋` as a function of the height `β`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub betas: Vec<f64>,
    pub widths: Vec<f64>,
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
    /// `A = −U'''(u₀) / (3 U''(u₀)²)`, the common limit of `z''±/2` as `β → 0`.
    pub a_constant: f64,
    /// Induced amplitudes `α = z₊(β)` and the periods there.
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub tau_strictly_increasing: bool,
}

/// Uniform `β`-grid of `count` points strictly inside `(0, β_max)`.
pub fn beta_grid(params: &OdeParams, lo_frac: f64, hi_frac: f64, count: usize) -> Vec<f64> {
    let bm = params.beta_max();
    (0..count)
        .map(|i| bm * (lo_frac + (hi_frac - lo_frac) * i as f64 / (count as f64 - 1.0)))
        .collect()
}

pub fn width_convexity_report(params: &OdeParams, betas: &[f64], exec: Execution) -> Result<ConvexityReport> {
    let rows = map_slice(exec, betas, |&b| -> Result<(f64, f64, f64)> {
        let (zm, zp) = turning_points(b, params)?;
        Ok((zm, zp, period_quadrature(b, params)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let widths: Vec<f64> = rows.iter().map(|r| r.1 - r.0).collect();
    let second_differences: Vec<f64> =
        widths.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let min_second_difference = second_differences.iter().copied().fold(f64::INFINITY, f64::min);
    let u0 = params.u0();
    let a_constant = -params.potential_d3(u0) / (3.0 * params.potential_d2(u0).powi(2));
    let taus: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let tau_strictly_increasing = taus.windows(2).all(|w| w[1] > w[0]);
    Ok(ConvexityReport {
        betas: betas.to_vec(),
        widths,
        second_differences,
        min_second_difference,
        a_constant,
        alphas: rows.iter().map(|r| r.1).collect(),
        taus,
        tau_strictly_increasing,
    })
}

/// A nonconstant constant-scalar-curvature solution with `k` periods on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CscBranch {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `T/k`, the period of the orbit.
    pub period: f64,
}

/// All constant-scalar-curvature solutions on a circle of circumference `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CscEnumeration {
    pub circumference: f64,
    /// The constant solution `u ≡ u₀` always exists.
    pub constant: f64,
    pub branches: Vec<CscBranch>,
}

/// Solves `τ = T/k` for each `k` with `T/k > T₀`, bisecting on the monotone period function.
pub fn csc_enumerate(circumference: f64, params: &OdeParams) -> Result<CscEnumeration> {
    if !(circumference > 0.0) {
        return Err(Error::InvalidParameter(format!("circumference must be positive, got {circumference}")));
    }
    let t0 = params.t0();
    let bm = params.beta_max();
    let mut branches = Vec::new();
    let mut k = 1;
    while circumference / k as f64 > t0 {
        let target = circumference / k as f64;
        let lo = 1e-6 * bm;
        let mut hi = None;
        for j in 1..=13 {
            let b = bm * (1.0 - 10f64.powi(-j));
            if period_quadrature(b, params)? > target {
                hi = Some(b);
                break;
            }
        }
        // Periods beyond the last resolvable height belong to orbits within ~1e-13 of the loop.
        let Some(hi) = hi else { break };
        let beta = if period_quadrature(lo, params)? >= target {
            lo
        } else {
            bisect(|b| period_quadrature(b, params).unwrap_or(f64::NAN) - target, lo, hi, 1e-15 * bm)?
        };
        let (_, alpha) = turning_points(beta, params)?;
        branches.push(CscBranch { k, alpha, beta, period: target });
        k += 1;
    }
    Ok(CscEnumeration { circumference, constant: params.u0(), branches })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classical fixed-step RK4, independent of the adaptive integrator.
    fn rk4(params: &OdeParams, start: PhasePoint, t_end: f64, steps: usize) -> PhasePoint {
        let h = t_end / steps as f64;
        let f = |y: [f64; 2]| {
            let (a, b) = vector_field(PhasePoint::new(y[0], y[1]), params);
            [a, b]
        };
        let mut y = [start.u, start.v];
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        PhasePoint::new(y[0], y[1])
    }

    #[test]
    fn equilibrium_and_sign_of_acceleration() {
        for n in 3..=8 {
            let p = OdeParams::new(n).unwrap();
            let (a, b) = vector_field(PhasePoint::new(p.u0(), 0.0), &p);
            assert_eq!(a, 0.0);
            assert!(b.abs() < 1e-14);
            for &u in &[0.1, 0.5, p.u0() * 0.99, p.u0() * 1.01, 0.95, 1.2] {
                let (_, acc) = vector_field(PhasePoint::new(u, 0.0), &p);
                assert_eq!(acc < 0.0, u > p.u0(), "n = {n}, u = {u}");
            }
        }
        let p4 = OdeParams::new(4).unwrap();
        let (a, b) = vector_field(PhasePoint::new(1.0, 0.0), &p4);
        assert_eq!((a, b), (0.0, -1.0));
    }

    #[test]
    fn hamiltonian_values() {
        for n in 3..=7 {
            let p = OdeParams::new(n).unwrap();
            assert!(hamiltonian(PhasePoint::new(1.0, 0.0), &p).abs() < 1e-15);
        }
        let p4 = OdeParams::new(4).unwrap();
        assert!((p4.u0() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((hamiltonian(PhasePoint::new(p4.u0(), 0.0), &p4) + 0.5).abs() < 1e-14);
        assert!((p4.potential(p4.u0()) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_conserved_along_orbit() {
        let p = OdeParams::new(4).unwrap();
        let orbit = integrate_orbit(PhasePoint::new(0.9, 0.0), &p, 50.0, 1e-12).unwrap();
        assert!(orbit.relative_drift() < 1e-9, "drift {}", orbit.relative_drift());
    }

    #[test]
    fn agrees_with_fixed_step_oracle() {
        let p = OdeParams::new(4).unwrap();
        let start = PhasePoint::new(0.9, 0.0);
        let orbit = integrate_orbit(start, &p, 5.0, 1e-13).unwrap();
        let oracle = rk4(&p, start, 5.0, 20_000);
        let end = orbit.last();
        assert!((end.u - oracle.u).abs() < 1e-8 && (end.v - oracle.v).abs() < 1e-8);
    }

    #[test]
    fn homoclinic_orbit_approaches_origin() {
        let p = OdeParams::new(4).unwrap();
        for t_end in [10.0, -10.0] {
            let orbit = integrate_orbit(PhasePoint::new(1.0, 0.0), &p, t_end, 1e-13).unwrap();
            let end = orbit.last();
            assert!(end.u < 1e-3 && end.v.abs() < 1e-3);
            assert!(orbit.relative_drift() < 1e-10);
            // sech(10)
            assert!((end.u - 1.0 / 10f64.cosh()).abs() < 1e-8);
        }
    }

    #[test]
    fn equilibrium_orbit_is_stationary() {
        let p = OdeParams::new(5).unwrap();
        let orbit = integrate_orbit(PhasePoint::new(p.u0(), 0.0), &p, 20.0, 1e-12).unwrap();
        for s in &orbit.states {
            assert!((s.u - p.u0()).abs() < 1e-13 && s.v.abs() < 1e-13);
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let p = OdeParams::new(4).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
        let neg: Vec<f64> = times.iter().map(|t| -t).collect();
        let fwd = sample_orbit(PhasePoint::new(0.85, 0.0), &p, &times, 1e-13).unwrap();
        let bwd = sample_orbit(PhasePoint::new(0.85, 0.0), &p, &neg, 1e-13).unwrap();
        for (a, b) in fwd.iter().zip(&bwd) {
            assert!((a.u - b.u).abs() < 1e-10);
            assert!((a.v + b.v).abs() < 1e-10);
        }
    }

    #[test]
    fn orbits_are_nested_and_stay_inside_the_loop() {
        let p = OdeParams::new(4).unwrap();
        let mut last_radius = 0.0;
        for alpha in [0.75, 0.8, 0.9, 0.99] {
            let orbit = integrate_orbit(PhasePoint::new(alpha, 0.0), &p, 40.0, 1e-12).unwrap();
            assert!(orbit.max_radius() > last_radius);
            last_radius = orbit.max_radius();
            for s in &orbit.states {
                assert!(hamiltonian(*s, &p) < 0.0 && s.u > 0.0 && s.u < 1.0);
            }
        }
    }

    #[test]
    fn explicit_solutions() {
        for n in 3..=6 {
            let p = OdeParams::new(n).unwrap();
            assert!(explicit_solution_residual(&p, ExplicitSolution::Constant) < 1e-12);
        }
        assert!(explicit_solution_residual(&OdeParams::new(4).unwrap(), ExplicitSolution::Spherical) < 1e-10);
        assert!(explicit_solution_residual(&OdeParams::new(3).unwrap(), ExplicitSolution::Spherical) < 1e-9);
    }

    #[test]
    fn spherical_second_derivative_matches_finite_differences() {
        // Sixth-order central stencil on cosh^(-a).
        for n in [3u32, 4, 5, 6] {
            let a = (n as f64 - 2.0) / 2.0;
            let u = |t: f64| t.cosh().powf(-a);
            let h = 1e-2;
            for &t in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                let fd = (2.0 * u(t + 3.0 * h) - 27.0 * u(t + 2.0 * h) + 270.0 * u(t + h) - 490.0 * u(t)
                    + 270.0 * u(t - h)
                    - 27.0 * u(t - 2.0 * h)
                    + 2.0 * u(t - 3.0 * h))
                    / (180.0 * h * h);
                let c = t.cosh();
                let exact = a * a * c.powf(-a) - a * (a + 1.0) * c.powf(-a - 2.0);
                assert!((fd - exact).abs() < 1e-9, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn small_oscillation_period() {
        let p = OdeParams::new(4).unwrap();
        let tau = period(p.u0() + 1e-4, &p, PeriodOptions::default()).unwrap();
        assert!((tau - p.t0()).abs() < 1e-3);
        assert!((p.t0() - 4.44288).abs() < 1e-5);
        let lim = period_limit_at_equilibrium(&p, PeriodOptions::default()).unwrap();
        assert!((lim - p.t0()).abs() < 1e-6);
    }

    #[test]
    fn period_grows_toward_the_homoclinic_loop() {
        let p = OdeParams::new(4).unwrap();
        let opts = PeriodOptions::default();
        let taus: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|e| period(1.0 - e, &p, opts).unwrap())
            .collect();
        assert!(taus.windows(2).all(|w| w[1] > w[0] + 1.0));
        // Logarithmic divergence: about (4/(n-2))·ln(10) per two decades.
        let slope = (taus[3] - taus[2]) / (2.0 * 10f64.ln());
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn period_rejects_out_of_range_amplitudes() {
        let p = OdeParams::new(4).unwrap();
        assert!(period(p.u0(), &p, PeriodOptions::default()).is_err());
        assert!(period(1.0, &p, PeriodOptions::default()).is_err());
        assert!(period_quadrature(0.0, &p).is_err());
        assert!(period_quadrature(p.beta_max(), &p).is_err());
    }

    #[test]
    fn no_return_within_cap_is_reported() {
        let p = OdeParams::new(4).unwrap();
        let opts = PeriodOptions { tol: 1e-10, t_cap: 1.0 };
        assert!(matches!(period(0.9, &p, opts), Err(Error::NoReturn { .. })));
    }

    #[test]
    fn quadrature_limit_and_agreement_with_event_detection() {
        for n in [3u32, 4, 5] {
            let p = OdeParams::new(n).unwrap();
            let small = period_quadrature(1e-5 * p.beta_max(), &p).unwrap();
            assert!((small - p.t0()).abs() < 1e-3);
            for frac in [0.05, 0.3, 0.6, 0.9, 0.99] {
                let b = frac * p.beta_max();
                let (_, zp) = turning_points(b, &p).unwrap();
                let tq = period_quadrature(b, &p).unwrap();
                let te = period(zp, &p, PeriodOptions::default()).unwrap();
                assert!((tq - te).abs() < 1e-6 * te, "n={n} frac={frac}: {tq} vs {te}");
            }
        }
    }

    #[test]
    fn convexity_report_for_n4() {
        let p = OdeParams::new(4).unwrap();
        let grid = beta_grid(&p, 0.01, 0.99, 50);
        let r = width_convexity_report(&p, &grid, Execution::Sequential).unwrap();
        assert!(r.min_second_difference >= -1e-6);
        assert!(r.a_constant < 0.0);
        assert!(r.tau_strictly_increasing);
    }

    #[test]
    fn csc_enumeration_counts() {
        let p = OdeParams::new(4).unwrap();
        assert!(csc_enumerate(p.t0(), &p).unwrap().branches.is_empty());
        let one = csc_enumerate(1.5 * p.t0(), &p).unwrap();
        assert_eq!(one.branches.len(), 1);
        assert_eq!(one.branches[0].k, 1);
        let tau = period(one.branches[0].alpha, &p, PeriodOptions::default()).unwrap();
        assert!((tau - 1.5 * p.t0()).abs() < 1e-8);
        let two = csc_enumerate(2.5 * p.t0(), &p).unwrap();
        assert_eq!(two.branches.iter().map(|b| b.k).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn period_table_csv() {
        let p = OdeParams::new(4).unwrap();
        let table = PeriodTable::build(&p, &[0.9, 0.8], PeriodOptions::default(), Execution::Sequential).unwrap();
        assert!(table.samples[0].alpha < table.samples[1].alpha);
        assert!(table.is_strictly_increasing());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,tau,H,z_minus,z_plus\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
