//! Volume-normalized Yamabe flow for circle-symmetric conformal factors,
//!
//! ```text
//! (N−2) ∂u/∂t = (N+2) u^(2−N) u'' − R∞ u^(3−N) + r u,
//! ```
//!
//! integrated with a linearly implicit Euler step: the diffusion and reaction slopes frozen
//! at their means are treated implicitly mode by mode, the remainder explicitly. Step doubling for error control and Richardson
//! extrapolation of the accepted state. The volume is held at the reference volume, so
//! the constant limit is `u∞ ≡ 1`.

use std::io;

use serde::{Deserialize, Serialize};

use crate::exec::{map_slice, Execution};
use crate::geometry::{ConformalFactor, ManifoldSpec};
use crate::lyapunov_schmidt::{KernelBasis, Sector};
use crate::numerics::linear_fit;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Accept a step when the step-doubling estimate is below this.
    pub tol: f64,
    pub u0: ConformalFactor,
    /// Limit to measure distances against; the constant `1` when absent.
    pub target: Option<ConformalFactor>,
    /// Consecutive sample times satisfy `1 + t_{i+1} = ratio·(1 + t_i)`.
    pub sample_ratio: f64,
    /// Stop once `‖u − u∞‖_{C⁰}` is below this.
    pub converge_c0: f64,
    pub max_steps: usize,
}

impl FlowConfig {
    /// Defaults for a start `u0` at the reference volume.
    pub fn new(u0: ConformalFactor, t_end: f64) -> Self {
        Self {
            dt_init: 1e-3,
            dt_max: 0.5,
            t_end,
            tol: 1e-8,
            u0,
            target: None,
            sample_ratio: 1.02,
            converge_c0: 1e-11,
            max_steps: 50_000_000,
        }
    }

    pub fn spec(&self) -> &ManifoldSpec {
        self.u0.spec()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_init > 0.0 && self.dt_init <= self.dt_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt_init <= dt_max, got {} and {}",
                self.dt_init, self.dt_max
            )));
        }
        if !(self.tol > 0.0 && self.t_end > 0.0 && self.sample_ratio > 1.0) {
            return Err(Error::InvalidParameter("tol, t_end and sample_ratio - 1 must be positive".into()));
        }
        let v = self.spec().reference_volume();
        let deviation = ((self.u0.volume() - v) / v).abs();
        if deviation > 1e-8 {
            return Err(Error::VolumeConstraint { deviation });
        }
        if let Some(t) = &self.target {
            if t.spec() != self.spec() {
                return Err(Error::InvalidParameter("target lives on a different grid".into()));
            }
        }
        Ok(())
    }
}

/// The reference-volume normalization of `1 + f`.
pub fn perturbed_start(spec: &ManifoldSpec, f: &[f64]) -> Result<ConformalFactor> {
    Ok(ConformalFactor::new(spec, f.iter().map(|x| 1.0 + x).collect())?.normalize_reference())
}

/// Right-hand side `∂u/∂t` of the flow.
pub fn flow_rhs(u: &ConformalFactor) -> Vec<f64> {
    let spec = u.spec();
    let big_n = spec.big_n();
    let r_inf = spec.r_inf();
    let r = u.average_scalar();
    let d2 = spec.grid().second_derivative(u.samples());
    u.samples()
        .iter()
        .zip(&d2)
        .map(|(&x, &xpp)| {
            ((big_n + 2.0) * x.powf(2.0 - big_n) * xpp - r_inf * x.powf(3.0 - big_n) + r * x) / (big_n - 2.0)
        })
        .collect()
}

fn imex_euler(u: &ConformalFactor, dt: f64) -> Result<ConformalFactor> {
    let spec = u.spec();
    let big_n = spec.big_n();
    let r_inf = spec.r_inf();
    let r = u.average_scalar();
    let m = spec.m() as f64;
    // Frozen linearization: diffusion ā·u'' and reaction slope β, both at their means.
    let diffusion = u.samples().iter().map(|x| (big_n + 2.0) / (big_n - 2.0) * x.powf(2.0 - big_n)).sum::<f64>() / m;
    let slope = u
        .samples()
        .iter()
        .map(|x| (-r_inf * (3.0 - big_n) * x.powf(2.0 - big_n) + r) / (big_n - 2.0))
        .sum::<f64>()
        / m;
    // Implicit rate per mode; growing modes and the constant (fixed by the volume) stay explicit.
    let rate = |k: f64| if k == 0.0 { 0.0 } else { (slope - diffusion * k * k).min(0.0) };
    let rhs = flow_rhs(u);
    let linear = spec.grid().apply_symbol(u.samples(), rate);
    let explicit: Vec<f64> =
        u.samples().iter().zip(&rhs).zip(&linear).map(|((x, f), l)| x + dt * (f - l)).collect();
    let next = spec.grid().apply_symbol(&explicit, |k| 1.0 / (1.0 - dt * rate(k)));
    let min = next.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::PositivityLoss { min, t: f64::NAN });
    }
    Ok(ConformalFactor::new(spec, next)?.normalize_reference())
}

/// One step of size `dt`: Richardson combination of a full and two half IMEX steps,
/// with `max|full − half|` as the error estimate.
pub fn step(u: &ConformalFactor, dt: f64) -> Result<(ConformalFactor, f64)> {
    let full = imex_euler(u, dt)?;
    let half = imex_euler(&imex_euler(u, 0.5 * dt)?, 0.5 * dt)?;
    let err = full.samples().iter().zip(half.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let combined: Vec<f64> = full.samples().iter().zip(half.samples()).map(|(a, b)| 2.0 * b - a).collect();
    let min = combined.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::PositivityLoss { min, t: f64::NAN });
    }
    Ok((ConformalFactor::new(u.spec(), combined)?.normalize_reference(), err))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub l2_dist: f64,
    pub c0_dist: f64,
    pub r: f64,
    pub energy: f64,
    /// `vol/V − 1`.
    pub volume: f64,
    /// L² norm of the projection of `u − u∞` on the kernel of `𝓛` (0 when there is none).
    pub kernel_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    ReachedEnd,
    MaxSteps,
}

/// State of a run in progress; enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckpoint {
    pub t: f64,
    pub dt: f64,
    pub u: Vec<f64>,
    pub next_sample: f64,
    pub samples: Vec<FlowSample>,
    pub accepted: usize,
    pub rejected: usize,
    pub max_energy_increase: f64,
    pub max_r_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRun {
    pub samples: Vec<FlowSample>,
    pub termination: Termination,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest per-step increase of the Yamabe quotient.
    pub max_energy_increase: f64,
    /// Largest per-step increase of the average scalar curvature.
    pub max_r_increase: f64,
    pub tol: f64,
    pub final_u: Vec<f64>,
}

impl FlowRun {
    /// `(t, ‖u − u∞‖_{L²})` pairs.
    pub fn l2_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.l2_dist)).collect()
    }

    pub fn c0_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.c0_dist)).collect()
    }

    /// Energy and `r` never rose by more than `10·tol` in a step.
    pub fn is_monotone(&self) -> bool {
        self.max_energy_increase <= 10.0 * self.tol && self.max_r_increase <= 10.0 * self.tol
    }

    /// CSV with columns `t,l2_dist,c0_dist,r,energy,volume`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "l2_dist", "c0_dist", "r", "energy", "volume"])?;
        for s in &self.samples {
            out.write_record([s.t, s.l2_dist, s.c0_dist, s.r, s.energy, s.volume].map(|x| format!("{x:.17e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Adaptive integrator for one flow run.
#[derive(Debug, Clone)]
pub struct Flow {
    config: FlowConfig,
    target: Vec<f64>,
    kernel: Option<KernelBasis>,
    u: ConformalFactor,
    state: FlowCheckpoint,
}

impl Flow {
    pub fn new(config: FlowConfig) -> Result<Self> {
        config.validate()?;
        let u = config.u0.clone();
        let state = FlowCheckpoint {
            t: 0.0,
            dt: config.dt_init,
            u: u.samples().to_vec(),
            next_sample: 0.0,
            samples: Vec::new(),
            accepted: 0,
            rejected: 0,
            max_energy_increase: 0.0,
            max_r_increase: 0.0,
        };
        Self::build(config, u, state)
    }

    pub fn resume(config: FlowConfig, checkpoint: FlowCheckpoint) -> Result<Self> {
        config.validate()?;
        let u = ConformalFactor::new(config.spec(), checkpoint.u.clone())?;
        Self::build(config, u, checkpoint)
    }

    fn build(config: FlowConfig, u: ConformalFactor, state: FlowCheckpoint) -> Result<Self> {
        let spec = config.spec().clone();
        let target = match &config.target {
            Some(t) => t.samples().to_vec(),
            None => vec![1.0; spec.m()],
        };
        let kernel = KernelBasis::new(&spec, Sector::Full).ok();
        Ok(Self { config, target, kernel, u, state })
    }

    pub fn checkpoint(&self) -> &FlowCheckpoint {
        &self.state
    }

    pub fn current(&self) -> &ConformalFactor {
        &self.u
    }

    fn sample(&self) -> FlowSample {
        let spec = self.u.spec();
        let diff: Vec<f64> = self.u.samples().iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let kernel_norm = self
            .kernel
            .as_ref()
            .map(|k| k.coordinates(&diff).iter().map(|c| c * c).sum::<f64>().sqrt())
            .unwrap_or(0.0);
        FlowSample {
            t: self.state.t,
            l2_dist: spec.l2_norm(&diff),
            c0_dist: diff.iter().fold(0.0, |acc, d| acc.max(d.abs())),
            r: self.u.average_scalar(),
            energy: self.u.yamabe_energy(),
            volume: self.u.volume() / spec.reference_volume() - 1.0,
            kernel_norm,
        }
    }

    fn record(&mut self) -> FlowSample {
        let s = self.sample();
        self.state.samples.push(s);
        self.state.next_sample = (1.0 + self.state.t) * self.config.sample_ratio - 1.0;
        s
    }

    /// Advances by at most `max_steps` accepted steps; returns the termination reason once finished.
    pub fn advance(&mut self, max_steps: usize) -> Result<Option<Termination>> {
        if self.state.samples.is_empty() {
            let s = self.record();
            if s.c0_dist < self.config.converge_c0 {
                return Ok(Some(Termination::Converged));
            }
        }
        let mut energy = self.u.yamabe_energy();
        let mut r = self.u.average_scalar();
        for _ in 0..max_steps {
            if self.state.t >= self.config.t_end {
                return Ok(Some(Termination::ReachedEnd));
            }
            if self.state.accepted >= self.config.max_steps {
                return Ok(Some(Termination::MaxSteps));
            }
            let target_t = self.state.next_sample.min(self.config.t_end);
            let h = self.state.dt.min(target_t - self.state.t);
            let (next, err) = step(&self.u, h).map_err(|e| match e {
                Error::PositivityLoss { min, .. } => Error::PositivityLoss { min, t: self.state.t },
                other => other,
            })?;
            if err > self.config.tol {
                self.state.rejected += 1;
                self.state.dt = 0.5 * h;
                if self.state.dt < 1e-14 {
                    return Err(Error::StepUnderflow { t: self.state.t, state: self.u.samples().to_vec() });
                }
                continue;
            }
            let landed = h >= target_t - self.state.t;
            self.state.t = if landed { target_t } else { self.state.t + h };
            self.u = next;
            self.state.u = self.u.samples().to_vec();
            self.state.accepted += 1;
            if h == self.state.dt {
                self.state.dt = (1.3 * h).min(self.config.dt_max);
            }
            let (e1, r1) = (self.u.yamabe_energy(), self.u.average_scalar());
            self.state.max_energy_increase = self.state.max_energy_increase.max(e1 - energy);
            self.state.max_r_increase = self.state.max_r_increase.max(r1 - r);
            (energy, r) = (e1, r1);
            if landed && self.state.t >= self.state.next_sample {
                let s = self.record();
                if s.c0_dist < self.config.converge_c0 {
                    return Ok(Some(Termination::Converged));
                }
            }
        }
        Ok(None)
    }

    pub fn finish(self, termination: Termination) -> FlowRun {
        FlowRun {
            samples: self.state.samples,
            termination,
            accepted: self.state.accepted,
            rejected: self.state.rejected,
            max_energy_increase: self.state.max_energy_increase,
            max_r_increase: self.state.max_r_increase,
            tol: self.config.tol,
            final_u: self.state.u,
        }
    }
}

/// Runs the flow to completion.
pub fn run(config: FlowConfig) -> Result<FlowRun> {
    let mut flow = Flow::new(config)?;
    loop {
        if let Some(term) = flow.advance(usize::MAX)? {
            return Ok(flow.finish(term));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateModel {
    Exponential,
    Polynomial,
    /// Neither model beats the other by the superiority margin.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelFit {
    /// `δ` for the exponential model, `q` for the polynomial one.
    pub rate: f64,
    pub log_constant: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    /// Rate of the chosen model (of the better one when inconclusive).
    pub rate: f64,
    pub r_squared: f64,
    pub competitor_r_squared: f64,
    pub exponential: ModelFit,
    pub polynomial: ModelFit,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Which part of a distance series enters the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    /// Fraction of the `log(1+t)` range dropped at the start as transient.
    pub drop_fraction: f64,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// Distances below this are treated as converged and ignored.
    pub floor: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { drop_fraction: 0.2, t_min: None, t_max: None, floor: 1e-13 }
    }
}

pub const MIN_FIT_SAMPLES: usize = 20;
/// Required lead in `r²` before one model is preferred.
pub const MODEL_MARGIN: f64 = 0.01;

/// Least-squares fits of `log d` against `t` and against `log(1+t)`.
pub fn fit_rate(series: &[(f64, f64)], window: FitWindow) -> Result<RateFit> {
    let valid: Vec<(f64, f64)> =
        series.iter().copied().filter(|&(t, d)| d > window.floor && d.is_finite() && t >= 0.0).collect();
    if valid.is_empty() {
        return Err(Error::WindowTooSmall { samples: 0, required: MIN_FIT_SAMPLES });
    }
    let lo_all = valid.first().map(|s| (1.0 + s.0).ln()).unwrap_or(0.0);
    let hi_all = valid.last().map(|s| (1.0 + s.0).ln()).unwrap_or(0.0);
    let cut = (lo_all + window.drop_fraction * (hi_all - lo_all)).exp() - 1.0;
    let t_lo = window.t_min.map_or(cut, |t| t.max(cut));
    let t_hi = window.t_max.unwrap_or(f64::INFINITY);
    let pts: Vec<(f64, f64)> = valid.into_iter().filter(|&(t, _)| t >= t_lo && t <= t_hi).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooSmall { samples: pts.len(), required: MIN_FIT_SAMPLES });
    }
    let ld: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let lts: Vec<f64> = pts.iter().map(|p| (1.0 + p.0).ln()).collect();
    let e = linear_fit(&ts, &ld);
    let p = linear_fit(&lts, &ld);
    let exponential = ModelFit { rate: -e.slope, log_constant: e.intercept, r_squared: e.r_squared };
    let polynomial = ModelFit { rate: -p.slope, log_constant: p.intercept, r_squared: p.r_squared };
    let (model, chosen, other) = if e.r_squared >= p.r_squared + MODEL_MARGIN {
        (RateModel::Exponential, exponential, polynomial)
    } else if p.r_squared >= e.r_squared + MODEL_MARGIN {
        (RateModel::Polynomial, polynomial, exponential)
    } else if e.r_squared >= p.r_squared {
        (RateModel::Inconclusive, exponential, polynomial)
    } else {
        (RateModel::Inconclusive, polynomial, exponential)
    };
    Ok(RateFit {
        model,
        rate: chosen.rate,
        r_squared: chosen.r_squared,
        competitor_r_squared: other.r_squared,
        exponential,
        polynomial,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}

/// One initial perturbation for [`basin_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDirection {
    pub label: String,
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub label: String,
    pub amplitude: f64,
    pub termination: Termination,
    pub fit: Option<RateFit>,
    /// Neither model describes the decay (`r² < 0.9` for both).
    pub anomalous: bool,
    pub max_energy_increase: f64,
}

/// Runs the flow from `1 + a·shape` for every direction and amplitude, in parallel across runs.
pub fn basin_probe(
    template: &FlowConfig,
    directions: &[ProbeDirection],
    amplitudes: &[f64],
    window: FitWindow,
    exec: Execution,
) -> Result<Vec<ProbeResult>> {
    let spec = template.spec().clone();
    let jobs: Vec<(usize, f64)> =
        (0..directions.len()).flat_map(|d| amplitudes.iter().map(move |&a| (d, a))).collect();
    map_slice(exec, &jobs, |&(d, a)| -> Result<ProbeResult> {
        let dir = &directions[d];
        let f: Vec<f64> = dir.shape.iter().map(|x| a * x).collect();
        let mut cfg = template.clone();
        cfg.u0 = perturbed_start(&spec, &f)?;
        let run = run(cfg)?;
        let fit = if a == 0.0 { None } else { fit_rate(&run.l2_series(), window).ok() };
        let anomalous = fit.is_some_and(|f| f.exponential.r_squared < 0.9 && f.polynomial.r_squared < 0.9);
        Ok(ProbeResult {
            label: dir.label.clone(),
            amplitude: a,
            termination: run.termination,
            fit,
            anomalous,
            max_energy_increase: run.max_energy_increase,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_a_fixed_point() {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        let one = ConformalFactor::constant(&spec, 1.0).unwrap();
        let (next, err) = step(&one, 0.1).unwrap();
        assert!(err < 1e-13);
        assert!(next.samples().iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn config_validation() {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        let off = ConformalFactor::constant(&spec, 1.1).unwrap();
        assert!(matches!(FlowConfig::new(off, 1.0).validate(), Err(Error::VolumeConstraint { .. })));
        let mut cfg = FlowConfig::new(ConformalFactor::constant(&spec, 1.0).unwrap(), 1.0);
        cfg.dt_init = 1.0;
        cfg.dt_max = 0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synthetic_exponential() {
        let series: Vec<(f64, f64)> = (0..200).map(|i| i as f64 * 0.05).map(|t| (t, (-3.0 * t).exp())).collect();
        let fit = fit_rate(&series, FitWindow::default()).unwrap();
        assert_eq!(fit.model, RateModel::Exponential);
        assert!((fit.rate - 3.0).abs() < 0.01);
    }

    #[test]
    fn synthetic_polynomial() {
        let series: Vec<(f64, f64)> =
            (0..300).map(|i| 1.03f64.powi(i) - 1.0).map(|t| (t, (1.0 + t).powf(-0.5))).collect();
        let fit = fit_rate(&series, FitWindow::default()).unwrap();
        assert_eq!(fit.model, RateModel::Polynomial);
        assert!((fit.rate - 0.5).abs() < 0.005);
    }

    #[test]
    fn small_windows_are_rejected() {
        let series: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0 / (1.0 + i as f64))).collect();
        assert!(matches!(fit_rate(&series, FitWindow::default()), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn exponential_regime_rate() {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        let f: Vec<f64> = spec.grid().cos_mode(1).iter().map(|c| 0.05 * c).collect();
        let run = run(FlowConfig::new(perturbed_start(&spec, &f).unwrap(), 20.0)).unwrap();
        assert_eq!(run.termination, Termination::Converged);
        assert!(run.is_monotone());
        let fit = fit_rate(&run.l2_series(), FitWindow::default()).unwrap();
        assert_eq!(fit.model, RateModel::Exponential);
        let predicted = 3.0 * ((2.0 * std::f64::consts::PI / 3.0).powi(2) - 2.0);
        assert!((fit.rate / predicted - 1.0).abs() < 0.1, "{fit:?}");
    }
}
