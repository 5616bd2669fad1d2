//! TOML run configuration. Each subcommand reads its own section; unknown keys are rejected.

use std::path::PathBuf;

use serde::Deserialize;
use yamabe_core::geometry::critical_circumference;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spectrum: Option<SpectrumConfig>,
    pub period: Option<PeriodConfig>,
    pub reduce: Option<ReduceConfig>,
    pub flow: Option<FlowSection>,
    pub slowflow: Option<SlowFlowConfig>,
    pub report: Option<ReportConfig>,
}

/// A circumference given as a number, as `"T0"`, or as a multiple like `"1.5*T0"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Circumference {
    Value(f64),
    Named(String),
}

impl Default for Circumference {
    fn default() -> Self {
        Circumference::Named("T0".into())
    }
}

impl Circumference {
    pub fn resolve(&self, n: u32) -> Result<f64, String> {
        match self {
            Circumference::Value(v) => Ok(*v),
            Circumference::Named(s) => {
                let s = s.trim();
                let factor = if s == "T0" {
                    1.0
                } else if let Some(f) = s.strip_suffix("*T0") {
                    f.trim().parse::<f64>().map_err(|_| format!("bad circumference {s:?}"))?
                } else {
                    return Err(format!("bad circumference {s:?}: use a number, \"T0\" or \"<x>*T0\""));
                };
                Ok(factor * critical_circumference(n))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub n: u32,
    #[serde(default)]
    pub circumference: Circumference,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Number of linearized modes listed, ordered by |mu|.
    #[serde(default = "default_modes")]
    pub modes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub n: u32,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_points")]
    pub convexity_points: usize,
    #[serde(default = "default_period_tol")]
    pub tol: f64,
    /// When set, constant-scalar-curvature solutions on this circle are enumerated.
    pub circumference: Option<Circumference>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SectorName {
    #[default]
    Even,
    Full,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub n: u32,
    #[serde(default)]
    pub circumference: Circumference,
    #[serde(default = "default_reduce_m")]
    pub m: usize,
    #[serde(default)]
    pub sector: SectorName,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
    /// Directions sampled on the unit sphere of a kernel of dimension at least 2.
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Random kernel points for the Lojasiewicz ratios; 0 skips the check.
    #[serde(default)]
    pub lojasiewicz_samples: usize,
    /// Radius of the sampled kernel ball, relative to sqrt(V).
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Cos,
    Sin,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub n: u32,
    #[serde(default)]
    pub circumference: Circumference,
    #[serde(default = "default_reduce_m")]
    pub m: usize,
    pub t_end: f64,
    /// Start `1 + amplitude·shape(mode)`, rescaled to the reference volume.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub mode: usize,
    #[serde(default)]
    pub shape: Shape,
    #[serde(default = "default_flow_tol")]
    pub tol: f64,
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_sample_ratio")]
    pub sample_ratio: f64,
    #[serde(default = "default_converge")]
    pub converge_c0: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Fit only samples with `t >= fit_from`.
    pub fit_from: Option<f64>,
    /// Write `checkpoint.json` every this many accepted steps; 0 writes it only at the end.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Continue from `checkpoint.json` in the output directory.
    #[serde(default)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum NormName {
    SupGamma,
    SupOneGamma,
    L2q,
    C0q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowFlowConfig {
    pub n: u32,
    #[serde(default)]
    pub circumference: Circumference,
    #[serde(default = "default_reduce_m")]
    pub m: usize,
    #[serde(default)]
    pub sector: SectorName,
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Time shift `T` of the ansatz `(T+t)^(−1/(p−2))`.
    #[serde(default = "default_t_shift")]
    pub t_shift: f64,
    /// The ansatz is tabulated on `points` geometric times in `[0, t_max]`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Also run the flow from `1 + amplitude·v̂` and check the two-sided polynomial bounds.
    #[serde(default)]
    pub run_flow: bool,
    #[serde(default = "default_slow_t_end")]
    pub t_end: f64,
    #[serde(default = "default_fit_from")]
    pub fit_from: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_slow_dt_max")]
    pub dt_max: f64,
    /// A `t,u0,u1,...` CSV whose weighted norm is reported.
    pub series: Option<PathBuf>,
    pub norm: Option<NormName>,
    pub weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Criteria to evaluate; all when absent.
    pub criteria: Option<Vec<u32>>,
    pub mc_samples: Option<u64>,
    pub lojasiewicz_samples: Option<usize>,
    pub seed: Option<u64>,
}

fn default_m() -> usize {
    64
}
fn default_modes() -> usize {
    40
}
fn default_points() -> usize {
    50
}
fn default_period_tol() -> f64 {
    1e-12
}
fn default_reduce_m() -> usize {
    32
}
fn default_s_points() -> usize {
    9
}
fn default_directions() -> usize {
    6
}
fn default_radius() -> f64 {
    0.1
}
fn default_amplitude() -> f64 {
    0.05
}
fn one() -> usize {
    1
}
fn default_flow_tol() -> f64 {
    1e-8
}
fn default_dt_init() -> f64 {
    1e-3
}
fn default_dt_max() -> f64 {
    0.5
}
fn default_sample_ratio() -> f64 {
    1.02
}
fn default_converge() -> f64 {
    1e-11
}
fn default_max_steps() -> usize {
    50_000_000
}
fn default_t_shift() -> f64 {
    10.0
}
fn default_t_max() -> f64 {
    1e4
}
fn default_slow_t_end() -> f64 {
    1e5
}
fn default_fit_from() -> f64 {
    1e3
}
fn default_slow_dt_max() -> f64 {
    20.0
}
