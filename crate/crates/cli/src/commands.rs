use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use yamabe_core::acceptance::{AcceptanceContext, Check, CriterionOutcome, CRITERIA};
use yamabe_core::exec::Execution;
use yamabe_core::flow::{fit_rate, perturbed_start, FitWindow, Flow, FlowCheckpoint, FlowConfig, FlowRun};
use yamabe_core::lyapunov_schmidt::{
    default_s_grid, fit_order, lojasiewicz_check, unit_directions, OrderFit, Reducer, ReducerOptions, Sector,
};
use yamabe_core::phase_plane::{
    beta_grid, csc_enumerate, width_convexity_report, OdeParams, PeriodOptions, PeriodTable,
};
use yamabe_core::slow_flow::{
    hessian_weights, phi_ode_residual, slow_rate_verdict, weighted_norm, Ansatz, HomogeneousPolynomial, NormKind,
    WeightedSeries,
};
use yamabe_core::spectral::{kernel_dimension, linearized_spectrum, write_spectrum_csv};
use yamabe_core::{Error, ManifoldSpec};

use crate::config::{
    FlowSection, NormName, PeriodConfig, ReduceConfig, ReportConfig, SectorName, Shape, SlowFlowConfig,
    SpectrumConfig,
};
use crate::output::{strip_comments, OutDir};

/// Exit code 2 for configuration problems, 1 for failed runs or criteria.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::VolumeConstraint { .. } | Error::ResonantWeight { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

pub type CmdResult = Result<(), CliError>;

fn spec(n: u32, t: f64, m: usize) -> Result<ManifoldSpec, CliError> {
    Ok(ManifoldSpec::new(n, t, m)?)
}

fn sector(s: SectorName) -> Sector {
    match s {
        SectorName::Even => Sector::Even,
        SectorName::Full => Sector::Full,
    }
}

pub fn spectrum(cfg: &SpectrumConfig, out: &OutDir) -> CmdResult {
    let t = cfg.circumference.resolve(cfg.n).map_err(CliError::Config)?;
    let spec = spec(cfg.n, t, cfg.m)?;
    let lin = linearized_spectrum(&spec, cfg.modes);
    out.csv("spectrum.csv", |w| write_spectrum_csv(&lin.modes, w))?;
    out.json(
        "spectrum.json",
        &json!({
            "n": cfg.n,
            "circumference": t,
            "critical_circumference": spec.critical_circumference(),
            "kernel": kernel_dimension(&spec),
            "decay": lin.decay,
        }),
    )?;
    Ok(())
}

pub fn period(cfg: &PeriodConfig, out: &OutDir, exec: Execution) -> CmdResult {
    let params = OdeParams::new(cfg.n)?;
    let u0 = params.u0();
    let lo = cfg.alpha_min.unwrap_or(u0 + 0.02 * (1.0 - u0));
    let hi = cfg.alpha_max.unwrap_or(u0 + 0.98 * (1.0 - u0));
    if !(u0 < lo && lo < hi && hi < 1.0) {
        return Err(CliError::Config(format!("alpha range [{lo}, {hi}] must lie inside ({u0}, 1)")));
    }
    if cfg.points < 2 || cfg.convexity_points < 3 {
        return Err(CliError::Config("need points >= 2 and convexity_points >= 3".into()));
    }
    let alphas: Vec<f64> =
        (0..cfg.points).map(|i| lo + (hi - lo) * i as f64 / (cfg.points as f64 - 1.0)).collect();
    let opts = PeriodOptions { tol: cfg.tol, ..PeriodOptions::default() };
    let table = PeriodTable::build(&params, &alphas, opts, exec)?;
    out.csv("period.csv", |w| table.write_csv(w))?;
    let convexity = width_convexity_report(&params, &beta_grid(&params, 0.02, 0.98, cfg.convexity_points), exec)?;
    let csc = match &cfg.circumference {
        Some(c) => Some(csc_enumerate(c.resolve(cfg.n).map_err(CliError::Config)?, &params)?),
        None => None,
    };
    out.json(
        "period.json",
        &json!({
            "n": cfg.n,
            "u0": u0,
            "t0": params.t0(),
            "strictly_increasing": table.is_strictly_increasing(),
            "convexity": {
                "min_second_difference": convexity.min_second_difference,
                "a_constant": convexity.a_constant,
            },
            "csc": csc,
        }),
    )?;
    Ok(())
}

fn order_fit(
    n: u32,
    t: f64,
    m: usize,
    sec: SectorName,
    directions: usize,
    s_points: usize,
    exec: Execution,
) -> Result<(ManifoldSpec, Reducer, OrderFit), CliError> {
    let spec = spec(n, t, m)?;
    let r = Reducer::new(&spec, sector(sec), ReducerOptions::default())?;
    let dirs = unit_directions(r.kernel().dim(), directions.max(1));
    let fit = fit_order(&r, &dirs, &default_s_grid(&spec, s_points), exec)?;
    Ok((spec, r, fit))
}

pub fn reduce(cfg: &ReduceConfig, out: &OutDir, seed: u64, exec: Execution) -> CmdResult {
    let t = cfg.circumference.resolve(cfg.n).map_err(CliError::Config)?;
    if cfg.s_points < 3 {
        return Err(CliError::Config("need s_points >= 3".into()));
    }
    let (spec, r, fit) = order_fit(cfg.n, t, cfg.m, cfg.sector, cfg.directions, cfg.s_points, exec)?;
    let samples = default_s_grid(&spec, cfg.s_points)
        .iter()
        .map(|s| r.solve_phi(&fit.v_hat.iter().map(|c| s * c).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    out.csv("samples.csv", |w| r.write_samples_csv(&samples, w))?;
    let loj = if cfg.lojasiewicz_samples > 0 {
        Some(lojasiewicz_check(
            &r,
            fit.p,
            &fit.v_hat,
            cfg.lojasiewicz_samples,
            cfg.radius * spec.scale(),
            seed,
            fit.noise,
            exec,
        )?)
    } else {
        None
    };
    out.json(
        "reduce.json",
        &json!({
            "n": cfg.n,
            "circumference": t,
            "m": cfg.m,
            "kernel_dim": r.kernel().dim(),
            "p_hat": fit.p_hat,
            "p": fit.p,
            "as_condition": fit.as_condition,
            "f_p": fit.f_p,
            "v_hat": fit.v_hat,
            "noise": fit.noise,
            "directions": fit.directions,
            "lojasiewicz": loj,
        }),
    )?;
    Ok(())
}

fn drive(mut flow: Flow, every: usize, out: &OutDir) -> Result<FlowRun, CliError> {
    let chunk = if every == 0 { usize::MAX } else { every };
    loop {
        let done = flow.advance(chunk)?;
        write_checkpoint(out, flow.checkpoint())?;
        if let Some(term) = done {
            return Ok(flow.finish(term));
        }
    }
}

fn write_checkpoint(out: &OutDir, c: &FlowCheckpoint) -> std::io::Result<()> {
    out.json("checkpoint.json", c)
}

fn read_checkpoint(path: &Path) -> Result<FlowCheckpoint, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    serde_json::from_value(v["result"].clone()).map_err(|e| CliError::Config(format!("bad checkpoint: {e}")))
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    termination: yamabe_core::flow::Termination,
    accepted: usize,
    rejected: usize,
    monotone: bool,
    max_energy_increase: f64,
    max_r_increase: f64,
    final_l2_dist: f64,
    final_c0_dist: f64,
    fit: serde_json::Value,
    predicted_rate: &'a yamabe_core::spectral::DecayPrediction,
}

fn summarize(run: &FlowRun, window: FitWindow, predicted: &yamabe_core::spectral::DecayPrediction) -> serde_json::Value {
    let last = run.samples.last();
    let fit_of = |series: &[(f64, f64)]| match fit_rate(series, window) {
        Ok(f) => serde_json::to_value(f).unwrap_or_default(),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let fit = json!({ "l2": fit_of(&run.l2_series()), "c0": fit_of(&run.c0_series()) });
    serde_json::to_value(FlowSummary {
        termination: run.termination,
        accepted: run.accepted,
        rejected: run.rejected,
        monotone: run.is_monotone(),
        max_energy_increase: run.max_energy_increase,
        max_r_increase: run.max_r_increase,
        final_l2_dist: last.map_or(f64::NAN, |s| s.l2_dist),
        final_c0_dist: last.map_or(f64::NAN, |s| s.c0_dist),
        fit,
        predicted_rate: predicted,
    })
    .unwrap_or_default()
}

pub fn flow(cfg: &FlowSection, out: &OutDir) -> CmdResult {
    let t = cfg.circumference.resolve(cfg.n).map_err(CliError::Config)?;
    let spec = spec(cfg.n, t, cfg.m)?;
    if cfg.mode > cfg.m / 2 {
        return Err(CliError::Config(format!("mode {} is not resolved on m = {}", cfg.mode, cfg.m)));
    }
    let shape = match cfg.shape {
        Shape::Cos => spec.grid().cos_mode(cfg.mode),
        Shape::Sin => spec.grid().sin_mode(cfg.mode),
    };
    let f: Vec<f64> = shape.iter().map(|x| cfg.amplitude * x).collect();
    let mut fc = FlowConfig::new(perturbed_start(&spec, &f)?, cfg.t_end);
    fc.tol = cfg.tol;
    fc.dt_init = cfg.dt_init;
    fc.dt_max = cfg.dt_max;
    fc.sample_ratio = cfg.sample_ratio;
    fc.converge_c0 = cfg.converge_c0;
    fc.max_steps = cfg.max_steps;
    let flow = if cfg.resume {
        Flow::resume(fc, read_checkpoint(&out.path("checkpoint.json"))?)?
    } else {
        Flow::new(fc)?
    };
    let run = drive(flow, cfg.checkpoint_every, out)?;
    out.csv("flow.csv", |w| run.write_csv(w))?;
    let window = FitWindow { t_min: cfg.fit_from, ..FitWindow::default() };
    let predicted = yamabe_core::spectral::decay_prediction(&spec);
    out.json("flow.json", &summarize(&run, window, &predicted))?;
    Ok(())
}

fn norm_kind(name: NormName, w: f64) -> NormKind {
    match name {
        NormName::SupGamma => NormKind::SupGamma(w),
        NormName::SupOneGamma => NormKind::SupOneGamma(w),
        NormName::L2q => NormKind::L2q(w),
        NormName::C0q => NormKind::C0q(w),
    }
}

pub fn slowflow(cfg: &SlowFlowConfig, out: &OutDir, exec: Execution) -> CmdResult {
    let t = cfg.circumference.resolve(cfg.n).map_err(CliError::Config)?;
    if cfg.points < 2 || cfg.t_max.is_nan() || cfg.t_max <= 0.0 {
        return Err(CliError::Config("need points >= 2 and t_max > 0".into()));
    }
    let (spec, r, fit) = order_fit(cfg.n, t, cfg.m, cfg.sector, cfg.directions, 9, exec)?;
    if !fit.as_condition {
        return Err(CliError::Failure(format!("F_p has no positive maximum on the kernel sphere (p = {})", fit.p)));
    }
    let big_n = spec.big_n();
    let ansatz = Ansatz::new(fit.p, fit.f_p, fit.v_hat.clone(), cfg.t_shift, big_n)?;
    let times: Vec<f64> = (0..cfg.points)
        .map(|i| (1.0 + cfg.t_max).powf(i as f64 / (cfg.points as f64 - 1.0)) - 1.0)
        .collect();
    let phi = WeightedSeries::new(cfg.t_shift, times.clone(), times.iter().map(|&s| ansatz.phi(s)).collect())?;
    out.csv("phi.csv", |w| phi.write_csv(w))?;

    let dim = r.kernel().dim();
    let poly = if dim == 1 {
        HomogeneousPolynomial::monomial(1, fit.p, fit.f_p)
    } else {
        let dirs: Vec<Vec<f64>> = fit.directions.iter().map(|d| d.v_hat.clone()).collect();
        let vals: Vec<f64> = fit.directions.iter().map(|d| d.f_p).collect();
        HomogeneousPolynomial::fit(dim, fit.p, &dirs, &vals)?
    };
    let weights = hessian_weights(|x: &[f64]| poly.eval(x), &fit.v_hat, fit.p, big_n)?;
    let resonances: Vec<f64> = weights.mu.iter().map(|m| m / (2.0 * (big_n - 2.0))).collect();

    let verdict = if cfg.run_flow {
        let shape = r.kernel().combine(&fit.v_hat);
        let peak = shape.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let f: Vec<f64> = shape.iter().map(|x| cfg.amplitude * x / peak).collect();
        let mut fc = FlowConfig::new(perturbed_start(&spec, &f)?, cfg.t_end);
        fc.dt_max = cfg.dt_max;
        let run = yamabe_core::flow::run(fc)?;
        out.csv("slow_flow.csv", |w| run.write_csv(w))?;
        let window = FitWindow { t_min: Some(cfg.fit_from), ..FitWindow::default() };
        match slow_rate_verdict(&run, fit.p, window, None) {
            Ok(v) => Some(v),
            Err(e @ Error::NotPolynomial(_)) => return Err(CliError::Failure(e.to_string())),
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let norm = match (&cfg.series, cfg.norm, cfg.weight) {
        (Some(path), Some(kind), Some(w)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let series = WeightedSeries::read_csv(cfg.t_shift, strip_comments(&text).as_bytes())?;
            Some(weighted_norm(&series, norm_kind(kind, w)))
        }
        (None, None, None) => None,
        _ => return Err(CliError::Config("series, norm and weight must be given together".into())),
    };

    out.json(
        "slowflow.json",
        &json!({
            "p": fit.p,
            "p_hat": fit.p_hat,
            "f_p": fit.f_p,
            "v_hat": fit.v_hat,
            "decay_exponent": 1.0 / (fit.p as f64 - 2.0),
            "phi_ode_residual": phi_ode_residual(&ansatz, &times),
            "hessian_weights": weights,
            "resonant_gammas": resonances,
            "verdict": verdict,
            "weighted_norm": norm,
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    pass: bool,
    criteria: &'a [CriterionOutcome],
}

fn summary_line(o: &CriterionOutcome) -> String {
    let mut s = format!("{} [{:>2}] {}\n", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name);
    if let Some(e) = &o.error {
        s.push_str(&format!("       error: {e}\n"));
    }
    if !o.within_budget {
        s.push_str(&format!("       over the {:.0}s budget\n", o.budget_secs));
    }
    for c in &o.checks {
        s.push_str(&format!("       {} {}\n", if c.pass { "ok  " } else { "FAIL" }, check_text(c)));
    }
    s
}

fn check_text(c: &Check) -> String {
    yamabe_core::acceptance::format_check(c)
}

pub fn report(cfg: &ReportConfig, out: &OutDir, seed: u64, exec: Execution) -> CmdResult {
    let ids: Vec<u32> = cfg.criteria.clone().unwrap_or_else(|| (1..=CRITERIA).collect());
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
        return Err(CliError::Config(format!("no criterion {bad}; valid ids are 1..={CRITERIA}")));
    }
    let mut ctx = AcceptanceContext::new(exec, seed);
    if let Some(s) = cfg.mc_samples {
        ctx.mc_samples = s;
    }
    if let Some(s) = cfg.lojasiewicz_samples {
        ctx.lojasiewicz_samples = s;
    }
    let mut outcomes = Vec::new();
    for &id in &ids {
        let o = ctx.evaluate(id);
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let pass = outcomes.iter().all(|o| o.pass);
    out.json("manifest.json", &Manifest { pass, criteria: &outcomes })?;
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let mut text = format!("{passed} of {} criteria passed\n", outcomes.len());
    for o in &outcomes {
        text.push_str(&summary_line(o));
    }
    out.text("summary.txt", &text)?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
        Err(CliError::Failure(format!("criteria failed: {}", failed.join(", "))))
    }
}
