use yamabe_core::exec::Execution;
use yamabe_core::flow::{
    basin_probe, flow_rhs, perturbed_start, run, FitWindow, Flow, FlowConfig, ProbeDirection, RateModel, Termination,
};
use yamabe_core::{ConformalFactor, ManifoldSpec};

fn rk4(u0: &ConformalFactor, t_end: f64, steps: usize) -> Vec<f64> {
    let spec = u0.spec();
    let h = t_end / steps as f64;
    let mut u = u0.samples().to_vec();
    let eval = |v: &[f64]| flow_rhs(&ConformalFactor::new(spec, v.to_vec()).unwrap());
    let axpy = |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = eval(&u);
        let k2 = eval(&axpy(&u, h / 2.0, &k1));
        let k3 = eval(&axpy(&u, h / 2.0, &k2));
        let k4 = eval(&axpy(&u, h, &k3));
        for j in 0..u.len() {
            u[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    u
}

fn start(spec: &ManifoldSpec) -> ConformalFactor {
    let g = spec.grid();
    let f: Vec<f64> = g.cos_mode(1).iter().zip(g.sin_mode(2)).map(|(a, b)| 0.08 * a - 0.05 * b).collect();
    perturbed_start(spec, &f).unwrap()
}

#[test]
fn matches_explicit_rk4() {
    let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
    let u0 = start(&spec);
    let oracle = rk4(&u0, 0.5, 10_000);
    let mut cfg = FlowConfig::new(u0, 0.5);
    cfg.tol = 1e-10;
    let out = run(cfg).unwrap();
    assert_eq!(out.termination, Termination::ReachedEnd);
    let err = out.final_u.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "max deviation {err}");
    // The continuous flow preserves the volume, so the explicit oracle needs no projection.
    let vol = ConformalFactor::new(&spec, oracle).unwrap().volume();
    assert!((vol / spec.reference_volume() - 1.0).abs() < 1e-9);
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
    let cfg = FlowConfig::new(start(&spec), 5.0);
    let straight = run(cfg.clone()).unwrap();

    let mut first = Flow::new(cfg.clone()).unwrap();
    assert!(first.advance(40).unwrap().is_none());
    let saved = first.checkpoint().clone();
    let mut second = Flow::resume(cfg, saved).unwrap();
    let term = loop {
        if let Some(t) = second.advance(usize::MAX).unwrap() {
            break t;
        }
    };
    let resumed = second.finish(term);
    assert_eq!(resumed.final_u, straight.final_u);
    assert_eq!(resumed.samples, straight.samples);
    assert_eq!(resumed.accepted, straight.accepted);
}

#[test]
fn basin_probe_is_exponential_and_strategy_independent() {
    let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
    let g = spec.grid();
    let directions = vec![
        ProbeDirection { label: "cos1".into(), shape: g.cos_mode(1) },
        ProbeDirection { label: "sin2".into(), shape: g.sin_mode(2) },
    ];
    let mut template = FlowConfig::new(ConformalFactor::constant(&spec, 1.0).unwrap(), 20.0);
    // Mode 2 decays at rate ≈ 46, so it needs dense samples to leave enough points above the floor.
    template.sample_ratio = 1.002;
    let amps = [0.0, 0.02, 0.1];
    let par = basin_probe(&template, &directions, &amps, FitWindow::default(), Execution::Parallel).unwrap();
    let seq = basin_probe(&template, &directions, &amps, FitWindow::default(), Execution::Sequential).unwrap();
    assert_eq!(par, seq);
    assert_eq!(par.len(), 6);
    for r in &par {
        assert_eq!(r.termination, Termination::Converged, "{r:?}");
        assert!(!r.anomalous);
        if r.amplitude == 0.0 {
            continue;
        }
        // Each mode decays at (n−1)(κ² − (n−2)).
        let k = if r.label == "cos1" { 1 } else { 2 };
        let predicted = 3.0 * (g.wavenumber(k).powi(2) - 2.0);
        let fit = r.fit.as_ref().unwrap();
        assert!((fit.exponential.rate / predicted - 1.0).abs() < 0.05, "{r:?}");
        // Mode 2 converges within t < 1, where log(1+t) ≈ t and the models cannot be told apart.
        if k == 1 {
            assert_eq!(fit.model, RateModel::Exponential, "{r:?}");
        } else {
            assert_ne!(fit.model, RateModel::Polynomial, "{r:?}");
        }
    }
}
