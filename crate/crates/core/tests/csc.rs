//! Periodic solutions found by the period function are stationary points of the flow.

use yamabe_core::flow::flow_rhs;
use yamabe_core::phase_plane::{csc_enumerate, sample_orbit, OdeParams, PhasePoint};
use yamabe_core::{ConformalFactor, ManifoldSpec};

#[test]
fn enumerated_branches_are_flow_fixed_points() {
    let n = 4;
    let p = OdeParams::new(n).unwrap();
    for factor in [1.5, 2.3] {
        let t = factor * p.t0();
        let e = csc_enumerate(t, &p).unwrap();
        assert!(!e.branches.is_empty());
        for b in &e.branches {
            let spec = ManifoldSpec::new(n, t, 128).unwrap();
            let pts = sample_orbit(PhasePoint::new(b.alpha, 0.0), &p, &spec.nodes(), 1e-13).unwrap();
            let u = ConformalFactor::new(&spec, pts.iter().map(|q| q.u).collect()).unwrap().normalize_reference();
            let r = u.scalar_curvature();
            let spread = r.iter().fold(0.0f64, |a, x| a.max((x - r[0]).abs()));
            assert!(spread < 1e-7 * r[0].abs(), "T={t} k={}: R spread {spread}", b.k);
            let rhs = flow_rhs(&u);
            assert!(rhs.iter().all(|x| x.abs() < 1e-7), "T={t} k={}", b.k);
        }
    }
}

#[test]
fn constant_solution_is_fixed() {
    let spec = ManifoldSpec::new(5, 2.0, 32).unwrap();
    let u = ConformalFactor::constant(&spec, 1.0).unwrap();
    assert!(flow_rhs(&u).iter().all(|x| x.abs() < 1e-12));
}
