//! Property tests for the geometric invariants.

use proptest::prelude::*;
use yamabe_core::phase_plane::{hamiltonian, sample_orbit, OdeParams, PhasePoint};
use yamabe_core::{ConformalFactor, ManifoldSpec};

fn factor(spec: &ManifoldSpec, coeffs: &[(f64, f64)]) -> ConformalFactor {
    let g = spec.grid();
    let mut u = vec![1.0; spec.m()];
    for (k, (a, b)) in coeffs.iter().enumerate() {
        let (c, s) = (g.cos_mode(k + 1), g.sin_mode(k + 1));
        for j in 0..u.len() {
            u[j] += a * c[j] + b * s[j];
        }
    }
    ConformalFactor::new(spec, u).unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn yamabe_quotient_is_scale_invariant(c in coeffs(), scale in 0.2f64..5.0, n in 3u32..7) {
        let spec = ManifoldSpec::new(n, 4.0, 32).unwrap();
        let u = factor(&spec, &c);
        let y = u.yamabe_energy();
        let ys = u.scaled(scale).unwrap().yamabe_energy();
        prop_assert!((y - ys).abs() < 1e-11 * y.abs().max(1.0));
    }

    #[test]
    fn normalization_hits_the_target_volume(c in coeffs(), scale in 0.2f64..5.0) {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        let u = factor(&spec, &c).scaled(scale).unwrap();
        prop_assert!((u.normalize_volume().volume() - 1.0).abs() < 1e-12);
        let r = u.normalize_reference();
        prop_assert!((r.volume() / spec.reference_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_norm_axioms(a in coeffs(), b in coeffs(), t in -3.0f64..3.0) {
        let spec = ManifoldSpec::new(4, 5.0, 32).unwrap();
        let f: Vec<f64> = factor(&spec, &a).samples().iter().map(|x| x - 1.0).collect();
        let g: Vec<f64> = factor(&spec, &b).samples().iter().map(|x| x - 1.0).collect();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = f.iter().map(|x| t * x).collect();
        prop_assert!(spec.l2_norm(&sum) <= spec.l2_norm(&f) + spec.l2_norm(&g) + 1e-14);
        prop_assert!((spec.l2_norm(&scaled) - t.abs() * spec.l2_norm(&f)).abs() < 1e-13);
        prop_assert!(spec.inner(&f, &g).abs() <= spec.l2_norm(&f) * spec.l2_norm(&g) + 1e-14);
    }

    #[test]
    fn gradient_vanishes_on_constants(c in 0.3f64..3.0, n in 3u32..8, t in 1.0f64..10.0) {
        let spec = ManifoldSpec::new(n, t, 16).unwrap();
        let u = ConformalFactor::constant(&spec, c).unwrap().normalize_volume();
        prop_assert!(u.dy_gradient().unwrap().iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn energy_is_conserved_on_sampled_orbits(n in 3u32..7, frac in 0.05f64..0.95) {
        let p = OdeParams::new(n).unwrap();
        let alpha = p.u0() + frac * (1.0 - p.u0());
        let start = PhasePoint::new(alpha, 0.0);
        let h0 = hamiltonian(start, &p);
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        for pt in sample_orbit(start, &p, &times, 1e-12).unwrap() {
            prop_assert!((hamiltonian(pt, &p) - h0).abs() < 1e-9 * h0.abs().max(1e-3));
        }
    }
}
