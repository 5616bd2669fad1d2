//! S¹-symmetric conformal factors on `S¹(T/2π) × S^(n-1)` and the Yamabe quotient.
//!
//! A conformal factor `u` represents the metric `u^(N-2)·g`, `N = 2n/(n-2)`, where `g` is
//! the product of a circle of circumference `T` with the round unit sphere. Every integral
//! over the product carries the sphere volume `ω_(n-1)`; the circle integral is the
//! periodic rectangle rule on the grid.

use std::f64::consts::PI;

use crate::numerics::PeriodicGrid;
use crate::{Error, Result};

/// Dimension, circle circumference and grid of the product manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    n: u32,
    grid: PeriodicGrid,
}

/// Volume of the unit sphere `S^d ⊂ R^(d+1)`.
pub fn unit_sphere_volume(d: u32) -> f64 {
    match d {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 1.0) * unit_sphere_volume(d - 2),
    }
}

/// Circumference `2π/√(n-2)` at which the product metric becomes degenerate.
pub fn critical_circumference(n: u32) -> f64 {
    2.0 * PI / (n as f64 - 2.0).sqrt()
}

impl ManifoldSpec {
    pub fn new(n: u32, circumference: f64, m: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 3, got {n}")));
        }
        let grid = PeriodicGrid::new(m, circumference)?;
        Ok(Self { n, grid })
    }

    /// The degenerate product `S¹(T₀/2π) × S^(n-1)`.
    pub fn critical(n: u32, m: usize) -> Result<Self> {
        Self::new(n, critical_circumference(n), m)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn circumference(&self) -> f64 {
        self.grid.period()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Same manifold on a grid of a different size.
    pub fn with_grid_size(&self, m: usize) -> Result<Self> {
        Self::new(self.n, self.circumference(), m)
    }

    /// Critical Sobolev exponent `N = 2n/(n-2)`.
    pub fn big_n(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0)
    }

    /// Scalar curvature `(n-1)(n-2)` of the product metric.
    pub fn r_inf(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) * (n - 2.0)
    }

    /// `ω_(n-1)`, the volume of the unit `S^(n-1)`.
    pub fn sphere_volume(&self) -> f64 {
        unit_sphere_volume(self.n - 1)
    }

    /// Volume of the product metric, `ω_(n-1)·T`.
    pub fn reference_volume(&self) -> f64 {
        self.sphere_volume() * self.circumference()
    }

    /// L² norm of the constant function 1, the natural amplitude scale.
    pub fn scale(&self) -> f64 {
        self.reference_volume().sqrt()
    }

    pub fn critical_circumference(&self) -> f64 {
        critical_circumference(self.n)
    }

    /// `∫ f dV` over the product.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.sphere_volume() * self.grid.integrate(f)
    }

    /// `L²(dV)` inner product of two grid functions.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let s: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
        self.sphere_volume() * self.grid.spacing() * s
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }
}

/// Positive grid function `u` on the circle, representing the metric `u^(N-2)·g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFactor {
    spec: ManifoldSpec,
    samples: Vec<f64>,
}

impl ConformalFactor {
    pub fn new(spec: &ManifoldSpec, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != spec.m() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                spec.m(),
                samples.len()
            )));
        }
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::PositivityLoss { min, t: f64::NAN });
        }
        Ok(Self { spec: spec.clone(), samples })
    }

    pub fn from_fn(spec: &ManifoldSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(spec, spec.nodes().into_iter().map(f).collect())
    }

    pub fn constant(spec: &ManifoldSpec, c: f64) -> Result<Self> {
        Self::new(spec, vec![c; spec.m()])
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `u ↦ c·u`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.spec, self.samples.iter().map(|v| v * c).collect())
    }

    /// `∫ u^N dV`.
    pub fn volume(&self) -> f64 {
        let big_n = self.spec.big_n();
        let p: Vec<f64> = self.samples.iter().map(|v| v.powf(big_n)).collect();
        self.spec.integrate(&p)
    }

    /// `u^(1-N)·(R_∞ u − (N+2) u'')` at every node.
    pub fn scalar_curvature(&self) -> Vec<f64> {
        let big_n = self.spec.big_n();
        let r_inf = self.spec.r_inf();
        let d2 = self.spec.grid().second_derivative(&self.samples);
        self.samples
            .iter()
            .zip(&d2)
            .map(|(&u, &upp)| u.powf(1.0 - big_n) * (r_inf * u - (big_n + 2.0) * upp))
            .collect()
    }

    /// Numerator `∫ ((N+2)|u'|² + R_∞ u²) dV` of the Yamabe quotient.
    pub fn dirichlet_energy(&self) -> f64 {
        let big_n = self.spec.big_n();
        let r_inf = self.spec.r_inf();
        let d1 = self.spec.grid().derivative(&self.samples, 1);
        let integrand: Vec<f64> = self
            .samples
            .iter()
            .zip(&d1)
            .map(|(&u, &up)| (big_n + 2.0) * up * up + r_inf * u * u)
            .collect();
        self.spec.integrate(&integrand)
    }

    /// The scale-invariant Yamabe quotient `∫((N+2)|u'|² + R_∞u²) / (∫u^N)^(2/N)`.
    pub fn yamabe_energy(&self) -> f64 {
        self.dirichlet_energy() / self.volume().powf(2.0 / self.spec.big_n())
    }

    /// Volume-weighted mean of the scalar curvature against `u^N dV`.
    pub fn average_scalar(&self) -> f64 {
        let big_n = self.spec.big_n();
        let r = self.scalar_curvature();
        let weighted: Vec<f64> =
            self.samples.iter().zip(&r).map(|(&u, &rc)| rc * u.powf(big_n)).collect();
        self.spec.integrate(&weighted) / self.volume()
    }

    /// `2(−(N+2)u'' + R_∞u − r·u^(N-1))` without a volume check.
    ///
    /// At volume `V` the L² gradient of the quotient is `V^(-2/N)` times this function.
    pub fn euler_lagrange(&self) -> Vec<f64> {
        let big_n = self.spec.big_n();
        let r_inf = self.spec.r_inf();
        let r = self.average_scalar();
        let d2 = self.spec.grid().second_derivative(&self.samples);
        self.samples
            .iter()
            .zip(&d2)
            .map(|(&u, &upp)| 2.0 * (-(big_n + 2.0) * upp + r_inf * u - r * u.powf(big_n - 1.0)))
            .collect()
    }

    /// L² gradient of the Yamabe quotient at a unit-volume factor.
    pub fn dy_gradient(&self) -> Result<Vec<f64>> {
        let deviation = (self.volume() - 1.0).abs();
        if deviation > 1e-8 {
            return Err(Error::VolumeConstraint { deviation });
        }
        Ok(self.euler_lagrange())
    }

    /// `u·volume(u)^(-1/N)`, so that the result has unit volume.
    pub fn normalize_volume(&self) -> Self {
        self.rescale_to_volume(1.0)
    }

    /// Rescales so that `∫u^N dV = target`.
    pub fn rescale_to_volume(&self, target: f64) -> Self {
        let c = (target / self.volume()).powf(1.0 / self.spec.big_n());
        Self { spec: self.spec.clone(), samples: self.samples.iter().map(|v| v * c).collect() }
    }

    /// Rescales to the volume of the product metric, so that `u ≡ 1` is the reference point.
    pub fn normalize_reference(&self) -> Self {
        self.rescale_to_volume(self.spec.reference_volume())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec4(t: f64, m: usize) -> ManifoldSpec {
        ManifoldSpec::new(4, t, m).unwrap()
    }

    #[test]
    fn sphere_volumes() {
        assert!((unit_sphere_volume(2) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_sphere_volume(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn exponent_identities_to_a_few_ulp() {
        for n in 3..=12u32 {
            let s = ManifoldSpec::new(n, 1.0, 8).unwrap();
            let nf = n as f64;
            let big_n = s.big_n();
            let lhs_plus = big_n + 2.0;
            let rhs_plus = 4.0 * (nf - 1.0) / (nf - 2.0);
            let lhs_minus = big_n - 2.0;
            let rhs_minus = 4.0 / (nf - 2.0);
            assert!((lhs_plus - rhs_plus).abs() <= 4.0 * f64::EPSILON * rhs_plus);
            assert!((lhs_minus - rhs_minus).abs() <= 4.0 * f64::EPSILON * rhs_minus);
        }
    }

    #[test]
    fn rejects_invalid_specs_and_factors() {
        assert!(ManifoldSpec::new(2, 1.0, 16).is_err());
        assert!(ManifoldSpec::new(4, -1.0, 16).is_err());
        assert!(ManifoldSpec::new(4, 1.0, 9).is_err());
        let s = spec4(1.0, 8);
        let mut v = vec![1.0; 8];
        v[3] = 0.0;
        assert!(matches!(ConformalFactor::new(&s, v), Err(Error::PositivityLoss { .. })));
        assert!(ConformalFactor::new(&s, vec![1.0; 7]).is_err());
    }

    #[test]
    fn volume_of_constants() {
        let s = spec4(1.0, 16);
        let one = ConformalFactor::constant(&s, 1.0).unwrap();
        assert!((one.volume() - 2.0 * PI * PI).abs() < 1e-12);
        let half = ConformalFactor::constant(&s, 0.5).unwrap();
        assert!((half.volume() - 2.0 * PI * PI * 0.0625).abs() < 1e-13);
    }

    #[test]
    fn volume_matches_fine_quadrature() {
        let s = spec4(2.0 * PI, 32);
        let u = ConformalFactor::from_fn(&s, |t| 1.0 + 0.1 * t.cos()).unwrap();
        let fine = spec4(2.0 * PI, 4096);
        let oracle: f64 = fine.nodes().iter().map(|t| (1.0 + 0.1 * t.cos()).powi(4)).sum::<f64>()
            * fine.grid().spacing()
            * fine.sphere_volume();
        assert!((u.volume() - oracle).abs() < 1e-10 * oracle);
    }

    #[test]
    fn curvature_of_constants() {
        for n in 3..=6u32 {
            let s = ManifoldSpec::new(n, 3.0, 16).unwrap();
            let one = ConformalFactor::constant(&s, 1.0).unwrap();
            for r in one.scalar_curvature() {
                assert!((r - s.r_inf()).abs() < 1e-12);
            }
            let c = 1.7;
            let u = ConformalFactor::constant(&s, c).unwrap();
            let expect = s.r_inf() * c.powf(2.0 - s.big_n());
            for r in u.scalar_curvature() {
                assert!((r - expect).abs() < 1e-12 * expect);
            }
            assert!((u.average_scalar() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn spherical_factor_has_curvature_twelve() {
        let t = 60.0;
        let s = spec4(t, 2048);
        let u = ConformalFactor::from_fn(&s, |x| 1.0 / (x - t / 2.0).cosh()).unwrap();
        let r = u.scalar_curvature();
        for (x, rv) in s.nodes().iter().zip(&r) {
            if (x - t / 2.0).abs() < 5.0 {
                assert!((rv - 12.0).abs() < 1e-6, "R({x}) = {rv}");
            }
        }
    }

    #[test]
    fn energy_of_the_product_metric() {
        let t0 = critical_circumference(4);
        let s = spec4(t0, 32);
        let one = ConformalFactor::constant(&s, 1.0).unwrap();
        let expect = 6.0 * (t0 * 2.0 * PI * PI).sqrt();
        assert!((one.yamabe_energy() - expect).abs() < 1e-11 * expect);
        assert!((expect - 56.19).abs() < 0.01);
    }

    #[test]
    fn product_metric_is_below_perturbation() {
        let t0 = critical_circumference(4);
        let s = spec4(t0, 64);
        let one = ConformalFactor::constant(&s, 1.0).unwrap();
        let u = ConformalFactor::from_fn(&s, |t| 1.0 + 0.05 * (2f64.sqrt() * t).cos()).unwrap();
        assert!(u.yamabe_energy() > one.yamabe_energy());
    }

    #[test]
    fn average_scalar_equals_energy_at_unit_volume() {
        let s = spec4(critical_circumference(4), 64);
        let u = ConformalFactor::from_fn(&s, |t| 1.0 + 0.05 * (2f64.sqrt() * t).cos())
            .unwrap()
            .normalize_volume();
        assert!((u.average_scalar() - u.yamabe_energy()).abs() < 1e-10);
    }

    #[test]
    fn normalization() {
        let s = spec4(1.0, 16);
        let u = ConformalFactor::constant(&s, 1.0).unwrap().normalize_volume();
        let expect = (2.0 * PI * PI).powf(-0.25);
        for v in u.samples() {
            assert!((v - expect).abs() < 1e-14);
        }
        let w = ConformalFactor::from_fn(&s, |t| 2.0 + (2.0 * PI * t).sin()).unwrap();
        let once = w.normalize_volume();
        assert!((once.volume() - 1.0).abs() < 1e-12);
        let twice = once.normalize_volume();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_requires_unit_volume() {
        let s = spec4(2.0, 16);
        let u = ConformalFactor::constant(&s, 1.0).unwrap();
        assert!(matches!(u.dy_gradient(), Err(Error::VolumeConstraint { .. })));
        let g = u.normalize_volume().dy_gradient().unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_curvature_form() {
        let t = 30.0;
        let s = spec4(t, 512);
        let u = ConformalFactor::from_fn(&s, |x| 0.3 + 1.0 / (x - t / 2.0).cosh())
            .unwrap()
            .normalize_volume();
        let g = u.dy_gradient().unwrap();
        let r = u.scalar_curvature();
        let rbar = u.average_scalar();
        let big_n = s.big_n();
        for ((gv, rv), uv) in g.iter().zip(&r).zip(u.samples()) {
            let alt = 2.0 * (rv - rbar) * uv.powf(big_n - 1.0);
            assert!((gv - alt).abs() < 1e-10 * (1.0 + gv.abs()));
        }
    }
}
