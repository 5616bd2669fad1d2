//! Uniform periodic grid with Fourier spectral differentiation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// `m` equispaced nodes `t_j = j·T/m` on a circle of circumference `T`.
///
/// Grid functions are stored in physical space; transforms are computed on demand.
#[derive(Clone)]
pub struct PeriodicGrid {
    m: usize,
    period: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid").field("m", &self.m).field("period", &self.period).finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.period == other.period
    }
}

impl PeriodicGrid {
    pub fn new(m: usize, period: f64) -> Result<Self> {
        if m < 8 || !m.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("grid size must be even and >= 8, got {m}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        Ok(Self { m, period, forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| j as f64 * self.spacing()).collect()
    }

    /// Angular frequency `2πk/T` of Fourier mode `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.period
    }

    fn signed(&self, j: usize) -> f64 {
        let m = self.m as i64;
        let j = j as i64;
        let s = if j <= m / 2 { j } else { j - m };
        2.0 * PI * s as f64 / self.period
    }

    pub fn spectrum(&self, u: &[f64]) -> Vec<Complex<f64>> {
        debug_assert_eq!(u.len(), self.m);
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn from_spectrum(&self, mut c: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut c);
        let scale = 1.0 / self.m as f64;
        c.into_iter().map(|z| z.re * scale).collect()
    }

    /// Spectral derivative of the given order. Odd derivatives drop the Nyquist mode.
    pub fn derivative(&self, u: &[f64], order: u32) -> Vec<f64> {
        let mut c = self.spectrum(u);
        let half = self.m / 2;
        for (j, z) in c.iter_mut().enumerate() {
            if order % 2 == 1 && j == half {
                *z = Complex::new(0.0, 0.0);
                continue;
            }
            let ik = Complex::new(0.0, self.signed(j));
            *z *= ik.powu(order);
        }
        self.from_spectrum(c)
    }

    pub fn second_derivative(&self, u: &[f64]) -> Vec<f64> {
        let mut c = self.spectrum(u);
        for (j, z) in c.iter_mut().enumerate() {
            let k = self.signed(j);
            *z *= -k * k;
        }
        self.from_spectrum(c)
    }

    /// Periodic rectangle rule `(T/m)·Σ f_j`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.spacing() * f.iter().sum::<f64>()
    }

    /// Solves `a·x − b·x'' = rhs` mode by mode (requires `a + b·κ² ≠ 0`).
    pub fn solve_shifted(&self, rhs: &[f64], a: f64, b: f64) -> Vec<f64> {
        let mut c = self.spectrum(rhs);
        for (j, z) in c.iter_mut().enumerate() {
            let k = self.signed(j);
            *z /= a + b * k * k;
        }
        self.from_spectrum(c)
    }

    /// Multiplies each Fourier mode by `symbol(κ)`, where `κ` is its signed angular frequency.
    pub fn apply_symbol(&self, u: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.spectrum(u);
        for (j, z) in c.iter_mut().enumerate() {
            *z *= symbol(self.signed(j));
        }
        self.from_spectrum(c)
    }

    pub fn cos_mode(&self, k: usize) -> Vec<f64> {
        let w = self.wavenumber(k);
        self.nodes().into_iter().map(|t| (w * t).cos()).collect()
    }

    pub fn sin_mode(&self, k: usize) -> Vec<f64> {
        let w = self.wavenumber(k);
        self.nodes().into_iter().map(|t| (w * t).sin()).collect()
    }

    /// Real coefficients with `u = a_0 + Σ a_k cos(κ_k t) + Σ b_k sin(κ_k t)`.
    /// `a` has `m/2 + 1` entries, `b` has `m/2 + 1` entries with `b_0 = b_{m/2} = 0`.
    pub fn real_coefficients(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.spectrum(u);
        let m = self.m as f64;
        let half = self.m / 2;
        let mut a = vec![0.0; half + 1];
        let mut b = vec![0.0; half + 1];
        a[0] = c[0].re / m;
        a[half] = c[half].re / m;
        for k in 1..half {
            a[k] = 2.0 * c[k].re / m;
            b[k] = -2.0 * c[k].im / m;
        }
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_derivative_exact_on_modes() {
        let g = PeriodicGrid::new(32, 3.7).unwrap();
        for k in 1..16 {
            let u = g.cos_mode(k);
            let d2 = g.second_derivative(&u);
            let w = g.wavenumber(k);
            for (x, y) in u.iter().zip(&d2) {
                assert!((y + w * w * x).abs() < 1e-10 * w * w);
            }
        }
    }

    #[test]
    fn first_derivative_of_sine() {
        let g = PeriodicGrid::new(16, 2.0 * PI).unwrap();
        let u = g.sin_mode(3);
        let du = g.derivative(&u, 1);
        let expect: Vec<f64> = g.cos_mode(3).iter().map(|c| 3.0 * c).collect();
        for (a, b) in du.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_exact_on_trig_polynomials() {
        let g = PeriodicGrid::new(24, 5.0).unwrap();
        for k in 1..12 {
            assert!(g.integrate(&g.cos_mode(k)).abs() < 1e-12);
            assert!(g.integrate(&g.sin_mode(k)).abs() < 1e-12);
        }
        assert!((g.integrate(&[1.0; 24]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn real_coefficients_round_trip() {
        let g = PeriodicGrid::new(16, 1.0).unwrap();
        let u: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&t| 0.5 + 0.2 * (2.0 * PI * t).cos() - 0.3 * (6.0 * PI * t).sin())
            .collect();
        let (a, b) = g.real_coefficients(&u);
        assert!((a[0] - 0.5).abs() < 1e-14);
        assert!((a[1] - 0.2).abs() < 1e-14);
        assert!((b[3] + 0.3).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(PeriodicGrid::new(7, 1.0).is_err());
        assert!(PeriodicGrid::new(6, 1.0).is_err());
        assert!(PeriodicGrid::new(8, 0.0).is_err());
    }
}
