//! Lyapunov–Schmidt reduction of the Yamabe quotient at the product metric `u ≡ 1`.
//!
//! For `v` in the kernel `Λ₀` of `𝓛`, the correction `Φ(v) ∈ Λ₀^⊥` solves the off-kernel
//! part of the Euler–Lagrange equation on the slice of factors with the reference volume.
//! Unknowns are the Fourier coefficients of `Φ` (the constant mode included) and a
//! Lagrange multiplier `a` for the volume constraint:
//!
//! ```text
//! proj_{Λ₀^⊥}(G(Ψ) − a·Ψ^(N−1)) = 0,   vol(Ψ) = V,   Ψ = 1 + v + Φ(v).
//! ```
//!
//! The reduced functional is `F(v) = 𝒴(Ψ(v))` and its gradient is
//! `V^(−2/N)·proj_{Λ₀}(G(Ψ) − a·Ψ^(N−1))`.

use std::io;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::exec::{map_slice, Execution};
use crate::geometry::{ConformalFactor, ManifoldSpec};
use crate::numerics::{linear_fit, polynomial_fit};
use crate::spectral::{apply_linearized, KERNEL_TOL};
use crate::{Error, Result};

/// Which circle functions are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Sector {
    /// Reflection-even functions (`cos` modes); fixes the rotation of the circle.
    #[default]
    Even,
    /// `cos` and `sin` modes.
    Full,
}

/// One real Fourier mode on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trig {
    Cos(usize),
    Sin(usize),
}

fn mode_samples(spec: &ManifoldSpec, mode: Trig) -> Vec<f64> {
    let f = match mode {
        Trig::Cos(k) => spec.grid().cos_mode(k),
        Trig::Sin(k) => spec.grid().sin_mode(k),
    };
    let norm = spec.l2_norm(&f);
    f.into_iter().map(|x| x / norm).collect()
}

fn sector_modes(spec: &ManifoldSpec, sector: Sector) -> Vec<Trig> {
    let top = spec.m() / 2 - 1;
    let mut modes: Vec<Trig> = (0..=top).map(Trig::Cos).collect();
    if sector == Sector::Full {
        modes.extend((1..=top).map(Trig::Sin));
    }
    modes
}

fn is_kernel_frequency(spec: &ManifoldSpec, k: usize) -> bool {
    let w = spec.grid().wavenumber(k);
    (w * w - (spec.n() as f64 - 2.0)).abs() < KERNEL_TOL
}

fn frequency(mode: Trig) -> usize {
    match mode {
        Trig::Cos(k) | Trig::Sin(k) => k,
    }
}

/// L²-orthonormal basis of the kernel of `𝓛` among circle functions of the sector.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    spec: ManifoldSpec,
    sector: Sector,
    modes: Vec<Trig>,
    basis: Vec<Vec<f64>>,
}

impl KernelBasis {
    pub fn new(spec: &ManifoldSpec, sector: Sector) -> Result<Self> {
        let modes: Vec<Trig> = sector_modes(spec, sector)
            .into_iter()
            .filter(|&m| is_kernel_frequency(spec, frequency(m)))
            .collect();
        if modes.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no kernel at T = {}: the product metric is nondegenerate",
                spec.circumference()
            )));
        }
        let basis: Vec<Vec<f64>> = modes.iter().map(|&m| mode_samples(spec, m)).collect();
        for e in &basis {
            let residual = spec.l2_norm(&apply_linearized(spec, e, 0));
            if residual >= 1e-9 {
                return Err(Error::InvalidParameter(format!("kernel vector has |L e| = {residual:e}")));
            }
        }
        Ok(Self { spec: spec.clone(), sector, modes, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn modes(&self) -> &[Trig] {
        &self.modes
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `Σ c_i e_i` on the grid.
    pub fn combine(&self, coords: &[f64]) -> Vec<f64> {
        assert_eq!(coords.len(), self.dim());
        let mut out = vec![0.0; self.spec.m()];
        for (c, e) in coords.iter().zip(&self.basis) {
            for (o, x) in out.iter_mut().zip(e) {
                *o += c * x;
            }
        }
        out
    }

    /// `(⟨f, e_i⟩)_i`.
    pub fn coordinates(&self, f: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|e| self.spec.inner(f, e)).collect()
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.spec.inner(a, b) - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducerOptions {
    /// Newton stops once the max-norm residual is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest admissible `‖v‖_{L²}` as a multiple of `√V`.
    pub smallness_cap: f64,
}

impl Default for ReducerOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 30, smallness_cap: 0.2 }
    }
}

/// One solve of the reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSample {
    pub v_coords: Vec<f64>,
    /// `Φ(v)` on the grid.
    pub phi: Vec<f64>,
    /// `F(v) = 𝒴(Ψ(v))`.
    pub f_value: f64,
    /// `DF(v)` in kernel coordinates.
    pub gradient: Vec<f64>,
    pub newton_residual: f64,
    /// Lagrange multiplier of the volume constraint.
    pub multiplier: f64,
    pub iterations: usize,
    /// `max_i |⟨Φ, e_i⟩|`.
    pub kernel_leak: f64,
    /// `|vol(Ψ) − V| / V`.
    pub volume_defect: f64,
}

impl ReducedSample {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Solver for `Φ(v)` on a fixed grid and sector.
#[derive(Debug, Clone)]
pub struct Reducer {
    kernel: KernelBasis,
    complement: Vec<Vec<f64>>,
    opts: ReducerOptions,
}

impl Reducer {
    pub fn new(spec: &ManifoldSpec, sector: Sector, opts: ReducerOptions) -> Result<Self> {
        let kernel = KernelBasis::new(spec, sector)?;
        let complement = sector_modes(spec, sector)
            .into_iter()
            .filter(|m| !kernel.modes.contains(m))
            .map(|m| mode_samples(spec, m))
            .collect();
        Ok(Self { kernel, complement, opts })
    }

    pub fn kernel(&self) -> &KernelBasis {
        &self.kernel
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.kernel.spec
    }

    pub fn options(&self) -> &ReducerOptions {
        &self.opts
    }

    /// Reference scale `√V`, the L² norm of `u ≡ 1`.
    pub fn scale(&self) -> f64 {
        self.spec().scale()
    }

    fn psi(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        let mut psi: Vec<f64> = v.iter().map(|vi| 1.0 + vi).collect();
        for (c, b) in x.iter().zip(&self.complement) {
            for (p, bi) in psi.iter_mut().zip(b) {
                *p += c * bi;
            }
        }
        psi
    }

    /// `G(Ψ) − a·Ψ^(N−1)` and the volume of `Ψ`.
    fn constrained_gradient(&self, psi: &[f64], a: f64) -> Result<(ConformalFactor, Vec<f64>, f64)> {
        let spec = self.spec();
        let min = psi.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::PositivityLoss { min, t: 0.0 });
        }
        let u = ConformalFactor::new(spec, psi.to_vec())?;
        let big_n = spec.big_n();
        let w: Vec<f64> = u
            .euler_lagrange()
            .iter()
            .zip(psi)
            .map(|(g, p)| g - a * p.powf(big_n - 1.0))
            .collect();
        let vol = u.volume();
        Ok((u, w, vol))
    }

    fn residual(&self, v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let spec = self.spec();
        let m = self.complement.len();
        let psi = self.psi(v, &x[..m]);
        let (_, w, vol) = self.constrained_gradient(&psi, x[m])?;
        let v_ref = spec.reference_volume();
        let factor = v_ref.powf(-2.0 / spec.big_n());
        let mut r: Vec<f64> = self.complement.iter().map(|b| factor * spec.inner(&w, b)).collect();
        r.push((vol - v_ref) / v_ref);
        Ok(r)
    }

    /// Solves for `Φ(v)` by Newton's method with a forward-difference Jacobian.
    pub fn solve_phi(&self, coords: &[f64]) -> Result<ReducedSample> {
        self.solve_phi_from(coords, None)
    }

    /// As [`Reducer::solve_phi`], starting from the correction of a nearby sample.
    pub fn solve_phi_from(&self, coords: &[f64], guess: Option<&ReducedSample>) -> Result<ReducedSample> {
        let spec = self.spec();
        if coords.len() != self.kernel.dim() {
            return Err(Error::InvalidParameter(format!(
                "expected {} kernel coordinates, got {}",
                self.kernel.dim(),
                coords.len()
            )));
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > self.opts.smallness_cap * self.scale() {
            return Err(Error::InvalidParameter(format!(
                "|v| = {norm} exceeds the smallness cap {} x {}",
                self.opts.smallness_cap,
                self.scale()
            )));
        }
        let v = self.kernel.combine(coords);
        let m = self.complement.len();
        let mut x = vec![0.0; m + 1];
        if let Some(g) = guess {
            for (xi, b) in x.iter_mut().zip(&self.complement) {
                *xi = spec.inner(&g.phi, b);
            }
            x[m] = g.multiplier;
        }
        let mut history = Vec::new();
        let mut r = self.residual(&v, &x)?;
        let mut iterations = 0;
        loop {
            let res_norm = r.iter().fold(0.0f64, |acc, ri| acc.max(ri.abs()));
            history.push(res_norm);
            if res_norm < self.opts.tol {
                break;
            }
            if iterations >= self.opts.max_iter || !res_norm.is_finite() || res_norm > 1e6 * history[0].max(1e-3) {
                return Err(Error::NewtonDivergence { history });
            }
            let mut jac = DMatrix::zeros(m + 1, m + 1);
            for j in 0..=m {
                let eta = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                xp[j] += eta;
                let rp = self.residual(&v, &xp)?;
                for i in 0..=m {
                    jac[(i, j)] = (rp[i] - r[i]) / eta;
                }
            }
            let rhs = -DVector::from_vec(r.clone());
            let dx = jac.lu().solve(&rhs).ok_or_else(|| Error::NewtonDivergence { history: history.clone() })?;
            for (xi, d) in x.iter_mut().zip(dx.iter()) {
                *xi += d;
            }
            r = self.residual(&v, &x)?;
            iterations += 1;
        }
        let newton_residual = *history.last().expect("at least one residual");
        let phi = self.psi(&vec![0.0; spec.m()], &x[..m]).iter().map(|p| p - 1.0).collect::<Vec<_>>();
        let psi = self.psi(&v, &x[..m]);
        let (u, w, vol) = self.constrained_gradient(&psi, x[m])?;
        let factor = vol.powf(-2.0 / spec.big_n());
        let gradient = self.kernel.basis.iter().map(|e| factor * spec.inner(&w, e)).collect();
        let kernel_leak = self.kernel.coordinates(&phi).iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        Ok(ReducedSample {
            v_coords: coords.to_vec(),
            phi,
            f_value: u.yamabe_energy(),
            gradient,
            newton_residual,
            multiplier: x[m],
            iterations,
            kernel_leak,
            volume_defect: ((vol - spec.reference_volume()) / spec.reference_volume()).abs(),
        })
    }

    pub fn reduced_f(&self, coords: &[f64]) -> Result<f64> {
        Ok(self.solve_phi(coords)?.f_value)
    }

    pub fn reduced_df(&self, coords: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_phi(coords)?.gradient)
    }

    /// Spread of `F` on tiny kernel vectors, where the true variation is far below rounding.
    pub fn quadrature_noise(&self) -> Result<f64> {
        let f0 = self.reduced_f(&vec![0.0; self.kernel.dim()])?;
        let mut noise = 4.0 * f64::EPSILON * f0.abs();
        for i in 0..self.kernel.dim() {
            for s in [-4e-6, -2e-6, -1e-6, 1e-6, 2e-6, 4e-6] {
                let mut c = vec![0.0; self.kernel.dim()];
                c[i] = s * self.scale();
                noise = noise.max((self.reduced_f(&c)? - f0).abs());
            }
        }
        Ok(noise)
    }

    /// `(F(2h) − 2F(h) + 2F(−h) − F(−2h)) / (2h³)` along `coords`.
    pub fn third_difference(&self, coords: &[f64], h: f64) -> Result<f64> {
        let at = |s: f64| self.reduced_f(&coords.iter().map(|c| s * c).collect::<Vec<_>>());
        Ok((at(2.0 * h)? - 2.0 * at(h)? + 2.0 * at(-h)? - at(-2.0 * h)?) / (2.0 * h * h * h))
    }

    /// Polarized trilinear form `D³F(0)[a, b, c]` from third differences.
    pub fn polarized_third(&self, a: &[f64], b: &[f64], c: &[f64], h: f64) -> Result<f64> {
        polarize(|x| self.third_difference(x, h), a, b, c)
    }

    /// CSV with columns `c0..c{d-1},F,residual`.
    pub fn write_samples_csv<W: io::Write>(&self, samples: &[ReducedSample], w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.kernel.dim()).map(|i| format!("c{i}")).collect();
        header.push("F".into());
        header.push("residual".into());
        out.write_record(&header)?;
        for s in samples {
            let mut row: Vec<String> = s.v_coords.iter().map(|c| format!("{c:.17e}")).collect();
            row.push(format!("{:.17e}", s.f_value));
            row.push(format!("{:.3e}", s.newton_residual));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn polarize<F>(cubic: F, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut acc = 0.0;
    for bits in 0..8u32 {
        let e: Vec<f64> = (0..3).map(|i| if bits >> i & 1 == 0 { 1.0 } else { -1.0 }).collect();
        let x: Vec<f64> = (0..a.len()).map(|i| e[0] * a[i] + e[1] * b[i] + e[2] * c[i]).collect();
        acc += e[0] * e[1] * e[2] * cubic(&x)?;
    }
    Ok(acc / 48.0)
}

/// `D³𝒴(1)[a, b, c] = −2(N−1)(N−2)·R∞·V^(−2/N)·∫abc` for mean-zero `a, b, c`.
///
/// This is the full third derivative, not the `1/3!` Taylor coefficient. On the kernel
/// the reduced third derivative `D³F(0)` equals it, since `D𝒴(1) = 0` and kernel
/// vectors are null for the Hessian.
pub fn f3_closed(spec: &ManifoldSpec, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let big_n = spec.big_n();
    let prod: Vec<f64> = a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).collect();
    -2.0 * (big_n - 1.0) * (big_n - 2.0) * spec.r_inf() * spec.reference_volume().powf(-2.0 / big_n)
        * spec.integrate(&prod)
}

/// `D³𝒴(1)[w, w, w]` from third differences of `s ↦ 𝒴(1 + s·w)`, Richardson-extrapolated in `h`.
pub fn ambient_third_derivative(spec: &ManifoldSpec, w: &[f64], h: f64) -> Result<f64> {
    let y = |s: f64| -> Result<f64> {
        let samples: Vec<f64> = w.iter().map(|x| 1.0 + s * x).collect();
        Ok(ConformalFactor::new(spec, samples)?.yamabe_energy())
    };
    let d = |h: f64| -> Result<f64> {
        Ok((y(2.0 * h)? - 2.0 * y(h)? + 2.0 * y(-h)? - y(-2.0 * h)?) / (2.0 * h * h * h))
    };
    let (coarse, fine) = (d(h)?, d(h / 2.0)?);
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Polarized `D³𝒴(1)[a, b, c]` from [`ambient_third_derivative`].
pub fn ambient_polarized_third(spec: &ManifoldSpec, a: &[f64], b: &[f64], c: &[f64], h: f64) -> Result<f64> {
    polarize(|x| ambient_third_derivative(spec, x, h), a, b, c)
}

/// Order fit along one unit kernel direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionFit {
    pub v_hat: Vec<f64>,
    /// Log-log slope of `|F(s·v̂) − F(0)|`.
    pub p_hat: f64,
    pub r_squared: f64,
    /// Points above the noise threshold used in the fit.
    pub used: usize,
    /// Leading coefficient `lim (F(s·v̂) − F(0))/s^p` at the integer order.
    pub f_p: f64,
    /// `min_s (F(±s·v̂) − F(0))`.
    pub min_increment: f64,
    /// `max_s |F(s·v̂) − F(−s·v̂)|`.
    pub symmetry_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    /// Smallest fitted slope over the sampled directions.
    pub p_hat: f64,
    /// Nearest integer to `p_hat`, at least 3.
    pub p: u32,
    /// Largest leading coefficient over the sampled directions.
    pub f_p: f64,
    pub v_hat: Vec<f64>,
    /// `F_p` attains a positive value on the unit sphere of the kernel.
    pub as_condition: bool,
    pub noise: f64,
    pub directions: Vec<DirectionFit>,
}

/// Geometric grid of `count` points in `[1e−3, 1e−1]·√V`.
pub fn default_s_grid(spec: &ManifoldSpec, count: usize) -> Vec<f64> {
    let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
    (0..count)
        .map(|i| spec.scale() * (lo + (hi - lo) * i as f64 / (count as f64 - 1.0)).exp())
        .collect()
}

/// Unit vectors of a `dim`-dimensional kernel, covering the sphere up to sign.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0]],
        2 => (0..count)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..count)
                .map(|_| {
                    let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    g.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    }
}

/// Relative accuracy required of an increment before it enters the coefficient fit.
const COEFFICIENT_NOISE_FACTOR: f64 = 1e4;

/// Fits the order of the first nonconstant Taylor term of `F` at 0.
pub fn fit_order(reducer: &Reducer, directions: &[Vec<f64>], s_grid: &[f64], exec: Execution) -> Result<OrderFit> {
    let noise = reducer.quadrature_noise()?;
    let f0 = reducer.reduced_f(&vec![0.0; reducer.kernel().dim()])?;
    let mut jobs = Vec::new();
    for d in 0..directions.len() {
        for &s in s_grid {
            jobs.push((d, s));
            jobs.push((d, -s));
        }
    }
    let values = map_slice(exec, &jobs, |&(d, s)| {
        reducer.reduced_f(&directions[d].iter().map(|c| s * c).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut fits = Vec::new();
    for (d, dir) in directions.iter().enumerate() {
        let (mut ls, mut lf, mut incs) = (Vec::new(), Vec::new(), Vec::new());
        let mut min_increment = f64::INFINITY;
        let mut symmetry_defect: f64 = 0.0;
        for (i, &s) in s_grid.iter().enumerate() {
            let base = 2 * (d * s_grid.len() + i);
            let (plus, minus) = (values[base] - f0, values[base + 1] - f0);
            min_increment = min_increment.min(plus).min(minus);
            symmetry_defect = symmetry_defect.max((plus - minus).abs());
            if plus.abs() > 10.0 * noise {
                ls.push(s.ln());
                lf.push(plus.abs().ln());
                incs.push((s, plus));
            }
        }
        if ls.len() < 3 {
            continue;
        }
        let fit = linear_fit(&ls, &lf);
        fits.push((dir.clone(), fit, incs, min_increment, symmetry_defect));
    }
    if fits.is_empty() {
        return Err(Error::IntegrableWithinTolerance);
    }
    let p_hat = fits.iter().map(|f| f.1.slope).fold(f64::INFINITY, f64::min);
    let p = (p_hat.round() as u32).max(3);
    let directions: Vec<DirectionFit> = fits
        .into_iter()
        .map(|(v_hat, fit, incs, min_increment, symmetry_defect)| {
            let accurate: Vec<&(f64, f64)> =
                incs.iter().filter(|(_, inc)| inc.abs() > COEFFICIENT_NOISE_FACTOR * noise).collect();
            let pick = if accurate.len() >= 3 { accurate } else { incs.iter().collect() };
            let xs: Vec<f64> = pick.iter().map(|(s, _)| *s).collect();
            let ys: Vec<f64> = pick.iter().map(|(s, inc)| inc / s.powi(p as i32)).collect();
            let f_p = polynomial_fit(&xs, &ys, &[0, 1, 2])[0];
            DirectionFit {
                v_hat,
                p_hat: fit.slope,
                r_squared: fit.r_squared,
                used: incs.len(),
                f_p,
                min_increment,
                symmetry_defect,
            }
        })
        .collect();
    let best = directions
        .iter()
        .max_by(|a, b| a.f_p.total_cmp(&b.f_p))
        .expect("at least one direction");
    Ok(OrderFit {
        p_hat,
        p,
        f_p: best.f_p,
        v_hat: best.v_hat.clone(),
        as_condition: best.f_p > 0.0,
        noise,
        directions: directions.clone(),
    })
}

/// Sampled Łojasiewicz ratios `|F(v) − F(0)|^(1−θ) / ‖DF(v)‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LojasiewiczReport {
    pub p: u32,
    /// `1 − 1/p`.
    pub exponent: f64,
    pub worst_ratio: f64,
    pub best_ratio: f64,
    /// Samples above the noise threshold.
    pub used: usize,
    /// Log-log slope, along `v̂`, of the ratio with exponent `1 − 1/p`; near 0 when bounded away from 0 and ∞.
    pub slope_exponent_theta: f64,
    /// Log-log slope, along `v̂`, of the ratio with exponent `1 − 1/(p+2)`.
    pub slope_exponent_p_plus_2: f64,
    /// Log-log slope, along `v̂`, of the ratio with exponent `1/2`. Negative slopes mean the
    /// ratio is unbounded as `s → 0`, so `θ = 1/2` fails.
    pub slope_exponent_half: f64,
}

/// Samples the kernel ball of radius `radius` uniformly and evaluates the ratio with `θ = 1/p`.
#[allow(clippy::too_many_arguments)]
pub fn lojasiewicz_check(
    reducer: &Reducer,
    p: u32,
    v_hat: &[f64],
    samples: usize,
    radius: f64,
    seed: u64,
    noise: f64,
    exec: Execution,
) -> Result<LojasiewiczReport> {
    let dim = reducer.kernel().dim();
    let f0 = reducer.reduced_f(&vec![0.0; dim])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            g.into_iter().map(|x| r * x / n).collect()
        })
        .collect();
    let solved = map_slice(exec, &points, |c| reducer.solve_phi(c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let exponent = 1.0 - 1.0 / p as f64;
    let ratios: Vec<f64> = solved
        .iter()
        .filter(|s| (s.f_value - f0).abs() > 10.0 * noise)
        .map(|s| (s.f_value - f0).abs().powf(exponent) / s.gradient_norm())
        .collect();
    if ratios.is_empty() {
        return Err(Error::IntegrableWithinTolerance);
    }

    let grid = default_s_grid(reducer.spec(), 9);
    let along = map_slice(exec, &grid, |&s| reducer.solve_phi(&v_hat.iter().map(|c| s * c).collect::<Vec<_>>()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let slope_for = |e: f64| {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (s, smp) in grid.iter().zip(&along) {
            let inc = (smp.f_value - f0).abs();
            if inc > 10.0 * noise {
                xs.push(s.ln());
                ys.push((inc.powf(e) / smp.gradient_norm()).ln());
            }
        }
        if xs.len() < 2 {
            f64::NAN
        } else {
            linear_fit(&xs, &ys).slope
        }
    };
    Ok(LojasiewiczReport {
        p,
        exponent,
        worst_ratio: ratios.iter().copied().fold(0.0, f64::max),
        best_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        used: ratios.len(),
        slope_exponent_theta: slope_for(exponent),
        slope_exponent_p_plus_2: slope_for(1.0 - 1.0 / (p as f64 + 2.0)),
        slope_exponent_half: slope_for(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn critical(m: usize) -> ManifoldSpec {
        ManifoldSpec::critical(4, m).unwrap()
    }

    #[test]
    fn kernel_bases() {
        let spec = critical(32);
        let even = KernelBasis::new(&spec, Sector::Even).unwrap();
        assert_eq!(even.dim(), 1);
        assert_eq!(even.modes(), &[Trig::Cos(1)]);
        assert!(even.gram_defect() < 1e-10);
        let full = KernelBasis::new(&spec, Sector::Full).unwrap();
        assert_eq!(full.dim(), 2);
        assert!(full.gram_defect() < 1e-10);
        let v = full.combine(&[0.3, -0.2]);
        let c = full.coordinates(&v);
        assert!((c[0] - 0.3).abs() < 1e-12 && (c[1] + 0.2).abs() < 1e-12);
        assert!(KernelBasis::new(&ManifoldSpec::new(4, 3.0, 32).unwrap(), Sector::Even).is_err());
    }

    #[test]
    fn zero_is_the_product_metric() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Even, ReducerOptions::default()).unwrap();
        let s = r.solve_phi(&[0.0]).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.phi.iter().all(|p| p.abs() < 1e-14));
        let one = ConformalFactor::constant(&spec, 1.0).unwrap();
        assert!((s.f_value - one.yamabe_energy()).abs() < 1e-12);
        assert!(s.gradient_norm() < 1e-10);
    }

    #[test]
    fn solve_at_moderate_amplitude() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Even, ReducerOptions::default()).unwrap();
        // v = 0.05·cos(√2 t)
        let c = 0.05 * (spec.reference_volume() / 2.0).sqrt();
        let s = r.solve_phi(&[c]).unwrap();
        assert!(s.newton_residual < 1e-11);
        assert!(s.kernel_leak < 1e-10);
        assert!(s.volume_defect < 1e-12);
        assert!(s.f_value > r.reduced_f(&[0.0]).unwrap());
    }

    #[test]
    fn correction_is_quadratic() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Even, ReducerOptions::default()).unwrap();
        let norms: Vec<f64> = [0.08, 0.04, 0.02, 0.01]
            .iter()
            .map(|s| spec.l2_norm(&r.solve_phi(&[s * spec.scale()]).unwrap().phi))
            .collect();
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Full, ReducerOptions::default()).unwrap();
        let c = [0.3, -0.45];
        let g = r.reduced_df(&c).unwrap();
        let mut errors = Vec::new();
        for eps in [1e-2, 5e-3] {
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                let mut p = c;
                let mut m = c;
                p[i] += eps;
                m[i] -= eps;
                let fd = (r.reduced_f(&p).unwrap() - r.reduced_f(&m).unwrap()) / (2.0 * eps);
                worst = worst.max((fd - g[i]).abs());
            }
            errors.push(worst);
        }
        // Central differences: halving ε divides the error by 4.
        let ratio = errors[0] / errors[1];
        assert!((ratio - 4.0).abs() < 0.5, "{errors:?}");
        assert!(errors[1] < 1e-3 * g.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn rejects_large_vectors() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Even, ReducerOptions::default()).unwrap();
        assert!(matches!(r.solve_phi(&[0.3 * spec.scale()]), Err(Error::InvalidParameter(_))));
        assert!(r.solve_phi(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_third_derivative_matches_ambient_differences() {
        let spec = ManifoldSpec::new(4, 5.0, 64).unwrap();
        let grid = spec.grid();
        let (a, b, c) = (grid.cos_mode(1), grid.cos_mode(2), grid.cos_mode(3));
        let closed = f3_closed(&spec, &a, &b, &c);
        assert!(closed.abs() > 1.0);
        let numeric = ambient_polarized_third(&spec, &a, &b, &c, 1e-2).unwrap();
        assert!(((numeric - closed) / closed).abs() < 1e-4, "{numeric} vs {closed}");
        let w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let diag = ambient_third_derivative(&spec, &w, 1e-2).unwrap();
        let closed_diag = f3_closed(&spec, &w, &w, &w);
        assert!(((diag - closed_diag) / closed_diag).abs() < 1e-4);
        // Cubic homogeneity.
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        assert_eq!(f3_closed(&spec, &w2, &w2, &w2), 8.0 * closed_diag);
    }

    #[test]
    fn order_fit_even_sector() {
        let spec = critical(32);
        let r = Reducer::new(&spec, Sector::Even, ReducerOptions::default()).unwrap();
        let fit = fit_order(&r, &unit_directions(1, 1), &default_s_grid(&spec, 9), Execution::default()).unwrap();
        assert_eq!(fit.p, 4, "{fit:?}");
        assert!((fit.p_hat - 4.0).abs() < 0.1);
        assert!(fit.as_condition);
        assert!(fit.directions[0].min_increment > 0.0);
    }
}
