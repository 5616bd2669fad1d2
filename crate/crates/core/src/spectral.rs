//! Spectra of the Laplacian and of the linearized Yamabe operator `𝓛 = (n−1)Δ + R∞`
//! on the product `S¹(T/2π) × S^{n−1}`, and a Monte Carlo check of a cubic
//! eigenfunction integral on complex projective space.

use std::f64::consts::PI;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::exec::{map_indexed, Execution};
use crate::geometry::ManifoldSpec;
use crate::{Error, Result};

/// Eigenvalues closer than this to `n − 2` count as kernel modes.
pub const KERNEL_TOL: f64 = 1e-9;

/// Joint Laplace eigenmode: circle frequency `k`, sphere degree `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenMode {
    pub k: u32,
    pub l: u32,
    /// `(2πk/T)² + l(l+n−2)`, with `Δφ = −lam·φ`.
    pub lam: f64,
    pub mult: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeLabel {
    /// `mu > 0`: grows under the linearized flow.
    Up,
    Zero,
    /// `mu < 0`: decays.
    Down,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::Up => "up",
            ModeLabel::Zero => "zero",
            ModeLabel::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedMode {
    pub base: EigenMode,
    /// `R∞ − (n−1)·lam`.
    pub mu: f64,
    pub label: ModeLabel,
}

fn binomial(top: i64, bottom: i64) -> u64 {
    if bottom < 0 || top < bottom {
        return 0;
    }
    let bottom = bottom.min(top - bottom);
    let mut acc: u128 = 1;
    for i in 0..bottom {
        acc = acc * (top - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Dimension of the degree-`l` spherical harmonics on `S^{n−1}`.
pub fn sphere_multiplicity(n: u32, l: u32) -> u64 {
    let (n, l) = (n as i64, l as i64);
    binomial(l + n - 1, n - 1) - binomial(l + n - 3, n - 1)
}

pub fn sphere_eigenvalue(n: u32, l: u32) -> f64 {
    (l as f64) * (l as f64 + n as f64 - 2.0)
}

fn circle_eigenvalue(spec: &ManifoldSpec, k: u32) -> f64 {
    (2.0 * PI * k as f64 / spec.circumference()).powi(2)
}

fn mode(spec: &ManifoldSpec, k: u32, l: u32) -> EigenMode {
    let n = spec.n();
    EigenMode {
        k,
        l,
        lam: circle_eigenvalue(spec, k) + sphere_eigenvalue(n, l),
        mult: if k == 0 { 1 } else { 2 } * sphere_multiplicity(n, l),
    }
}

/// All product modes with `lam ≤ lam_max`, sorted by eigenvalue.
pub fn laplace_spectrum(spec: &ManifoldSpec, lam_max: f64) -> Vec<EigenMode> {
    let mut modes = Vec::new();
    let mut k = 0;
    while circle_eigenvalue(spec, k) <= lam_max {
        let mut l = 0;
        while circle_eigenvalue(spec, k) + sphere_eigenvalue(spec.n(), l) <= lam_max {
            modes.push(mode(spec, k, l));
            l += 1;
        }
        k += 1;
    }
    modes.sort_by(|a, b| a.lam.total_cmp(&b.lam).then(a.k.cmp(&b.k)).then(a.l.cmp(&b.l)));
    modes
}

fn is_kernel(spec: &ManifoldSpec, lam: f64) -> bool {
    (lam - (spec.n() as f64 - 2.0)).abs() < KERNEL_TOL
}

/// Dimension of the kernel of `𝓛` in several symmetry sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelDimension {
    /// All modes, with sphere multiplicity.
    pub full: u64,
    /// Functions of the circle variable only (`l = 0`): `sin` and `cos` per frequency.
    pub s1_symmetric: u64,
    /// Reflection-even circle functions (`cos` only).
    pub even: u64,
}

pub fn kernel_dimension(spec: &ManifoldSpec) -> KernelDimension {
    let target = spec.n() as f64 - 2.0;
    let modes = laplace_spectrum(spec, target + 1.0);
    let kernel: Vec<&EigenMode> = modes.iter().filter(|m| is_kernel(spec, m.lam)).collect();
    KernelDimension {
        full: kernel.iter().map(|m| m.mult).sum(),
        s1_symmetric: kernel.iter().filter(|m| m.l == 0).map(|m| m.mult).sum(),
        even: kernel.iter().filter(|m| m.l == 0).count() as u64,
    }
}

pub fn linearize(spec: &ManifoldSpec, base: EigenMode) -> LinearizedMode {
    let mu = spec.r_inf() - (spec.n() as f64 - 1.0) * base.lam;
    let label = if is_kernel(spec, base.lam) {
        ModeLabel::Zero
    } else if mu > 0.0 {
        ModeLabel::Up
    } else {
        ModeLabel::Down
    };
    LinearizedMode { base, mu, label }
}

/// Predicted exponential decay rate of circle-symmetric nonconstant perturbations of `u ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPrediction {
    /// `min (n−1)(lam − (n−2))` over circle modes with `lam > n − 2`.
    pub rate: f64,
    /// A kernel mode exists, so the slowest perturbations do not decay exponentially.
    pub degenerate: bool,
    /// Some circle mode has `lam < n − 2` and grows.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizedSpectrum {
    pub modes: Vec<LinearizedMode>,
    pub decay: DecayPrediction,
}

/// The `count` modes of smallest `|mu|`, plus the predicted circle-symmetric decay rate.
pub fn linearized_spectrum(spec: &ManifoldSpec, count: usize) -> LinearizedSpectrum {
    let n1 = spec.n() as f64 - 1.0;
    let mut lam_max = spec.n() as f64;
    let modes = loop {
        // Every mode with |mu| ≤ (n−1)·lam_max − R∞ has lam ≤ lam_max.
        let cutoff = n1 * lam_max - spec.r_inf();
        let mut lin: Vec<LinearizedMode> = laplace_spectrum(spec, lam_max)
            .into_iter()
            .map(|m| linearize(spec, m))
            .filter(|m| m.mu.abs() <= cutoff)
            .collect();
        if lin.len() >= count {
            lin.sort_by(|a, b| a.mu.abs().total_cmp(&b.mu.abs()).then(a.base.lam.total_cmp(&b.base.lam)));
            lin.truncate(count);
            break lin;
        }
        lam_max *= 2.0;
    };
    LinearizedSpectrum { modes, decay: decay_prediction(spec) }
}

pub fn decay_prediction(spec: &ManifoldSpec) -> DecayPrediction {
    let target = spec.n() as f64 - 2.0;
    let mut degenerate = false;
    let mut unstable = false;
    let mut k = 1;
    let rate = loop {
        let lam = circle_eigenvalue(spec, k);
        if is_kernel(spec, lam) {
            degenerate = true;
        } else if lam < target {
            unstable = true;
        } else {
            break (spec.n() as f64 - 1.0) * (lam - target);
        }
        k += 1;
    };
    DecayPrediction { rate, degenerate, unstable }
}

/// Applies `𝓛` to `f(t)·Y_l` for a degree-`l` spherical harmonic `Y_l`, returning the circle factor.
pub fn apply_linearized(spec: &ManifoldSpec, f: &[f64], l: u32) -> Vec<f64> {
    let n1 = spec.n() as f64 - 1.0;
    let shift = sphere_eigenvalue(spec.n(), l);
    let r = spec.r_inf();
    spec.grid()
        .second_derivative(f)
        .iter()
        .zip(f)
        .map(|(d2, x)| n1 * (d2 - shift * x) + r * x)
        .collect()
}

/// CSV with columns `k,l,lam,mu,mult,label`.
pub fn write_spectrum_csv<W: io::Write>(modes: &[LinearizedMode], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "l", "lam", "mu", "mult", "label"])?;
    for m in modes {
        out.write_record([
            m.base.k.to_string(),
            m.base.l.to_string(),
            format!("{:.17e}", m.base.lam),
            format!("{:.17e}", m.mu),
            m.base.mult.to_string(),
            m.label.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|estimate| / std_error`.
    pub fn z_score(&self) -> f64 {
        self.estimate.abs() / self.std_error
    }
}

/// Averages over the unit sphere `S^{2n+1} ⊂ ℂ^{n+1}` for the `ℂPⁿ` eigenfunction
/// `h = 2 Re(z₁z̄₂ + z₂z̄₃ + z₃z̄₁)` and the control `g = Im(z₁z̄₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpnReport {
    pub n_cp: u32,
    pub samples: u64,
    pub seed: u64,
    /// `∫h³`.
    pub cubic: McEstimate,
    /// `∫h`, which vanishes for a first eigenfunction.
    pub mean: McEstimate,
    /// `∫g³`, which vanishes by the conjugate swap `z₁ ↔ z₂`.
    pub control: McEstimate,
}

/// Fixed number of RNG streams, so results do not depend on the thread count.
pub const MC_SHARDS: usize = 64;

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

fn shard_moments(n_cp: u32, count: u64, seed: u64, shard: usize) -> Moments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    let dim = n_cp as usize + 1;
    let mut z = vec![(0.0f64, 0.0f64); dim];
    let mut m = Moments::default();
    for _ in 0..count {
        let mut norm_sq = 0.0;
        for c in z.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            norm_sq += re * re + im * im;
            *c = (re, im);
        }
        let s = norm_sq.sqrt();
        let p: Vec<(f64, f64)> = z[..3].iter().map(|&(a, b)| (a / s, b / s)).collect();
        // Re(a·conj(b)) and Im(a·conj(b))
        let re_ab = |a: (f64, f64), b: (f64, f64)| a.0 * b.0 + a.1 * b.1;
        let im_ab = |a: (f64, f64), b: (f64, f64)| a.1 * b.0 - a.0 * b.1;
        let h = 2.0 * (re_ab(p[0], p[1]) + re_ab(p[1], p[2]) + re_ab(p[2], p[0]));
        let g = im_ab(p[0], p[1]);
        let vals = [h * h * h, h, g * g * g];
        for ((s, sq), v) in m.sum.iter_mut().zip(m.sum_sq.iter_mut()).zip(vals) {
            *s += v;
            *sq += v * v;
        }
    }
    m
}

pub fn cpn_integrals(n_cp: u32, samples: u64, seed: u64, exec: Execution) -> Result<CpnReport> {
    if n_cp < 2 {
        return Err(Error::InvalidParameter(format!("n_cp must be >= 2, got {n_cp}")));
    }
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!("need at least 1e4 samples, got {samples}")));
    }
    let base = samples / MC_SHARDS as u64;
    let extra = (samples % MC_SHARDS as u64) as usize;
    let parts = map_indexed(exec, MC_SHARDS, |i| {
        shard_moments(n_cp, base + u64::from(i < extra), seed, i)
    });
    let mut total = Moments::default();
    for p in &parts {
        for i in 0..3 {
            total.sum[i] += p.sum[i];
            total.sum_sq[i] += p.sum_sq[i];
        }
    }
    let count = samples as f64;
    let est = |i: usize| {
        let mean = total.sum[i] / count;
        let var = (total.sum_sq[i] / count - mean * mean).max(0.0) * count / (count - 1.0);
        McEstimate { estimate: mean, std_error: (var / count).sqrt() }
    };
    Ok(CpnReport { n_cp, samples, seed, cubic: est(0), mean: est(1), control: est(2) })
}

/// Monte Carlo estimate of the sphere average of `h³`.
pub fn cpn_cubic_integral(n_cp: u32, samples: u64, seed: u64) -> Result<McEstimate> {
    Ok(cpn_integrals(n_cp, samples, seed, Execution::default())?.cubic)
}
