//! Building blocks of the slow-convergence construction: the polynomially decaying ansatz
//! `φ(t)` along a kernel direction, the Hessian weights of the leading Taylor term, explicit
//! solutions of the linear kernel and off-kernel problems, and weighted sup norms.

use std::io;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::exec::{map_slice, Execution};
use crate::flow::{fit_rate, FitWindow, FlowRun, RateModel};
use crate::geometry::ManifoldSpec;
use crate::numerics::integrate;
use crate::{Error, Result};

/// `φ(t) = (T+t)^(−1/(p−2)) · (2(N−2)/(p(p−2)F_p(v̂)))^(1/(p−2)) · v̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ansatz {
    pub p: u32,
    pub f_p: f64,
    pub v_hat: Vec<f64>,
    pub t_shift: f64,
    pub big_n: f64,
}

impl Ansatz {
    pub fn new(p: u32, f_p: f64, v_hat: Vec<f64>, t_shift: f64, big_n: f64) -> Result<Self> {
        if p < 3 {
            return Err(Error::InvalidParameter(format!("order p must be >= 3, got {p}")));
        }
        if !(f_p > 0.0) {
            return Err(Error::InvalidParameter(format!("F_p(v_hat) must be positive, got {f_p}")));
        }
        let norm = v_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("v_hat must be a unit vector, |v_hat| = {norm}")));
        }
        if !(t_shift > 0.0 && big_n > 2.0) {
            return Err(Error::InvalidParameter("need T_shift > 0 and N > 2".into()));
        }
        Ok(Self { p, f_p, v_hat, t_shift, big_n })
    }

    fn pf(&self) -> f64 {
        self.p as f64
    }

    /// Scalar `λ(t)` with `φ(t) = λ(t)·v̂`.
    pub fn amplitude(&self, t: f64) -> f64 {
        let p = self.pf();
        let c = 2.0 * (self.big_n - 2.0) / (p * (p - 2.0) * self.f_p);
        ((self.t_shift + t).recip() * c).powf(1.0 / (p - 2.0))
    }

    pub fn phi(&self, t: f64) -> Vec<f64> {
        let a = self.amplitude(t);
        self.v_hat.iter().map(|v| a * v).collect()
    }

    /// `φ'(t) = −(1/(p−2))(T+t)^(−1) φ(t)`.
    pub fn phi_dot(&self, t: f64) -> Vec<f64> {
        let f = -1.0 / ((self.pf() - 2.0) * (self.t_shift + t));
        self.phi(t).into_iter().map(|x| f * x).collect()
    }

    /// `DF_p(λv̂) = p|λ|^(p−1) F_p(v̂) v̂` for `λ ≥ 0`.
    pub fn grad_f_p(&self, lambda: f64) -> Vec<f64> {
        let g = self.pf() * lambda.abs().powi(self.p as i32 - 1) * self.f_p;
        self.v_hat.iter().map(|v| g * v).collect()
    }
}

/// `max_t |2(N−2)φ'(t) + DF_p(φ(t))|` over the grid.
pub fn phi_ode_residual(ansatz: &Ansatz, t_grid: &[f64]) -> f64 {
    t_grid
        .iter()
        .map(|&t| {
            let d = ansatz.phi_dot(t);
            let g = ansatz.grad_f_p(ansatz.amplitude(t));
            d.iter().zip(&g).map(|(a, b)| (2.0 * (ansatz.big_n - 2.0) * a + b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Homogeneous polynomial `Σ c_α x^α` of fixed degree on a kernel of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousPolynomial {
    pub dim: usize,
    pub degree: u32,
    pub terms: Vec<(Vec<u32>, f64)>,
}

fn exponents(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in exponents(dim - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl HomogeneousPolynomial {
    pub fn monomial(dim: usize, degree: u32, coefficient: f64) -> Self {
        let mut e = vec![0; dim];
        e[0] = degree;
        Self { dim, degree, terms: vec![(e, coefficient)] }
    }

    /// Least-squares fit of `P(d_i) = values_i` on unit directions.
    pub fn fit(dim: usize, degree: u32, directions: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        let exps = exponents(dim, degree);
        if directions.len() < exps.len() {
            return Err(Error::InvalidParameter(format!(
                "need at least {} directions for a degree-{degree} polynomial in {dim} variables",
                exps.len()
            )));
        }
        let a = DMatrix::from_fn(directions.len(), exps.len(), |i, j| monomial_value(&exps[j], &directions[i]));
        let b = DMatrix::from_column_slice(values.len(), 1, values);
        let c = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { dim, degree, terms: exps.into_iter().zip(c.iter().copied()).collect() })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * monomial_value(e, x)).sum()
    }
}

fn monomial_value(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product()
}

/// Eigen-decomposition of `(2(N−2)/(p(p−2)F_p(v̂)))·D²F_p(v̂)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianWeights {
    /// Ascending eigenvalues `μ_i`.
    pub mu: Vec<f64>,
    /// Orthonormal eigenvectors, `frame[i]` belonging to `mu[i]`.
    pub frame: Vec<Vec<f64>>,
    pub asymmetry: f64,
    pub reconstruction_error: f64,
}

fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> DMatrix<f64> {
    let d = x.len();
    // Second differences of first differences, so that H_ij and H_ji use different stencils.
    let grad_i = |y: &[f64], i: usize, h: f64| {
        let mut p = y.to_vec();
        let mut m = y.to_vec();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    };
    let entry = |i: usize, j: usize, h: f64| {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[j] += h;
        m[j] -= h;
        (grad_i(&p, i, h) - grad_i(&m, i, h)) / (2.0 * h)
    };
    DMatrix::from_fn(d, d, |i, j| {
        let (coarse, fine) = (entry(i, j, h), entry(i, j, h / 2.0));
        (4.0 * fine - coarse) / 3.0
    })
}

pub fn hessian_weights<F: Fn(&[f64]) -> f64>(f_p: F, v_hat: &[f64], p: u32, big_n: f64) -> Result<HessianWeights> {
    let value = f_p(v_hat);
    if !(value > 0.0) {
        return Err(Error::InvalidParameter(format!("F_p(v_hat) = {value} is not positive")));
    }
    let h = hessian(&f_p, v_hat, 1e-2);
    let scale_h = h.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let asymmetry = (&h - h.transpose()).iter().fold(0.0f64, |acc, x| acc.max(x.abs())) / scale_h;
    if asymmetry > 1e-8 {
        return Err(Error::AsymmetricHessian(asymmetry));
    }
    let pf = p as f64;
    let m = (&h + h.transpose()) * (0.5 * 2.0 * (big_n - 2.0) / (pf * (pf - 2.0) * value));
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let recon = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
    let reconstruction_error = (recon - &m).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    Ok(HessianWeights {
        mu: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        frame: order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
        asymmetry,
        reconstruction_error,
    })
}

/// Vector-valued samples on a time grid, with the shift `T` used by the weights `(T+t)^w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSeries {
    pub t_shift: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NormKind {
    /// `sup (T+t)^γ |u(t)|`.
    SupGamma(f64),
    /// `sup (T+t)^γ |u| + sup (T+t)^(1+γ) |u'|`.
    SupOneGamma(f64),
    /// `sup (T+t)^q ‖u(t)‖_{L²}`, with components taken as orthonormal coefficients.
    L2q(f64),
    /// `sup (T+t)^q max_i |u_i(t)|`, with components taken as grid values.
    C0q(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorm {
    pub value: f64,
    /// The weighted values still grow at the end of the grid.
    pub divergent: bool,
}

impl WeightedSeries {
    pub fn new(t_shift: f64, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidParameter("times and values must be nonempty and of equal length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidParameter("all samples need the same number of components".into()));
        }
        Ok(Self { t_shift, times, values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Component-wise derivative by finite differences on the (possibly nonuniform) grid.
    pub fn derivative(&self) -> Vec<Vec<f64>> {
        let n = self.times.len();
        let d = self.dim();
        (0..n)
            .map(|i| {
                let (a, b) = if i == 0 {
                    (0, 1.min(n - 1))
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                if a == b {
                    return vec![0.0; d];
                }
                let dt = self.times[b] - self.times[a];
                (0..d).map(|k| (self.values[b][k] - self.values[a][k]) / dt).collect()
            })
            .collect()
    }

    /// CSV with columns `t,u0,u1,...`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("u{i}")));
        out.write_record(&header)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(v.iter().map(|x| format!("{x:.17e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format written by [`WeightedSeries::write_csv`].
    pub fn read_csv<R: io::Read>(t_shift: f64, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let nums = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            if nums.len() < 2 {
                return Err(Error::InvalidParameter("each row needs t and at least one component".into()));
            }
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        Self::new(t_shift, times, values)
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn weighted_sup(shift: f64, times: &[f64], norms: &[f64], w: f64) -> WeightedNorm {
    let vals: Vec<f64> = times.iter().zip(norms).map(|(t, n)| (shift + t).powf(w) * n).collect();
    let split = (vals.len() * 3 / 4).max(1).min(vals.len());
    let head = vals[..split].iter().copied().fold(0.0, f64::max);
    let tail = vals[split..].iter().copied().fold(0.0, f64::max);
    WeightedNorm { value: head.max(tail), divergent: tail > head * (1.0 + 1e-6) }
}

pub fn weighted_norm(series: &WeightedSeries, kind: NormKind) -> WeightedNorm {
    let s = series.t_shift;
    match kind {
        NormKind::SupGamma(g) | NormKind::L2q(g) => {
            let n: Vec<f64> = series.values.iter().map(|v| euclid(v)).collect();
            weighted_sup(s, &series.times, &n, g)
        }
        NormKind::C0q(q) => {
            let n: Vec<f64> = series.values.iter().map(|v| v.iter().fold(0.0f64, |a, x| a.max(x.abs()))).collect();
            weighted_sup(s, &series.times, &n, q)
        }
        NormKind::SupOneGamma(g) => {
            let n: Vec<f64> = series.values.iter().map(|v| euclid(v)).collect();
            let d: Vec<f64> = series.derivative().iter().map(|v| euclid(v)).collect();
            let a = weighted_sup(s, &series.times, &n, g);
            let b = weighted_sup(s, &series.times, &d, 1.0 + g);
            WeightedNorm { value: a.value + b.value, divergent: a.divergent || b.divergent }
        }
    }
}

/// Discrete time-Hölder seminorm `max |u(t_i) − u(t_j)| / |t_i − t_j|^α` over pairs at most `window` apart.
pub fn holder_seminorm(series: &WeightedSeries, alpha: f64, window: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..series.times.len() {
        for j in i + 1..series.times.len() {
            let dt = series.times[j] - series.times[i];
            if dt > window {
                break;
            }
            let diff: Vec<f64> = series.values[j].iter().zip(&series.values[i]).map(|(a, b)| a - b).collect();
            worst = worst.max(euclid(&diff) / dt.powf(alpha));
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Relative size of the truncated tail compared to the integral's natural scale.
    pub tail_tol: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-12, tail_tol: 1e-13 }
    }
}

/// A solution series with an upper bound on its quadrature and truncation error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    pub series: WeightedSeries,
    pub error_bound: f64,
}

/// Solves `2(N−2)u' + (T+t)^(−1) diag(μ) u = E` in the weight-`γ` class, component by component
/// in the eigenframe of the weights:
///
/// - `γ > a_j = μ_j/(2(N−2))`: `u_j(t) = −(2(N−2))^(−1)(T+t)^(−a_j) ∫_t^∞ (T+τ)^(a_j) E_j dτ`,
/// - `γ < a_j`: `u_j(t) = (2(N−2))^(−1)(T+t)^(−a_j) ∫_0^t (T+τ)^(a_j) E_j dτ`.
///
/// Infinite tails are cut where the weight bound `|E_j| ≤ ‖E_j‖_(1+γ)(T+τ)^(−1−γ)` makes the
/// rest negligible; that bound, with `‖E_j‖` sampled on a geometric grid, enters `error_bound`.
/// Quadrature runs in `s = ln(T+τ)`, so `E` should vary on the scale of `T+t`.
#[allow(clippy::too_many_arguments)]
pub fn solve_kernel_ode<E>(
    e: E,
    mu: &[f64],
    gamma: f64,
    big_n: f64,
    t_shift: f64,
    times: &[f64],
    opts: QuadOptions,
    exec: Execution,
) -> Result<OdeSolution>
where
    E: Fn(f64) -> Vec<f64> + Sync,
{
    let c = 2.0 * (big_n - 2.0);
    for &m in mu {
        let a = m / c;
        if (gamma - a).abs() < 1e-12 * a.abs().max(1.0) {
            return Err(Error::ResonantWeight { gamma, resonance: a });
        }
    }
    if !(t_shift > 0.0) {
        return Err(Error::InvalidParameter(format!("T_shift must be positive, got {t_shift}")));
    }
    let dim = mu.len();
    // Sampled weighted norm of E for the tail bound.
    let probe: Vec<f64> = (0..=200).map(|i| t_shift * (1e8f64.powf(i as f64 / 200.0)) - t_shift).collect();
    let mut e_norm = vec![0.0f64; dim];
    for &t in &probe {
        let v = e(t);
        for j in 0..dim {
            e_norm[j] = e_norm[j].max((t_shift + t).powf(1.0 + gamma) * v[j].abs());
        }
    }
    let rows = map_slice(exec, times, |&t| -> Result<(Vec<f64>, f64)> {
        let base = t_shift + t;
        let mut out = Vec::with_capacity(dim);
        let mut err = 0.0;
        for j in 0..dim {
            let a = mu[j] / c;
            // τ = (T+t)e^s − T, dτ = (T+τ) ds
            let integrand = |s: f64| {
                let x = base * s.exp();
                x.powf(a) * e(x - t_shift)[j] * x
            };
            if gamma > a {
                let span = ((1.0 / opts.tail_tol).ln() / (gamma - a)).min(35.0);
                let r = integrate(integrand, 0.0, span, opts.abs_tol, opts.rel_tol)?;
                let tail = e_norm[j] * (base * span.exp()).powf(a - gamma) / (gamma - a);
                let scale = base.powf(-a) / c;
                out.push(-scale * r.value);
                err += scale * (r.error + tail);
            } else {
                let lo = (t_shift / base).ln();
                let r = integrate(integrand, lo, 0.0, opts.abs_tol, opts.rel_tol)?;
                let scale = base.powf(-a) / c;
                out.push(scale * r.value);
                err += scale * r.error;
            }
        }
        Ok((out, err))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let error_bound = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let series = WeightedSeries::new(t_shift, times.to_vec(), rows.into_iter().map(|r| r.0).collect())?;
    Ok(OdeSolution { series, error_bound })
}

/// `max |2(N−2)u' + μ/(T+t)·u − E|` at the given times, with `u'` from a five-point stencil of
/// fresh solves around each time.
pub fn kernel_ode_residual<E>(
    e: E,
    mu: &[f64],
    gamma: f64,
    big_n: f64,
    t_shift: f64,
    times: &[f64],
) -> Result<f64>
where
    E: Fn(f64) -> Vec<f64> + Sync,
{
    let mut worst: f64 = 0.0;
    for &t in times {
        let h = 1e-2 * (t_shift + t).min(1.0 + t);
        let pts = [t - 2.0 * h, t - h, t, t + h, t + 2.0 * h];
        let sol = solve_kernel_ode(&e, mu, gamma, big_n, t_shift, &pts, QuadOptions::default(), Execution::Sequential)?;
        let v = &sol.series.values;
        let ev = e(t);
        for j in 0..mu.len() {
            let du = (v[0][j] - 8.0 * v[1][j] + 8.0 * v[3][j] - v[4][j]) / (12.0 * h);
            let r = 2.0 * (big_n - 2.0) * du + mu[j] / (t_shift + t) * v[2][j] - ev[j];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// Circle modes `cos/sin(κ_k t)` with their `𝓛`-eigenvalues `μ_k = R∞ − (n−1)κ_k²`.
pub fn circle_mode_eigenvalue(spec: &ManifoldSpec, k: usize) -> f64 {
    let w = spec.grid().wavenumber(k);
    spec.r_inf() - (spec.n() as f64 - 1.0) * w * w
}

/// Solves `u' = 𝓛u + E` mode by mode off the kernel. With `δ_k = −μ_k`:
///
/// - decaying modes (`δ_k > 0`): `u_k(t) = ∫_0^t e^(−δ_k(t−τ)) E_k dτ`,
/// - growing modes (`δ_k < 0`): `u_k(t) = −∫_t^∞ e^(−δ_k(t−τ)) E_k dτ`,
///
/// the latter cut where `e^(δ_k L)` drops below the tail tolerance, with `sup|E_k|` on the
/// window times that factor added to `error_bound`.
pub fn solve_orthogonal_ode<E>(
    spec: &ManifoldSpec,
    frequencies: &[usize],
    e: E,
    t_shift: f64,
    times: &[f64],
    opts: QuadOptions,
    exec: Execution,
) -> Result<OdeSolution>
where
    E: Fn(f64) -> Vec<f64> + Sync,
{
    let deltas: Vec<f64> = frequencies
        .iter()
        .map(|&k| {
            let mu = circle_mode_eigenvalue(spec, k);
            if mu.abs() < crate::spectral::KERNEL_TOL * (spec.n() as f64) {
                Err(Error::KernelForcing { k })
            } else {
                Ok(-mu)
            }
        })
        .collect::<Result<_>>()?;
    let rows = map_slice(exec, times, |&t| -> Result<(Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(deltas.len());
        let mut err = 0.0;
        for (j, &d) in deltas.iter().enumerate() {
            let integrand = |tau: f64| (-d * (t - tau)).exp() * e(tau)[j];
            if d > 0.0 {
                let r = integrate(integrand, 0.0, t, opts.abs_tol, opts.rel_tol)?;
                out.push(r.value);
                err += r.error;
            } else {
                let len = (1.0 / opts.tail_tol).ln() / -d;
                let r = integrate(integrand, t, t + len, opts.abs_tol, opts.rel_tol)?;
                let sup = (0..=20).map(|i| e(t + len * i as f64 / 20.0)[j].abs()).fold(0.0, f64::max);
                out.push(-r.value);
                err += r.error + sup * opts.tail_tol / -d;
            }
        }
        Ok((out, err))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let error_bound = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let series = WeightedSeries::new(t_shift, times.to_vec(), rows.into_iter().map(|r| r.0).collect())?;
    Ok(OdeSolution { series, error_bound })
}

/// Two-sided polynomial bounds for a flow run in the slow regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowRateVerdict {
    /// `1/(p−2)`.
    pub q_target: f64,
    pub q_fit: f64,
    pub r_squared: f64,
    /// `min` and `max` of `(1+t)^q ‖u − 1‖_{C⁰}` on the window.
    pub c1: f64,
    pub c2: f64,
    pub ratio: f64,
    pub window: (f64, f64),
    /// `‖proj_{Λ₀}(u−1)‖ / ‖u−1‖_{L²}` at the start and end of the window.
    pub kernel_share_start: f64,
    pub kernel_share_end: f64,
}

/// Checks `c₁(1+t)^(−1/(p−2)) ≤ ‖u(t) − 1‖_{C⁰} ≤ c₂(1+t)^(−1/(p−2))` over the last decade of the run
/// (or `bounds`), after the rate fit on `fit_window` selected the polynomial model.
pub fn slow_rate_verdict(
    run: &FlowRun,
    p: u32,
    fit_window: FitWindow,
    bounds: Option<(f64, f64)>,
) -> Result<SlowRateVerdict> {
    if p < 3 {
        return Err(Error::InvalidParameter(format!("order p must be >= 3, got {p}")));
    }
    let fit = fit_rate(&run.c0_series(), fit_window)?;
    if fit.model != RateModel::Polynomial {
        return Err(Error::NotPolynomial(format!(
            "model {:?} (exponential r2 {:.4}, polynomial r2 {:.4})",
            fit.model, fit.exponential.r_squared, fit.polynomial.r_squared
        )));
    }
    let q = 1.0 / (p as f64 - 2.0);
    let t_last = run.samples.last().map(|s| s.t).unwrap_or(0.0);
    let (lo, hi) = bounds.unwrap_or((t_last / 10.0, t_last));
    let inside: Vec<_> = run.samples.iter().filter(|s| s.t >= lo && s.t <= hi && s.c0_dist > 0.0).collect();
    if inside.len() < 2 {
        return Err(Error::WindowTooSmall { samples: inside.len(), required: 2 });
    }
    let w: Vec<f64> = inside.iter().map(|s| (1.0 + s.t).powf(q) * s.c0_dist).collect();
    let c1 = w.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = w.iter().copied().fold(0.0, f64::max);
    let share = |s: &crate::flow::FlowSample| if s.l2_dist > 0.0 { s.kernel_norm / s.l2_dist } else { 0.0 };
    Ok(SlowRateVerdict {
        q_target: q,
        q_fit: fit.rate,
        r_squared: fit.r_squared,
        c1,
        c2,
        ratio: c2 / c1,
        window: (inside[0].t, inside[inside.len() - 1].t),
        kernel_share_start: share(inside[0]),
        kernel_share_end: share(inside[inside.len() - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ansatz() -> Ansatz {
        Ansatz::new(4, 1.0, vec![1.0], 10.0, 4.0).unwrap()
    }

    #[test]
    fn ansatz_solves_its_ode() {
        let grid: Vec<f64> = (0..=1000).map(|i| 0.1 * i as f64).collect();
        assert!(phi_ode_residual(&ansatz(), &grid) < 1e-12);
        for (p, fp, t) in [(3, 0.3, 1.0), (6, 2.5, 100.0), (5, 1e-3, 7.0)] {
            let a = Ansatz::new(p, fp, vec![0.6, 0.8], t, 6.0).unwrap();
            assert!(phi_ode_residual(&a, &grid) < 1e-10);
        }
    }

    #[test]
    fn ansatz_decay_and_derivative() {
        let a = ansatz();
        for &t in &[0.0, 3.0, 50.0] {
            let ratio = a.amplitude(t) * (10.0 + t).sqrt();
            assert!((ratio - a.amplitude(0.0) * 10f64.sqrt()).abs() < 1e-14);
            let h = 1e-3;
            let fd = (-a.amplitude(t + 2.0 * h) + 8.0 * a.amplitude(t + h) - 8.0 * a.amplitude(t - h)
                + a.amplitude(t - 2.0 * h))
                / (12.0 * h);
            assert!((fd - a.phi_dot(t)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn ansatz_validation() {
        assert!(Ansatz::new(2, 1.0, vec![1.0], 10.0, 4.0).is_err());
        assert!(Ansatz::new(4, -1.0, vec![1.0], 10.0, 4.0).is_err());
        assert!(Ansatz::new(4, 1.0, vec![0.5], 10.0, 4.0).is_err());
    }

    #[test]
    fn monomial_weight() {
        let w = hessian_weights(|x: &[f64]| 0.7 * x[0].powi(4), &[1.0], 4, 4.0).unwrap();
        assert!((w.mu[0] - 6.0).abs() < 1e-8, "{:?}", w.mu);
        let w2 = hessian_weights(|x: &[f64]| 1.4 * x[0].powi(4), &[1.0], 4, 4.0).unwrap();
        assert!((w.mu[0] - w2.mu[0]).abs() < 1e-9);
        let w3 = hessian_weights(|x: &[f64]| x[0].powi(6), &[1.0], 6, 3.0).unwrap();
        assert!((w3.mu[0] - 2.0 * 1.0 * 5.0 / 4.0).abs() < 1e-7);
    }

    #[test]
    fn radial_polynomial_weights() {
        // F = |x|^4 on R²: radial weight 2(N−2)(p−1)/(p−2), tangential 2(N−2)/(p−2).
        let f = |x: &[f64]| (x[0] * x[0] + x[1] * x[1]).powi(2);
        let v = [0.6, 0.8];
        let w = hessian_weights(f, &v, 4, 4.0).unwrap();
        assert!((w.mu[0] - 2.0).abs() < 1e-8 && (w.mu[1] - 6.0).abs() < 1e-8, "{:?}", w.mu);
        let radial = &w.frame[1];
        assert!((radial[0].abs() - 0.6).abs() < 1e-8 && (radial[1].abs() - 0.8).abs() < 1e-8);
        assert!(w.reconstruction_error < 1e-8);
    }

    #[test]
    fn asymmetric_hessian_is_rejected() {
        // Not a function of x alone: the evaluation order leaks into the stencil.
        let calls = std::cell::Cell::new(0u64);
        let f = |x: &[f64]| {
            calls.set(calls.get() + 1);
            x[0].powi(4) + x[1].powi(4) + 1e-3 * (calls.get() % 7) as f64
        };
        assert!(matches!(hessian_weights(f, &[0.6, 0.8], 4, 4.0), Err(Error::AsymmetricHessian(_))));
    }

    #[test]
    fn homogeneous_fit_recovers_polynomial() {
        let truth = |x: &[f64]| 2.0 * x[0].powi(4) - 0.5 * x[0] * x[0] * x[1] * x[1] + 0.3 * x[1].powi(4);
        let dirs: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 9.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let vals: Vec<f64> = dirs.iter().map(|d| truth(d)).collect();
        let p = HomogeneousPolynomial::fit(2, 4, &dirs, &vals).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.5]] {
            assert!((p.eval(&x) - truth(&x)).abs() < 1e-10);
        }
        assert!(HomogeneousPolynomial::fit(2, 4, &dirs[..3], &vals[..3]).is_err());
    }

    #[test]
    fn kernel_ode_closed_forms() {
        let (big_n, t_shift) = (4.0, 10.0);
        let mu = [6.0];
        let a = mu[0] / (2.0 * (big_n - 2.0));
        let times = [0.0, 1.0, 5.0, 20.0, 100.0];
        for gamma in [0.4, 2.5] {
            let e = |t: f64| vec![(t_shift + t).powf(-1.0 - gamma)];
            let sol = solve_kernel_ode(e, &mu, gamma, big_n, t_shift, &times, QuadOptions::default(), Execution::Sequential)
                .unwrap();
            for (t, v) in times.iter().zip(&sol.series.values) {
                let b = t_shift + t;
                let exact = if gamma > a {
                    -1.0 / (2.0 * (big_n - 2.0)) / (gamma - a) * b.powf(-gamma)
                } else {
                    1.0 / (2.0 * (big_n - 2.0)) / (a - gamma) * (b.powf(-gamma) - t_shift.powf(a - gamma) * b.powf(-a))
                };
                assert!((v[0] - exact).abs() < 1e-8 * exact.abs().max(1e-3), "gamma={gamma} t={t}");
            }
        }
    }

    #[test]
    fn kernel_ode_zero_and_resonance() {
        let sol = solve_kernel_ode(|_| vec![0.0, 0.0], &[2.0, 6.0], 1.0, 4.0, 10.0, &[0.0, 3.0], QuadOptions::default(), Execution::Sequential)
            .unwrap();
        assert!(sol.series.values.iter().flatten().all(|v| *v == 0.0));
        let err = solve_kernel_ode(|_| vec![1.0], &[6.0], 1.5, 4.0, 10.0, &[0.0], QuadOptions::default(), Execution::Sequential);
        assert!(matches!(err, Err(Error::ResonantWeight { .. })));
    }

    #[test]
    fn kernel_ode_back_substitution() {
        let e = |t: f64| vec![(10.0 + t).powf(-2.2) * (3.0 * (10.0 + t).ln()).sin(), (10.0 + t).powf(-1.8) * (1.0 + 0.5 * (t / 7.0).cos())];
        let r = kernel_ode_residual(e, &[2.0, 6.0], 0.7, 4.0, 10.0, &[0.5, 4.0, 30.0]).unwrap();
        assert!(r < 1e-7, "residual {r}");
    }

    #[test]
    fn orthogonal_ode_resonant_duhamel() {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        let d = -circle_mode_eigenvalue(&spec, 1);
        let times = [0.0, 0.3, 1.0, 2.5];
        let sol =
            solve_orthogonal_ode(&spec, &[1], |t| vec![(-d * t).exp()], 10.0, &times, QuadOptions::default(), Execution::Sequential)
                .unwrap();
        for (t, v) in times.iter().zip(&sol.series.values) {
            assert!((v[0] - t * (-d * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_ode_growing_mode_and_kernel_rejection() {
        let spec = ManifoldSpec::new(4, 3.0, 32).unwrap();
        // Constant mode: u' = 6u + 1 has the bounded solution −1/6.
        let sol = solve_orthogonal_ode(&spec, &[0], |_| vec![1.0], 10.0, &[0.0, 2.0], QuadOptions::default(), Execution::Sequential)
            .unwrap();
        for v in &sol.series.values {
            assert!((v[0] + 1.0 / 6.0).abs() < 1e-10);
        }
        let crit = ManifoldSpec::critical(4, 32).unwrap();
        let err = solve_orthogonal_ode(&crit, &[1], |_| vec![1.0], 10.0, &[0.0], QuadOptions::default(), Execution::Sequential);
        assert!(matches!(err, Err(Error::KernelForcing { k: 1 })));
    }

    #[test]
    fn weighted_norms() {
        let times: Vec<f64> = (0..200).map(|i| 0.5 * i as f64).collect();
        let s = WeightedSeries::new(10.0, times.clone(), times.iter().map(|t| vec![3.0 * (10.0 + t).powf(-0.5)]).collect())
            .unwrap();
        let n = weighted_norm(&s, NormKind::SupGamma(0.5));
        assert!((n.value - 3.0).abs() < 1e-12 && !n.divergent);
        assert!(weighted_norm(&s, NormKind::SupGamma(0.7)).divergent);
        assert!(weighted_norm(&s, NormKind::SupGamma(0.3)).value < n.value);
        let with_d = weighted_norm(&s, NormKind::SupOneGamma(0.5));
        assert!(with_d.value > 3.0 && (with_d.value - 3.0 - 1.5).abs() < 0.05);
    }

    #[test]
    fn verdict_on_synthetic_run() {
        use crate::flow::{FlowSample, Termination};
        let samples: Vec<FlowSample> = (0..400)
            .map(|i| {
                let t = 1.03f64.powi(i) - 1.0;
                let d = (1.0 + t).powf(-0.5);
                FlowSample { t, l2_dist: d, c0_dist: d, r: 0.0, energy: 0.0, volume: 0.0, kernel_norm: d }
            })
            .collect();
        let run = FlowRun {
            samples,
            termination: Termination::ReachedEnd,
            accepted: 0,
            rejected: 0,
            max_energy_increase: 0.0,
            max_r_increase: 0.0,
            tol: 1e-8,
            final_u: vec![],
        };
        let v = slow_rate_verdict(&run, 4, FitWindow::default(), None).unwrap();
        assert!((v.ratio - 1.0).abs() < 1e-6);
        assert!((v.kernel_share_end - 1.0).abs() < 1e-12);
    }
}
