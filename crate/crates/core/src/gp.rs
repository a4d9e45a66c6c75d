//! Non-stationary Gaussian processes over horizon indices: the SE kernel
//! scaled by per-interval deviations, sampling, conditioning and marginals.
//!
//! Indices are absolute interval numbers; the deviation of index `h` is the
//! model's deviation for interval-of-day `h % intervals_per_day`.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_jittered, dot, solve_lower_in_place, Matrix};
use crate::randomness::RandomnessModel;

/// Diagonal entries below this are treated as round-off and clamped to zero.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-8;

pub fn se_kernel(hi: f64, hj: f64, sigma_se: f64, l_se: f64) -> f64 {
    let d = hi - hj;
    sigma_se * sigma_se * (-d * d / (2.0 * l_se * l_se)).exp()
}

/// Input locations of the process paired with their deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInputs {
    pub indices: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl KernelInputs {
    pub fn new(indices: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let k = KernelInputs { indices, sigmas };
        k.validate()?;
        Ok(k)
    }

    pub fn for_model(model: &RandomnessModel, indices: &[usize]) -> Result<Self> {
        let t = model.interval_sigma.len();
        if t == 0 {
            return Err(invalid("randomness model has no intervals"));
        }
        KernelInputs::new(
            indices.iter().map(|&h| h as f64).collect(),
            indices.iter().map(|&h| model.interval_sigma[h % t]).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.sigmas.len() {
            return Err(invalid("kernel inputs need one sigma per index"));
        }
        if self.sigmas.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("kernel sigmas must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `K_ij = σ_i σ_j k_SE(h_i, h_j)`.
pub fn nonstationary_cov(inputs: &KernelInputs, sigma_se: f64, l_se: f64) -> Result<Matrix> {
    inputs.validate()?;
    if !(l_se > 0.0) {
        return Err(invalid("length-scale must be positive"));
    }
    let n = inputs.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = inputs.sigmas[i] * inputs.sigmas[j] * se_kernel(inputs.indices[i], inputs.indices[j], sigma_se, l_se);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

fn cross_cov(a: &KernelInputs, b: &KernelInputs, sigma_se: f64, l_se: f64) -> Matrix {
    Matrix::from_fn(a.len(), b.len(), |i, j| {
        a.sigmas[i] * b.sigmas[j] * se_kernel(a.indices[i], b.indices[j], sigma_se, l_se)
    })
}

fn noise_var(model: &RandomnessModel, h: usize) -> f64 {
    let s = model.noise_sigma[h % model.noise_sigma.len()];
    s * s
}

fn kernel_between(model: &RandomnessModel, a: usize, b: usize) -> f64 {
    let t = model.interval_sigma.len();
    model.interval_sigma[a % t]
        * model.interval_sigma[b % t]
        * se_kernel(a as f64, b as f64, model.signal_sigma, model.length_scale)
}

/// One joint draw of the randomness over `window` from `N(0, K + diag(σ_ε²))`.
pub fn sample_randomness<R: Rng + ?Sized>(model: &RandomnessModel, window: &[usize], rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    let inputs = KernelInputs::for_model(model, window)?;
    let mut k = nonstationary_cov(&inputs, model.signal_sigma, model.length_scale)?;
    for (i, &h) in window.iter().enumerate() {
        let v = k.get(i, i) + noise_var(model, h);
        k.set(i, i, v);
    }
    let (l, _) = cholesky_jittered(&k)?;
    let z: Vec<f64> = (0..window.len()).map(|_| StandardNormal.sample(rng)).collect();
    Ok((0..window.len()).map(|i| dot(&l.row(i)[..=i], &z[..=i])).collect())
}

/// Gaussian belief over the latent randomness at a set of query indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBelief {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl PosteriorBelief {
    /// Mean and standard deviation at position `t` of the query.
    pub fn marginal(&self, t: usize) -> Result<(f64, f64)> {
        if t >= self.mean.len() {
            return Err(Error::OutOfRange(alloc::format!("query position {t} of {}", self.mean.len())));
        }
        Ok((self.mean[t], clamp_variance(self.cov.get(t, t))?.sqrt()))
    }

    pub fn marginals(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mu = Vec::with_capacity(self.mean.len());
        let mut sd = Vec::with_capacity(self.mean.len());
        for t in 0..self.mean.len() {
            let (m, s) = self.marginal(t)?;
            mu.push(m);
            sd.push(s);
        }
        Ok((mu, sd))
    }
}

pub fn marginal(belief: &PosteriorBelief, t: usize) -> Result<(f64, f64)> {
    belief.marginal(t)
}

fn clamp_variance(v: f64) -> Result<f64> {
    if v < -NEGATIVE_VARIANCE_TOL || !v.is_finite() {
        return Err(Error::Degenerate(alloc::format!("negative posterior variance {v:.3e}")));
    }
    Ok(v.max(0.0))
}

/// Belief over the latent process at `query` given noisy observations.
/// Uses a Cholesky factor of `K_oo + σ_ε² I`, never an explicit inverse.
pub fn condition(model: &RandomnessModel, observed: &[usize], values: &[f64], query: &[usize]) -> Result<PosteriorBelief> {
    model.validate()?;
    if observed.len() != values.len() {
        return Err(invalid("one observed value per observed index"));
    }
    let q = KernelInputs::for_model(model, query)?;
    let k_qq = nonstationary_cov(&q, model.signal_sigma, model.length_scale)?;
    if observed.is_empty() {
        return Ok(PosteriorBelief { mean: vec![0.0; query.len()], cov: k_qq });
    }
    let o = KernelInputs::for_model(model, observed)?;
    let mut k_oo = nonstationary_cov(&o, model.signal_sigma, model.length_scale)?;
    for (i, &h) in observed.iter().enumerate() {
        let v = k_oo.get(i, i) + noise_var(model, h);
        k_oo.set(i, i, v);
    }
    let (l, _) = cholesky_jittered(&k_oo)?;
    let k_qo = cross_cov(&q, &o, model.signal_sigma, model.length_scale);

    let mut alpha = values.to_vec();
    solve_lower_in_place(&l, &mut alpha);
    // Rows of V = L⁻¹ K_oq, one per query index.
    let v: Vec<Vec<f64>> = (0..query.len())
        .map(|i| {
            let mut r = k_qo.row(i).to_vec();
            solve_lower_in_place(&l, &mut r);
            r
        })
        .collect();
    let mean = v.iter().map(|r| dot(r, &alpha)).collect();
    let mut cov = k_qq;
    for i in 0..query.len() {
        for j in 0..=i {
            let c = cov.get(i, j) - dot(&v[i], &v[j]);
            cov.set(i, j, c);
            cov.set(j, i, c);
        }
    }
    Ok(PosteriorBelief { mean, cov })
}

/// Community-level marginal from independent per-user marginals: means add,
/// variances add.
pub fn aggregate_marginals(parts: &[(f64, f64)]) -> (f64, f64) {
    let mu = parts.iter().map(|p| p.0).sum();
    let var: f64 = parts.iter().map(|p| p.1 * p.1).sum();
    (mu, var.sqrt())
}

/// Conditioning on a trailing window of observations, maintained with an
/// incrementally updated Cholesky factor so each new observation costs
/// O(w²) instead of a fresh O(w³) factorization.
#[derive(Debug, Clone)]
pub struct SlidingGp {
    model: RandomnessModel,
    window: usize,
    indices: VecDeque<usize>,
    values: VecDeque<f64>,
    /// Lower factor of `K_oo + σ_ε² I`, row stride `window`.
    l: Vec<f64>,
    since_refactor: usize,
}

impl SlidingGp {
    pub fn new(model: RandomnessModel, window: usize) -> Result<Self> {
        model.validate()?;
        if window == 0 {
            return Err(invalid("conditioning window must hold at least one observation"));
        }
        Ok(SlidingGp {
            model,
            window,
            indices: VecDeque::with_capacity(window),
            values: VecDeque::with_capacity(window),
            l: vec![0.0; window * window],
            since_refactor: 0,
        })
    }

    pub fn model(&self) -> &RandomnessModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn observed(&self) -> (Vec<usize>, Vec<f64>) {
        (self.indices.iter().copied().collect(), self.values.iter().copied().collect())
    }

    fn obs_cov(&self, a: usize, b: usize) -> f64 {
        let k = kernel_between(&self.model, a, b);
        if a == b {
            k + noise_var(&self.model, a)
        } else {
            k
        }
    }

    fn forward(&self, b: &mut [f64]) {
        let w = self.window;
        for i in 0..b.len() {
            let s = dot(&self.l[i * w..i * w + i], &b[..i]);
            b[i] = (b[i] - s) / self.l[i * w + i];
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.len();
        let idx: Vec<usize> = self.indices.iter().copied().collect();
        let a = Matrix::from_fn(n, n, |i, j| self.obs_cov(idx[i], idx[j]));
        let (l, _) = cholesky_jittered(&a)?;
        let w = self.window;
        for i in 0..n {
            self.l[i * w..i * w + i + 1].copy_from_slice(&l.row(i)[..=i]);
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pop_front(&mut self) {
        let n = self.len();
        let w = self.window;
        self.indices.pop_front();
        self.values.pop_front();
        // Dropping the first variable leaves L22 L22ᵀ + l21 l21ᵀ.
        let mut x: Vec<f64> = (1..n).map(|i| self.l[i * w]).collect();
        for i in 1..n {
            for j in 1..=i {
                self.l[(i - 1) * w + j - 1] = self.l[i * w + j];
            }
        }
        let m = n - 1;
        for k in 0..m {
            let lkk = self.l[k * w + k];
            let r = (lkk * lkk + x[k] * x[k]).sqrt();
            let c = r / lkk;
            let s = x[k] / lkk;
            self.l[k * w + k] = r;
            for i in k + 1..m {
                let lik = (self.l[i * w + k] + s * x[i]) / c;
                self.l[i * w + k] = lik;
                x[i] = c * x[i] - s * lik;
            }
        }
    }

    /// Adds an observation, discarding the oldest one once the window is full.
    pub fn push(&mut self, h: usize, value: f64) -> Result<()> {
        if self.len() == self.window {
            self.pop_front();
        }
        let n = self.len();
        let mut k: Vec<f64> = self.indices.iter().map(|&o| self.obs_cov(h, o)).collect();
        self.forward(&mut k);
        let d = self.obs_cov(h, h) - dot(&k, &k);
        self.indices.push_back(h);
        self.values.push_back(value);
        self.since_refactor += 1;
        if !(d > 1e-12 * self.obs_cov(h, h)) || self.since_refactor >= self.window {
            return self.refactor();
        }
        let w = self.window;
        self.l[n * w..n * w + n].copy_from_slice(&k);
        self.l[n * w + n] = d.sqrt();
        Ok(())
    }

    fn query_rows(&self, query: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut alpha: Vec<f64> = self.values.iter().copied().collect();
        self.forward(&mut alpha);
        let v = query
            .iter()
            .map(|&q| {
                let mut r: Vec<f64> = self.indices.iter().map(|&o| kernel_between(&self.model, q, o)).collect();
                self.forward(&mut r);
                r
            })
            .collect();
        (v, alpha)
    }

    /// Posterior means and standard deviations of the latent process at
    /// each query index.
    pub fn marginals(&self, query: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (v, alpha) = self.query_rows(query);
        let mut mu = Vec::with_capacity(query.len());
        let mut sd = Vec::with_capacity(query.len());
        for (r, &q) in v.iter().zip(query) {
            mu.push(dot(r, &alpha));
            sd.push(clamp_variance(kernel_between(&self.model, q, q) - dot(r, r))?.sqrt());
        }
        Ok((mu, sd))
    }

    /// Full posterior belief at the query indices.
    pub fn belief(&self, query: &[usize]) -> Result<PosteriorBelief> {
        let (v, alpha) = self.query_rows(query);
        let mean = v.iter().map(|r| dot(r, &alpha)).collect();
        let cov = Matrix::from_fn(query.len(), query.len(), |i, j| {
            kernel_between(&self.model, query[i], query[j]) - dot(&v[i], &v[j])
        });
        Ok(PosteriorBelief { mean, cov })
    }

    /// Draws the noisy randomness at `h` conditional on the window, then
    /// records it as an observation.
    pub fn draw_next<R: Rng + ?Sized>(&mut self, h: usize, rng: &mut R) -> Result<f64> {
        let (mu, sd) = self.marginals(&[h])?;
        let var = sd[0] * sd[0] + noise_var(&self.model, h);
        let z: f64 = StandardNormal.sample(rng);
        let value = mu[0] + var.sqrt() * z;
        self.push(h, value)?;
        Ok(value)
    }
}
