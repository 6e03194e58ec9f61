//! Gaussian process posterior with constant prior mean, plus closed-form
//! maximum-likelihood estimates for the mean and signal variance and an
//! exhaustive leave-one-out search for the length-scale.
//!
//! Observations are treated as noise-free; the jitter added to the Gram
//! matrix diagonal is purely numerical and is escalated by factors of ten
//! until the factorization succeeds or a cap is reached.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::data::Dataset;
use crate::kernels::KernelConfig;

/// Relative scale of the initial numerical jitter.
pub const DEFAULT_JITTER_REL: f64 = 1e-8;
/// Jitter is escalated by factors of ten up to this multiple of the start.
const JITTER_ESCALATIONS: u32 = 6;
/// Floor returned by [`ml_signal_variance`] for degenerate (zero-residual) data.
pub const SIGNAL_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("Gram matrix not positive definite after jitter escalation up to {max_jitter:e}")]
    FactorizationFailure { max_jitter: f64 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("every length-scale candidate failed to factorize")]
    AllCandidatesFailed,
    #[error("empty dataset")]
    EmptyDataset,
}

/// How a [`HyperEstimate`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMethod {
    MaxLikelihood,
    LooCv,
    Fixed,
}

/// A set of SE-kernel hyperparameters with the constant prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperEstimate {
    pub c_mu: f64,
    pub sigma_f_sq: f64,
    pub length_scale: f64,
    pub method: EstimationMethod,
}

/// Fitted GP posterior: dataset, kernel, prior mean and the cached lower
/// triangular factor of `K + jitter I` together with the solve of
/// `(K + jitter I)^{-1} (y - c_mu)`.
///
/// Immutable after construction and safe to share across threads for
/// concurrent mean/variance queries.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    data: Dataset,
    kernel: KernelConfig,
    prior_mean: f64,
    factorization: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
    dim: usize,
}

/// Reference scale for the jitter: the kernel's signal variance when it has
/// one, otherwise the mean Gram diagonal (the quadratic kernel carries no
/// variance factor).
pub fn jitter_scale(kernel: &KernelConfig, data: &Dataset) -> f64 {
    match kernel.sigma_f_sq() {
        Some(s2) => s2,
        None => {
            if data.is_empty() {
                1.0
            } else {
                let mean_diag: f64 = data
                    .points()
                    .iter()
                    .map(|x| kernel.evaluate(x, x))
                    .sum::<f64>()
                    / data.len() as f64;
                mean_diag.max(f64::MIN_POSITIVE)
            }
        }
    }
}

fn gram(data: &Dataset, kernel: &KernelConfig) -> DMatrix<f64> {
    let n = data.len();
    DMatrix::from_fn(n, n, |i, j| kernel.evaluate(data.point(i), data.point(j)))
}

/// Factorizes `K + jitter I`, escalating the jitter by tens when the
/// factorization fails.
fn factorize(gram: &DMatrix<f64>, initial_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let mut jitter = initial_jitter;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut k = gram.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    Err(GpError::FactorizationFailure { max_jitter: jitter / 10.0 })
}

/// Fits the posterior for `data` under `kernel` with prior mean `c_mu`,
/// starting from the given numerical jitter.
pub fn fit_posterior(
    data: &Dataset,
    kernel: KernelConfig,
    c_mu: f64,
    jitter: f64,
) -> Result<GpPosterior, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    assert!(jitter > 0.0, "jitter must be positive");
    let k = gram(data, &kernel);
    let (factorization, jitter) = factorize(&k, jitter)?;
    let residual = DVector::from_fn(data.len(), |i, _| data.value(i) - c_mu);
    let alpha = factorization.solve(&residual);
    Ok(GpPosterior {
        dim: data.dim(),
        data: data.clone(),
        kernel,
        prior_mean: c_mu,
        factorization: Some(factorization),
        alpha,
        jitter,
    })
}

/// Fits with the default jitter policy (`1e-8` times the kernel scale).
pub fn fit_posterior_default(data: &Dataset, kernel: KernelConfig, c_mu: f64) -> Result<GpPosterior, GpError> {
    let jitter = DEFAULT_JITTER_REL * jitter_scale(&kernel, data);
    fit_posterior(data, kernel, c_mu, jitter)
}

impl GpPosterior {
    /// Data-free posterior: mean is the prior mean and variance the prior
    /// kernel diagonal. Used when a partition leaves a sub-model empty.
    pub fn prior(dim: usize, kernel: KernelConfig, c_mu: f64) -> Self {
        Self {
            dim,
            data: Dataset::new(dim),
            kernel,
            prior_mean: c_mu,
            factorization: None,
            alpha: DVector::zeros(0),
            jitter: 0.0,
        }
    }

    /// Posterior mean and variance at `x`; the variance is clamped to
    /// `[0, inf)` after the floating-point subtraction.
    pub fn mean_var(&self, x: &DVector<f64>) -> (f64, f64) {
        debug_assert_eq!(x.len(), self.dim);
        let prior_var = self.kernel.evaluate(x, x);
        let Some(chol) = &self.factorization else {
            return (self.prior_mean, prior_var.max(0.0));
        };
        let k_vec = DVector::from_fn(self.data.len(), |i, _| self.kernel.evaluate(self.data.point(i), x));
        let mean = self.prior_mean + k_vec.dot(&self.alpha);
        // var = k(x,x) - k^T (K + jitter I)^{-1} k via one triangular solve.
        let w = chol.l_dirty().solve_lower_triangular(&k_vec).expect("factor is invertible");
        let var = (prior_var - w.norm_squared()).max(0.0);
        (mean, var)
    }

    pub fn mean(&self, x: &DVector<f64>) -> f64 {
        self.mean_var(x).0
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Jitter actually used after escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Closed-form maximum-likelihood constant prior mean
/// `(1^T K^{-1} y) / (1^T K^{-1} 1)` with the kernel fixed.
pub fn ml_constant_mean(data: &Dataset, kernel: &KernelConfig) -> Result<f64, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let k = gram(data, kernel);
    let (chol, _) = factorize(&k, DEFAULT_JITTER_REL * jitter_scale(kernel, data))?;
    let y = DVector::from_column_slice(data.values());
    let ones = DVector::from_element(data.len(), 1.0);
    let kinv_y = chol.solve(&y);
    let kinv_1 = chol.solve(&ones);
    let denom = ones.dot(&kinv_1);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(GpError::DegenerateData(format!("1^T K^-1 1 = {denom}")));
    }
    Ok(ones.dot(&kinv_y) / denom)
}

/// Profile-likelihood optimum of the signal variance,
/// `(y - c)^T R^{-1} (y - c) / N`, where `R` is the unit-variance kernel
/// matrix. Returns the floor `1e-12` when the residual collapses.
pub fn ml_signal_variance(
    data: &Dataset,
    correlation_kernel: &KernelConfig,
    c_mu: f64,
) -> Result<f64, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    debug_assert_eq!(correlation_kernel.sigma_f_sq().unwrap_or(1.0), 1.0, "kernel must have unit variance");
    let r = gram(data, correlation_kernel);
    let (chol, _) = factorize(&r, DEFAULT_JITTER_REL)?;
    let residual = DVector::from_fn(data.len(), |i, _| data.value(i) - c_mu);
    let rinv_res = chol.solve(&residual);
    let estimate = residual.dot(&rinv_res) / data.len() as f64;
    if !estimate.is_finite() {
        return Err(GpError::DegenerateData(format!("signal variance estimate {estimate}")));
    }
    Ok(estimate.max(SIGNAL_VARIANCE_FLOOR))
}

/// Sum of squared leave-one-out residuals for one candidate length-scale,
/// computed from the closed form `[K^{-1} z]_i / [K^{-1}]_{ii}` rather than
/// `N` refits. The prior mean is profiled out per candidate with
/// [`ml_constant_mean`].
fn loo_sse(data: &Dataset, length_scale: f64) -> Result<f64, GpError> {
    let kernel = KernelConfig::se(length_scale, 1.0);
    let c_mu = ml_constant_mean(data, &kernel)?;
    let k = gram(data, &kernel);
    let (chol, _) = factorize(&k, DEFAULT_JITTER_REL)?;
    let kinv = chol.inverse();
    let residual = DVector::from_fn(data.len(), |i, _| data.value(i) - c_mu);
    let kinv_res = &kinv * &residual;
    let mut sse = 0.0;
    for i in 0..data.len() {
        let dii = kinv[(i, i)];
        if dii <= 0.0 || !dii.is_finite() {
            return Err(GpError::DegenerateData(format!("[K^-1]_{i}{i} = {dii}")));
        }
        let e = kinv_res[i] / dii;
        sse += e * e;
    }
    Ok(sse)
}

/// Exhaustive leave-one-out cross-validation over the candidate
/// length-scales; ties break toward the larger candidate. Candidates whose
/// Gram matrix cannot be factorized are skipped.
pub fn loo_cv_length_scale(data: &Dataset, candidates: &[f64]) -> Result<f64, GpError> {
    assert!(data.len() >= 3, "LOO-CV needs at least 3 observations");
    assert!(!candidates.is_empty(), "candidate list must be non-empty");
    // Residual sums below this floor are indistinguishable from exact
    // interpolation; clamping them makes the tie rule reachable for
    // degenerate (e.g. constant) data despite rounding noise.
    let y_scale = data.values().iter().fold(0.0f64, |a, &y| a.max(y.abs()));
    let sse_floor = 1e-18 * (1.0 + y_scale * y_scale);

    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("candidates must not be NaN"));
    let mut best: Option<(f64, f64)> = None; // (sse, length_scale)
    for &l in &sorted {
        assert!(l > 0.0, "length-scale candidates must be positive");
        let sse = match loo_sse(data, l) {
            Ok(s) => {
                if s < sse_floor {
                    0.0
                } else {
                    s
                }
            }
            Err(GpError::FactorizationFailure { .. }) | Err(GpError::DegenerateData(_)) => continue,
            Err(e) => return Err(e),
        };
        // Ascending candidate order: replacing on <= prefers the larger
        // length-scale among exact ties.
        if best.map_or(true, |(b, _)| sse <= b) {
            best = Some((sse, l));
        }
    }
    best.map(|(_, l)| l).ok_or(GpError::AllCandidatesFailed)
}

/// Default candidate grid: 25 log-spaced length-scales from the lower bound
/// for (`d`, `n`) up to 2.0.
pub fn default_length_scale_grid(d: usize, n: usize, min_correlation: f64) -> Vec<f64> {
    let lo = crate::lengthscale::length_scale_lower_bound(d, n.max(1), min_correlation)
        .expect("min_correlation validated by caller")
        .min(1.9);
    let hi: f64 = 2.0;
    let count = 25;
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}
