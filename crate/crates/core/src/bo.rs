//! The optimization loop: Latin hypercube initialization, per-iteration model
//! adaptation (length-scale control, region identification, maximum
//! likelihood estimates), acquisition minimization and querying.
//!
//! A run is sequential by nature; independent runs with different seeds share
//! no mutable state and parallelize trivially.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::acquisition::{minimize_acquisition, minimize_acquisition_mgl, AcquisitionResult, SearchBudget};
use crate::data::{DataError, Dataset};
use crate::gp::{
    default_length_scale_grid, fit_posterior_default, loo_cv_length_scale, ml_constant_mean,
    ml_signal_variance, GpError, GpPosterior, HyperEstimate, SIGNAL_VARIANCE_FLOOR,
};
use crate::kernels::{region_membership, KernelConfig, Region};
use crate::lengthscale::{ar_cool_down, CoolDownConfig, CoolDownError, CoolDownState};
use crate::regions::{identify_regions, LmriConfig};

/// Two queries closer than this are treated as duplicates and the runner-up
/// probe is used instead, which keeps the Gram matrix invertible.
const DUPLICATE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BoError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective returned a non-finite value at iteration {iteration}")]
    ObjectiveFailure {
        iteration: usize,
        point: DVector<f64>,
        /// Trace of everything completed before the failure.
        partial: Box<RunTrace>,
    },
}

impl<E: Into<BoError>> From<CoolDownError<E>> for BoError {
    fn from(e: CoolDownError<E>) -> Self {
        match e {
            CoolDownError::InvalidCorrelation(c) => BoError::InvalidConfig(c.to_string()),
            CoolDownError::AlphaStar(inner) => inner.into(),
        }
    }
}

/// Surrogate-model regime for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Squared exponential with hyperparameters fixed up front.
    SeFixed,
    /// Squared exponential, length-scale by leave-one-out cross validation.
    SeLoocv,
    /// Squared exponential, length-scale by alpha-ratio cool down.
    SeAr,
    /// MGL kernel: cool down plus local region detection.
    MglAr,
}

impl KernelMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SeFixed => "se_fixed",
            Self::SeLoocv => "se_loocv",
            Self::SeAr => "se_ar",
            Self::MglAr => "mgl_ar",
        }
    }
}

impl std::str::FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "se_fixed" => Ok(Self::SeFixed),
            "se_loocv" => Ok(Self::SeLoocv),
            "se_ar" => Ok(Self::SeAr),
            "mgl_ar" => Ok(Self::MglAr),
            other => Err(format!("unknown kernel mode `{other}`")),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inner-search sizing (seedless; the loop assigns per-call seeds).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub candidates_per_dim: usize,
    pub refine_top: usize,
    pub refine_iters: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let b = SearchBudget::default();
        Self { candidates_per_dim: b.candidates_per_dim, refine_top: b.refine_top, refine_iters: b.refine_iters }
    }
}

impl SearchConfig {
    fn budget(&self, seed: u64) -> SearchBudget {
        SearchBudget {
            candidates_per_dim: self.candidates_per_dim,
            refine_top: self.refine_top,
            refine_iters: self.refine_iters,
            seed,
        }
    }
}

/// Configuration of a single optimization run.
#[derive(Debug, Clone)]
pub struct BoConfig {
    pub max_iterations: usize,
    pub initial_design_size: usize,
    pub seed: u64,
    pub kernel_mode: KernelMode,
    pub cool_down: CoolDownConfig,
    pub lmri: LmriConfig,
    /// Signal variance divisor applied when at least one region is detected.
    pub variance_downscale: f64,
    pub search: SearchConfig,
    /// Hyperparameters for [`KernelMode::SeFixed`]; ignored otherwise.
    pub fixed_hyper: Option<HyperEstimate>,
    /// Allows switching region detection off entirely (MGL then degenerates
    /// to the cooled-down squared exponential).
    pub detect_regions: bool,
    /// True optimum of the objective, for regret reporting.
    pub known_optimum: Option<f64>,
}

impl BoConfig {
    pub fn new(kernel_mode: KernelMode, max_iterations: usize, seed: u64) -> Self {
        Self {
            max_iterations,
            initial_design_size: 3,
            seed,
            kernel_mode,
            cool_down: CoolDownConfig::default(),
            lmri: LmriConfig::default(),
            variance_downscale: 100.0,
            search: SearchConfig::default(),
            fixed_hyper: None,
            detect_regions: true,
            known_optimum: None,
        }
    }

    fn validate(&self) -> Result<(), BoError> {
        if self.max_iterations < 1 {
            return Err(BoError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.initial_design_size < 1 {
            return Err(BoError::InvalidConfig("initial_design_size must be at least 1".into()));
        }
        let c = self.cool_down.min_correlation;
        if !(c > 0.0 && c < 1.0) {
            return Err(BoError::InvalidConfig(format!("min_correlation {c} outside (0, 1)")));
        }
        if self.cool_down.alpha_ratio_threshold <= 1.0 {
            return Err(BoError::InvalidConfig("alpha_ratio_threshold must exceed 1".into()));
        }
        if self.variance_downscale <= 0.0 {
            return Err(BoError::InvalidConfig("variance_downscale must be positive".into()));
        }
        if self.kernel_mode == KernelMode::SeFixed && self.fixed_hyper.is_none() {
            return Err(BoError::InvalidConfig("se_fixed mode needs fixed_hyper".into()));
        }
        Ok(())
    }
}

/// One row of a run trace. `alpha_ratio` is `NaN` on rows without a cool-down
/// decision (initial design, non-AR modes) and `immediate_regret` is `NaN`
/// when no known optimum was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 for initial-design rows, then 1..=N.
    pub iteration: usize,
    pub point: DVector<f64>,
    pub value: f64,
    pub best_so_far: f64,
    pub immediate_regret: f64,
    pub length_scale: f64,
    pub alpha_ratio: f64,
    pub region_count: usize,
    pub reduced: bool,
}

/// Full record of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub dim: usize,
    pub records: Vec<IterationRecord>,
    pub best_point: DVector<f64>,
    pub best_value: f64,
}

impl RunTrace {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.immediate_regret)
    }
}

/// `n` points in `[0, 1]^d` by Latin hypercube sampling: per dimension the
/// points occupy the `n` strata `[j/n, (j+1)/n)` in a shuffled order.
/// Deterministic per seed.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<DVector<f64>> {
    assert!(n >= 1 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        strata.push(order);
    }
    (0..n)
        .map(|i| {
            DVector::from_fn(d, |j, _| {
                let u: f64 = rng.gen();
                (strata[j][i] as f64 + u) / n as f64
            })
        })
        .collect()
}

/// The adapted surrogate for one iteration.
#[derive(Debug)]
pub struct AdaptedModel {
    pub kernel: KernelConfig,
    /// Posterior over the exterior samples (all samples for SE modes).
    pub global: GpPosterior,
    /// One quadratic-kernel posterior per detected region.
    pub region_gps: Vec<(Region, GpPosterior)>,
    pub length_scale: f64,
    pub alpha_ratio: f64,
    pub reduced: bool,
}

/// Fallback hyperparameters when a partition leaves no exterior samples:
/// plain mean and variance of the values.
fn moment_estimates(data: &Dataset) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.values().iter().sum::<f64>() / n;
    let var = data.values().iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    (mean, var.max(SIGNAL_VARIANCE_FLOOR))
}

/// Performs the per-iteration model adaptation.
///
/// Order: length-scale decision first (on the region-free squared-exponential
/// model of the full data), then region identification, then maximum
/// likelihood mean and signal variance on the resulting partition. When at
/// least one region is detected the signal variance is divided by
/// `variance_downscale` to keep the stationary part on the scale of the
/// quadratic part.
pub fn adapt_model(
    data: &Dataset,
    cfg: &BoConfig,
    state: &mut CoolDownState,
    rng: &mut ChaCha8Rng,
) -> Result<AdaptedModel, BoError> {
    let d = data.dim();
    let n = data.len();
    let best = data.min_value().expect("initial design is non-empty");

    // (1) Length-scale.
    let mut alpha_ratio = f64::NAN;
    let mut reduced = false;
    let length_scale = match cfg.kernel_mode {
        KernelMode::SeFixed => cfg.fixed_hyper.as_ref().expect("validated").length_scale,
        KernelMode::SeLoocv => {
            let grid = default_length_scale_grid(d, n, cfg.cool_down.min_correlation);
            loo_cv_length_scale(data, &grid)?
        }
        KernelMode::SeAr | KernelMode::MglAr => {
            // The ratio compares length-scales under one fixed GP: mean and
            // signal variance are estimated once at the current length-scale
            // and shared by both branches, so the decision isolates the
            // length-scale effect. The remaining parameters are re-adapted
            // below once the decision is made.
            let current_l = state.current_length_scale;
            let unit = KernelConfig::se(current_l, 1.0);
            let c_mu = ml_constant_mean(data, &unit)?;
            let s2 = ml_signal_variance(data, &unit, c_mu)?;
            let decision = ar_cool_down(state, d, n, |l| -> Result<f64, BoError> {
                let gp = fit_posterior_default(data, KernelConfig::se(l, s2), c_mu)?;
                let budget = cfg.search.budget(rng.next_u64());
                Ok(minimize_acquisition(&gp, best, &budget).value)
            })?;
            state.current_length_scale = decision.new_length_scale;
            alpha_ratio = decision.alpha_ratio;
            reduced = decision.reduced;
            decision.new_length_scale
        }
    };

    // (2) Regions.
    let regions = if cfg.kernel_mode == KernelMode::MglAr && cfg.detect_regions {
        identify_regions(data, &cfg.lmri)
    } else {
        Vec::new()
    };

    // (3) Partition and estimate.
    let mut exterior_indices = Vec::new();
    let mut member_lists: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    for i in 0..n {
        match region_membership(data.point(i), &regions) {
            Some(r) => member_lists[r].push(i),
            None => exterior_indices.push(i),
        }
    }
    let exterior = data.subset(&exterior_indices);

    let (c_mu, mut sigma_f_sq) = match cfg.kernel_mode {
        KernelMode::SeFixed => {
            let h = cfg.fixed_hyper.as_ref().expect("validated");
            (h.c_mu, h.sigma_f_sq)
        }
        _ => {
            if exterior.is_empty() {
                moment_estimates(data)
            } else {
                let unit = KernelConfig::se(length_scale, 1.0);
                let c = ml_constant_mean(&exterior, &unit)?;
                let s2 = ml_signal_variance(&exterior, &unit, c)?;
                (c, s2)
            }
        }
    };
    if !regions.is_empty() {
        sigma_f_sq /= cfg.variance_downscale;
    }

    // (4) Sub-models. The zero cross-covariance between regions and exterior
    // makes fitting them separately exact, not an approximation.
    let se = KernelConfig::se(length_scale, sigma_f_sq);
    let global = if exterior.is_empty() {
        GpPosterior::prior(d, se.clone(), c_mu)
    } else {
        fit_posterior_default(&exterior, se.clone(), c_mu)?
    };
    let mut region_gps = Vec::with_capacity(regions.len());
    for (r, members) in regions.iter().zip(&member_lists) {
        let sub = data.subset(members);
        let gp = if sub.is_empty() {
            GpPosterior::prior(d, KernelConfig::Quadratic, c_mu)
        } else {
            fit_posterior_default(&sub, KernelConfig::Quadratic, c_mu)?
        };
        region_gps.push((r.clone(), gp));
    }

    let kernel = if regions.is_empty() {
        se
    } else {
        KernelConfig::mgl(length_scale, sigma_f_sq, regions)
    };
    Ok(AdaptedModel { kernel, global, region_gps, length_scale, alpha_ratio, reduced })
}

/// Runs the optimization loop on an objective defined over `[0, 1]^dim`.
///
/// Deterministic for a fixed config and seed. The returned trace has one
/// record per initial-design point (iteration 0) and one per iteration.
pub fn run_bo(objective: &dyn Fn(&DVector<f64>) -> f64, dim: usize, cfg: &BoConfig) -> Result<RunTrace, BoError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lhs_seed = rng.next_u64();

    let mut data = Dataset::new(dim);
    let mut records: Vec<IterationRecord> = Vec::new();
    let initial_l = match cfg.kernel_mode {
        KernelMode::SeFixed => cfg.fixed_hyper.as_ref().map_or(1.0, |h| h.length_scale),
        _ => cfg.cool_down.initial_length_scale,
    };
    let regret = |best: f64| cfg.known_optimum.map_or(f64::NAN, |o| best - o);

    let mut best_so_far = f64::INFINITY;
    for point in latin_hypercube(cfg.initial_design_size, dim, lhs_seed) {
        let value = objective(&point);
        if !value.is_finite() {
            return Err(BoError::ObjectiveFailure {
                iteration: 0,
                point,
                partial: Box::new(finish_trace(dim, records, &data)),
            });
        }
        best_so_far = best_so_far.min(value);
        data.push(point.clone(), value)?;
        records.push(IterationRecord {
            iteration: 0,
            point,
            value,
            best_so_far,
            immediate_regret: regret(best_so_far),
            length_scale: initial_l,
            alpha_ratio: f64::NAN,
            region_count: 0,
            reduced: false,
        });
    }

    let mut state = CoolDownState::new(cfg.cool_down.clone());

    for iteration in 1..=cfg.max_iterations {
        let model = adapt_model(&data, cfg, &mut state, &mut rng)?;
        let budget = cfg.search.budget(rng.next_u64());
        let result = minimize_acquisition_mgl(&model.global, &model.region_gps, best_so_far, &budget);
        let point = dedupe_query(&result, &data, dim, &mut rng);

        let value = objective(&point);
        if !value.is_finite() {
            return Err(BoError::ObjectiveFailure {
                iteration,
                point,
                partial: Box::new(finish_trace(dim, records, &data)),
            });
        }
        state.previous_alpha_star = Some(result.value);
        best_so_far = best_so_far.min(value);
        data.push(point.clone(), value)?;
        records.push(IterationRecord {
            iteration,
            point,
            value,
            best_so_far,
            immediate_regret: regret(best_so_far),
            length_scale: model.length_scale,
            alpha_ratio: model.alpha_ratio,
            region_count: model.region_gps.len(),
            reduced: model.reduced,
        });
    }

    Ok(finish_trace(dim, records, &data))
}

/// Falls back to the best non-duplicate probe (or a random point) when the
/// chosen minimizer collides with an existing sample.
fn dedupe_query(
    result: &AcquisitionResult,
    data: &Dataset,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    if data.nearest_distance(&result.minimizer) >= DUPLICATE_DISTANCE {
        return result.minimizer.clone();
    }
    for (probe, _) in &result.ranked_probes {
        if data.nearest_distance(probe) >= DUPLICATE_DISTANCE {
            return probe.clone();
        }
    }
    loop {
        let x = DVector::from_fn(dim, |_, _| rng.gen::<f64>());
        if data.nearest_distance(&x) >= DUPLICATE_DISTANCE {
            return x;
        }
    }
}

fn finish_trace(dim: usize, records: Vec<IterationRecord>, data: &Dataset) -> RunTrace {
    let (best_point, best_value) = match data.argmin() {
        Some(i) => (data.point(i).clone(), data.value(i)),
        None => (DVector::zeros(dim), f64::NAN),
    };
    RunTrace { dim, records, best_point, best_value }
}
