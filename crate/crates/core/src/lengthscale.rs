//! Acquisition-driven length-scale cool down and its dimension-aware lower
//! bound.
//!
//! Instead of picking the length-scale by likelihood on the data seen so far,
//! the controller compares the best achievable acquisition value under the
//! current length-scale with the best value under a halved candidate. When
//! the candidate promises substantially more acquisition (ratio above a
//! threshold), the length-scale is reduced; otherwise it is kept. The
//! candidate is floored by a bound derived from a best-case space-filling
//! design: the smallest length-scale that still keeps a minimum correlation
//! between neighboring design points, transferred to higher dimensions by
//! matching sphere volumes.

use serde::Deserialize;
use statrs::function::gamma::gamma;
use thiserror::Error;

/// Reference magnitude below which an acquisition optimum is treated as zero
/// when forming the cool-down ratio.
const ALPHA_EPS: f64 = 1e-12;

/// Raised when a minimum-correlation parameter is outside (0, 1).
#[derive(Debug, Clone, Copy, Error)]
#[error("minimum correlation must lie in (0, 1), got {0}")]
pub struct InvalidCorrelation(pub f64);

#[derive(Debug, Error)]
pub enum CoolDownError<E> {
    #[error(transparent)]
    InvalidCorrelation(#[from] InvalidCorrelation),
    #[error("acquisition minimization failed: {0}")]
    AlphaStar(E),
}

/// Static cool-down parameters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct CoolDownConfig {
    /// Minimum correlation two neighboring best-case design points must keep.
    pub min_correlation: f64,
    /// Ratio threshold above which the candidate length-scale is adopted.
    pub alpha_ratio_threshold: f64,
    /// Recompute the reference acquisition optimum on the current data
    /// instead of reusing the previous iteration's value.
    pub recompute_reference: bool,
    /// Length-scale used before any reduction.
    pub initial_length_scale: f64,
    /// Constant floor guarding the n -> infinity limit of the bound.
    pub absolute_floor: f64,
}

impl Default for CoolDownConfig {
    fn default() -> Self {
        Self {
            min_correlation: 0.2,
            alpha_ratio_threshold: 1.5,
            recompute_reference: false,
            initial_length_scale: 1.0,
            absolute_floor: 1e-3,
        }
    }
}

/// Mutable controller state carried across iterations.
#[derive(Debug, Clone)]
pub struct CoolDownState {
    pub current_length_scale: f64,
    /// Optimal acquisition value from the previous iteration's minimization;
    /// `None` before the first decision.
    pub previous_alpha_star: Option<f64>,
    pub config: CoolDownConfig,
}

impl CoolDownState {
    pub fn new(config: CoolDownConfig) -> Self {
        assert!(config.initial_length_scale > 0.0);
        Self { current_length_scale: config.initial_length_scale, previous_alpha_star: None, config }
    }
}

/// Outcome of one cool-down decision.
#[derive(Debug, Clone, PartialEq)]
pub struct CoolDownDecision {
    pub new_length_scale: f64,
    pub alpha_ratio: f64,
    pub reduced: bool,
    /// Candidate length-scale `max(l/2, lower_bound)` that was evaluated.
    pub candidate: f64,
    pub lower_bound: f64,
}

/// Volume of the `d`-dimensional ball of radius `r`.
pub fn sphere_volume(d: usize, r: f64) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    assert!(r >= 0.0);
    std::f64::consts::PI.powf(d as f64 / 2.0) * r.powi(d as i32) / gamma(d as f64 / 2.0 + 1.0)
}

/// Distance `delta_{d,n}` whose `d`-ball matches the volume of the 1D
/// best-case minimum distance `1/n`; exactly `1/n` for `d = 1`.
pub fn equivalent_min_distance(d: usize, n: usize) -> f64 {
    assert!(d >= 1 && n >= 1);
    if d == 1 {
        return 1.0 / n as f64;
    }
    let target = sphere_volume(1, 1.0 / n as f64);
    let df = d as f64;
    (target * gamma(df / 2.0 + 1.0) / std::f64::consts::PI.powf(df / 2.0)).powf(1.0 / df)
}

/// Length-scale lower bound for `n` samples in dimension `d` at minimum
/// correlation `min_correlation`.
///
/// Strictly decreasing in `n` for fixed `d`.
pub fn length_scale_lower_bound(d: usize, n: usize, min_correlation: f64) -> Result<f64, InvalidCorrelation> {
    assert!(d >= 1 && n >= 1);
    if !(min_correlation > 0.0 && min_correlation < 1.0) {
        return Err(InvalidCorrelation(min_correlation));
    }
    let df = d as f64;
    let front = (-1.0 / (2.0 * min_correlation.ln())).sqrt();
    let inner = gamma(df / 2.0 + 1.0) / gamma(1.5)
        * std::f64::consts::PI.powf(0.5 * (1.0 - df))
        * (1.0 / n as f64);
    Ok(front * inner.powf(1.0 / df))
}

/// One alpha-ratio cool-down decision.
///
/// `alpha_star` evaluates the optimal (most negative) acquisition value for a
/// given length-scale on the current data. It is called for the candidate
/// and, when the stored reference is missing or `recompute_reference` is set,
/// for the current length-scale as well. The caller applies the decision by
/// storing `new_length_scale` back into its state.
///
/// When the candidate equals the current length-scale (bound already
/// binding), the ratio is still evaluated for the trace but the decision is a
/// no-op. A reference optimum of (near) zero means the previous model saw no
/// improvement anywhere: any candidate improvement then forces a reduction,
/// and a zero candidate keeps the length-scale.
pub fn ar_cool_down<E>(
    state: &CoolDownState,
    d: usize,
    n: usize,
    mut alpha_star: impl FnMut(f64) -> Result<f64, E>,
) -> Result<CoolDownDecision, CoolDownError<E>> {
    let cfg = &state.config;
    let bound = length_scale_lower_bound(d, n, cfg.min_correlation)?;
    let lower_bound = bound.max(cfg.absolute_floor);
    let current = state.current_length_scale;
    // Never raise the length-scale: a bound above the current value (possible
    // only when the configured initial length-scale starts below the bound)
    // degenerates to a no-op.
    let candidate = (current / 2.0).max(lower_bound).min(current);

    let reference = match (cfg.recompute_reference, state.previous_alpha_star) {
        (false, Some(a)) => a,
        _ => alpha_star(current).map_err(CoolDownError::AlphaStar)?,
    };
    let candidate_alpha = alpha_star(candidate).map_err(CoolDownError::AlphaStar)?;

    let alpha_ratio = if reference.abs() < ALPHA_EPS {
        if candidate_alpha.abs() > ALPHA_EPS {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        candidate_alpha / reference
    };

    let reduced = candidate < current && alpha_ratio > cfg.alpha_ratio_threshold;
    let new_length_scale = if reduced { candidate } else { current };
    Ok(CoolDownDecision { new_length_scale, alpha_ratio, reduced, candidate, lower_bound })
}
