//! Expected improvement acquisition and its inner minimization over the unit
//! hypercube.
//!
//! The acquisition is defined negative (expected value of `min(f - f*, 0)`
//! under the posterior) and minimized. The inner optimizer is multi-start:
//! a low-discrepancy candidate sweep followed by bounded simplex descent from
//! the best candidates. With the MGL kernel the minimization decouples into
//! one sub-problem on the global model over the full hypercube plus one
//! ball-constrained sub-problem per region; the overall argmin wins, with
//! ties broken toward the lowest region index and the global branch last.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::gp::GpPosterior;
use crate::kernels::Region;
use crate::simplex::nelder_mead;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Inner-search budget. All randomness is drawn from `seed`, so results are
/// bit-reproducible for a fixed budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    /// Space-filling candidates per dimension (total = `candidates_per_dim * d`).
    pub candidates_per_dim: usize,
    /// Number of top candidates refined by simplex descent.
    pub refine_top: usize,
    /// Simplex descent iterations per refinement.
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { candidates_per_dim: 250, refine_top: 5, refine_iters: 100, seed: 0 }
    }
}

/// Result of an acquisition minimization.
#[derive(Debug, Clone)]
pub struct AcquisitionResult {
    pub minimizer: DVector<f64>,
    /// Acquisition value at `minimizer`; never positive.
    pub value: f64,
    /// Local refinements performed.
    pub restarts_used: usize,
    /// Per-region `(region index, minimizer, value)` for the decoupled
    /// search; `None` for a plain single-model search.
    pub per_region_values: Option<Vec<(usize, DVector<f64>, f64)>>,
    /// Best probes seen during the search, ascending by value. Used by the
    /// optimization loop to sidestep duplicate queries.
    pub ranked_probes: Vec<(DVector<f64>, f64)>,
}

fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Expected improvement at a posterior `(mean, std)` against `best_so_far`,
/// in the negative convention: the expected value of `min(f - f*, 0)`.
///
/// For `std > 0` this is `-std * (u Phi(u) + phi(u))` with
/// `u = (best_so_far - mean) / std`; the `std = 0` limit is
/// `min(mean - best_so_far, 0)`. Always `<= 0`.
pub fn ei(mean: f64, std: f64, best_so_far: f64) -> f64 {
    debug_assert!(std >= 0.0);
    if std > 0.0 {
        let u = (best_so_far - mean) / std;
        -std * (u * std_normal_cdf(u) + std_normal_pdf(u))
    } else {
        (mean - best_so_far).min(0.0)
    }
}

fn ei_at(gp: &GpPosterior, best_so_far: f64, x: &DVector<f64>) -> f64 {
    let (mean, var) = gp.mean_var(x);
    ei(mean, var.sqrt(), best_so_far)
}

/// Halton sequence point `index` (1-based) in `d` dimensions.
fn halton(index: usize, d: usize) -> DVector<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(d <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    DVector::from_fn(d, |j, _| {
        let base = PRIMES[j];
        let mut f = 1.0;
        let mut r = 0.0;
        let mut i = index;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    })
}

fn clamp_unit(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Shared multi-start machinery: evaluate `objective` on `candidates`, refine
/// the best few with simplex descent over the feasible set, and return the
/// best probe overall plus the ranked probe list.
fn multi_start(
    objective: &dyn Fn(&DVector<f64>) -> f64,
    feasible: &dyn Fn(&DVector<f64>) -> bool,
    candidates: Vec<DVector<f64>>,
    simplex_size: f64,
    budget: &SearchBudget,
) -> AcquisitionResult {
    assert!(!candidates.is_empty(), "candidate set must be non-empty");
    let mut scored: Vec<(DVector<f64>, f64)> =
        candidates.into_iter().map(|x| (x.clone(), objective(&x))).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut best = scored[0].clone();
    let refine_count = budget.refine_top.min(scored.len());
    let mut bounded = |x: &DVector<f64>| {
        let c = clamp_unit(x);
        if feasible(&c) {
            objective(&c)
        } else {
            f64::INFINITY
        }
    };
    for start in scored[..refine_count].to_vec() {
        let (x, fx) = nelder_mead(&mut bounded, &start.0, simplex_size, budget.refine_iters);
        let x = clamp_unit(&x);
        if fx < best.1 && feasible(&x) {
            best = (x.clone(), fx);
        }
        scored.push((x, fx));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    scored.truncate(32);

    AcquisitionResult {
        minimizer: best.0,
        value: best.1,
        restarts_used: refine_count,
        per_region_values: None,
        ranked_probes: scored,
    }
}

/// Minimizes the expected improvement of `gp` over the unit hypercube.
///
/// Deterministic for a fixed `budget.seed`; the returned value is the lowest
/// acquisition seen over every candidate and refinement probe.
pub fn minimize_acquisition(gp: &GpPosterior, best_so_far: f64, budget: &SearchBudget) -> AcquisitionResult {
    let d = gp.dim();
    let n_cand = (budget.candidates_per_dim * d).max(1);
    let candidates: Vec<DVector<f64>> = (1..=n_cand).map(|i| halton(i, d)).collect();
    let objective = |x: &DVector<f64>| ei_at(gp, best_so_far, x);
    multi_start(&objective, &|_| true, candidates, 0.05, budget)
}

/// Minimizes the expected improvement of a region sub-model over the
/// intersection of its ball with the unit hypercube.
fn minimize_in_region(
    gp: &GpPosterior,
    region: &Region,
    best_so_far: f64,
    budget: &SearchBudget,
    seed: u64,
) -> AcquisitionResult {
    let d = gp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cand = (budget.candidates_per_dim * d).max(1);
    let in_ball = |x: &DVector<f64>| (x - &region.center).norm() <= region.radius;

    let mut candidates = Vec::with_capacity(n_cand + 2);
    // The ball center is a data point, hence always feasible; the predicted
    // minimum is the quadratic model's own best guess.
    candidates.push(region.center.clone());
    let clamped_min = clamp_unit(&region.predicted_min_point);
    if in_ball(&clamped_min) {
        candidates.push(clamped_min);
    }
    let mut attempts = 0;
    while candidates.len() < n_cand + 2 && attempts < 50 * n_cand {
        attempts += 1;
        let dir: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen();
        let rho = region.radius * u.powf(1.0 / d as f64);
        let x = &region.center + dir * (rho / norm);
        if x.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            candidates.push(x);
        } else {
            // Keep the boxed projection when it stays inside the ball.
            let c = clamp_unit(&x);
            if in_ball(&c) {
                candidates.push(c);
            }
        }
    }

    let objective = |x: &DVector<f64>| ei_at(gp, best_so_far, x);
    let simplex_size = (region.radius / 4.0).min(0.05).max(1e-4);
    multi_start(&objective, &in_ball, candidates, simplex_size, budget)
}

/// Decoupled acquisition minimization for the MGL posterior: the global
/// model is searched over the full hypercube and each region model over its
/// ball. `best_so_far` is the minimum over all observations regardless of
/// region membership.
pub fn minimize_acquisition_mgl(
    global_gp: &GpPosterior,
    region_gps: &[(Region, GpPosterior)],
    best_so_far: f64,
    budget: &SearchBudget,
) -> AcquisitionResult {
    if region_gps.is_empty() {
        return minimize_acquisition(global_gp, best_so_far, budget);
    }

    let mut per_region = Vec::with_capacity(region_gps.len());
    let mut best: Option<(usize, AcquisitionResult)> = None; // region order index
    let mut probes: Vec<(DVector<f64>, f64)> = Vec::new();

    for (i, (region, gp)) in region_gps.iter().enumerate() {
        let seed = budget.seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let sub = minimize_in_region(gp, region, best_so_far, budget, seed);
        per_region.push((i, sub.minimizer.clone(), sub.value));
        probes.extend(sub.ranked_probes.iter().cloned());
        // Strict improvement only: earlier (lower-index) regions win ties.
        if best.as_ref().map_or(true, |(_, b)| sub.value < b.value) {
            best = Some((i, sub));
        }
    }

    let global = minimize_acquisition(global_gp, best_so_far, budget);
    probes.extend(global.ranked_probes.iter().cloned());
    // The global branch is compared last and also loses ties.
    let mut result = match best {
        Some((_, sub)) if sub.value <= global.value => sub,
        _ => global,
    };

    probes.sort_by(|a, b| a.1.total_cmp(&b.1));
    probes.truncate(32);
    result.ranked_probes = probes;
    result.per_region_values = Some(per_region);
    result
}
