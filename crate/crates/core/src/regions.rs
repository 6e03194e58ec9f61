//! Local minimum region identification.
//!
//! Every sample seeds a family of candidate balls (radius = distance to its
//! k-th nearest neighbor for k between the quadratic model's unknown count
//! and twice that). A full quadratic is least-squares fitted to each ball's
//! members and the candidate is rejected unless all of the following hold:
//! the Hessian is positive definite, the model's stationary point lies inside
//! the ball, the predicted minimum improves on the best observation, the
//! predicted minimum is not already within tolerance of an existing sample,
//! and no outside sample sits within the ignorance threshold of the ball.
//! Accepted candidates are deduplicated by keeping the best predicted value
//! first and dropping everything that overlaps it.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::data::Dataset;
use crate::kernels::Region;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("design matrix rank {rank} below the {needed} coefficients; sample geometry is degenerate")]
    RankDeficient { rank: usize, needed: usize },
    #[error("need at least {needed} samples for a quadratic fit, got {got}")]
    TooFewSamples { got: usize, needed: usize },
}

/// Tunables for [`identify_regions`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct LmriConfig {
    /// Absolute tolerance: a predicted minimum closer than this to an
    /// existing sample counts as already converged.
    pub epsilon: f64,
    /// Minimum clearance (in unit-cube coordinates) outside samples must keep
    /// from a candidate ball.
    pub ignorance_threshold: f64,
    /// Relative eigenvalue floor for the positive-definiteness test.
    pub pd_tolerance: f64,
    /// Advance to the next neighborhood size on rejection instead of
    /// abandoning the seed sample.
    pub continue_on_reject: bool,
    /// Use the printed stationary-point form `-0.5 B^{-1} beta1` (and the
    /// matching predicted value without the 1/2 factor) instead of the
    /// calculus-consistent one.
    pub paper_literal_minimizer: bool,
}

impl Default for LmriConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            ignorance_threshold: 0.05,
            pd_tolerance: 1e-10,
            continue_on_reject: false,
            paper_literal_minimizer: false,
        }
    }
}

/// Least-squares quadratic model `y = beta0 + beta1 . x + 0.5 x^T B x` with
/// `B` symmetric by parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFit {
    pub beta0: f64,
    pub beta1: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub residual_sse: f64,
}

impl QuadraticFit {
    /// Stationary point `-B^{-1} beta1` of the fitted model, `None` when the
    /// Hessian is singular.
    pub fn stationary_point(&self) -> Option<DVector<f64>> {
        self.hessian.clone().lu().solve(&(-&self.beta1))
    }

    /// Printed variant `-0.5 B^{-1} beta1`.
    pub fn paper_stationary_point(&self) -> Option<DVector<f64>> {
        self.stationary_point().map(|x| x * 0.5)
    }

    /// Model value at `x` under the fitted 1/2 convention.
    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.beta0 + self.beta1.dot(x) + 0.5 * (x.transpose() * &self.hessian * x)[(0, 0)]
    }

    /// Model value without the 1/2 factor on the quadratic term, matching the
    /// printed prediction formula.
    pub fn evaluate_paper(&self, x: &DVector<f64>) -> f64 {
        self.beta0 + self.beta1.dot(x) + (x.transpose() * &self.hessian * x)[(0, 0)]
    }
}

/// Number of quadratic-model coefficients in dimension `d`:
/// `1 + d + d(d+1)/2`.
pub fn quadratic_unknowns(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Least-squares fit of a full quadratic to `points`/`values`.
///
/// The Hessian is parametrized by its upper triangle, so the returned matrix
/// is symmetric by construction. Fails when the design matrix is numerically
/// rank-deficient.
pub fn fit_quadratic(points: &[DVector<f64>], values: &[f64]) -> Result<QuadraticFit, RegionError> {
    assert_eq!(points.len(), values.len());
    let d = points.first().map_or(0, |p| p.len());
    let n_u = quadratic_unknowns(d);
    if points.len() < n_u {
        return Err(RegionError::TooFewSamples { got: points.len(), needed: n_u });
    }

    // Columns: 1, x_1..x_d, 0.5 x_p^2 (p = q), x_p x_q (p < q).
    let rows = points.len();
    let mut design = DMatrix::zeros(rows, n_u);
    for (r, x) in points.iter().enumerate() {
        design[(r, 0)] = 1.0;
        for p in 0..d {
            design[(r, 1 + p)] = x[p];
        }
        let mut col = 1 + d;
        for p in 0..d {
            for q in p..d {
                design[(r, col)] = if p == q { 0.5 * x[p] * x[p] } else { x[p] * x[q] };
                col += 1;
            }
        }
    }
    let rhs = DVector::from_column_slice(values);

    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let tol = max_sv * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < n_u {
        return Err(RegionError::RankDeficient { rank, needed: n_u });
    }
    let coeffs = svd.solve(&rhs, tol).expect("SVD computed with both factors");

    let beta0 = coeffs[0];
    let beta1 = DVector::from_fn(d, |p, _| coeffs[1 + p]);
    let mut hessian = DMatrix::zeros(d, d);
    let mut col = 1 + d;
    for p in 0..d {
        for q in p..d {
            hessian[(p, q)] = coeffs[col];
            hessian[(q, p)] = coeffs[col];
            col += 1;
        }
    }
    let residual = &design * &coeffs - &rhs;
    Ok(QuadraticFit { beta0, beta1, hessian, residual_sse: residual.norm_squared() })
}

/// The k nearest data points to `query` by Euclidean distance, as
/// `(index, distance)` pairs sorted ascending; distance ties break toward the
/// lower index. The query itself is included when it is a data point.
pub fn knn(query: &DVector<f64>, data: &Dataset, k: usize) -> Vec<(usize, f64)> {
    assert!(k <= data.len(), "k = {k} exceeds dataset size {}", data.len());
    let mut dists: Vec<(usize, f64)> =
        (0..data.len()).map(|i| (i, (data.point(i) - query).norm())).collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(k);
    dists
}

/// Distance from `x` to the closed ball of `region`: zero inside and on the
/// boundary.
pub fn distance_to_ball(x: &DVector<f64>, region: &Region) -> f64 {
    dist_to_shell(x, &region.center, region.radius)
}

fn dist_to_shell(x: &DVector<f64>, center: &DVector<f64>, radius: f64) -> f64 {
    ((x - center).norm() - radius).max(0.0)
}

/// Positive-definiteness check: lower-triangular factorization of
/// `B - floor I` with `floor = pd_tolerance * trace(B)`, requiring strictly
/// positive pivots.
fn is_positive_definite(b: &DMatrix<f64>, pd_tolerance: f64) -> bool {
    let d = b.nrows();
    let trace = b.trace();
    if !trace.is_finite() || trace <= 0.0 {
        return false;
    }
    let floor = pd_tolerance * trace;
    let mut m = b.clone();
    for i in 0..d {
        m[(i, i)] -= floor;
    }
    for j in 0..d {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= m[(j, k)] * m[(j, k)];
        }
        if !(pivot > 0.0) {
            return false;
        }
        let root = pivot.sqrt();
        m[(j, j)] = root;
        for i in (j + 1)..d {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = v / root;
        }
    }
    true
}

struct Candidate {
    region: Region,
}

/// Identifies disjoint ball-shaped convex neighborhoods in `data`.
///
/// Returns an empty list when nothing qualifies (including when the dataset
/// is too small for any neighborhood size). The result is deterministic for
/// identical data order.
pub fn identify_regions(data: &Dataset, cfg: &LmriConfig) -> Vec<Region> {
    let d = data.dim();
    let n = data.len();
    let n_u = quadratic_unknowns(d);
    let mut candidates: Vec<Candidate> = Vec::new();
    if n == 0 {
        return Vec::new();
    }
    let best_value = data.min_value().expect("non-empty");

    for i in 0..n {
        let k_max = (2 * n_u).min(n.saturating_sub(1));
        for k in n_u..=k_max {
            let neighbors = knn(data.point(i), data, k);
            let radius = neighbors.last().expect("k >= 1").1;
            let center = data.point(i).clone();

            let member_indices: Vec<usize> = neighbors.iter().map(|&(idx, _)| idx).collect();
            let points: Vec<DVector<f64>> = member_indices.iter().map(|&idx| data.point(idx).clone()).collect();
            let values: Vec<f64> = member_indices.iter().map(|&idx| data.value(idx)).collect();

            let fit = match fit_quadratic(&points, &values) {
                Ok(f) => f,
                // Degenerate geometry: skip this neighborhood size and let a
                // larger one try.
                Err(_) => continue,
            };

            // (a) curvature must be convex.
            if !is_positive_definite(&fit.hessian, cfg.pd_tolerance) {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            }

            let stationary = if cfg.paper_literal_minimizer {
                fit.paper_stationary_point()
            } else {
                fit.stationary_point()
            };
            let Some(min_point) = stationary else {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            };
            let min_value = if cfg.paper_literal_minimizer {
                fit.evaluate_paper(&min_point)
            } else {
                fit.evaluate(&min_point)
            };

            // (b) the predicted minimum must lie inside the ball.
            if (&min_point - &center).norm() > radius {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            }
            // (c) it must improve on the best observation.
            if min_value > best_value {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            }
            // (d) it must not coincide with an already-sampled point.
            let nearest = knn(&min_point, data, 1)[0].1;
            if nearest < cfg.epsilon {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            }
            // (e) nearby outside samples must contribute to the model.
            let tau = (0..n)
                .filter(|idx| !member_indices.contains(idx))
                .map(|idx| dist_to_shell(data.point(idx), &center, radius))
                .fold(f64::INFINITY, f64::min);
            if tau < cfg.ignorance_threshold {
                if cfg.continue_on_reject {
                    continue;
                }
                break;
            }

            candidates.push(Candidate {
                region: Region {
                    center: center.clone(),
                    radius,
                    beta0: fit.beta0,
                    beta1: fit.beta1.clone(),
                    hessian: fit.hessian.clone(),
                    predicted_min_point: min_point,
                    predicted_min_value: min_value,
                    member_indices,
                },
            });
        }
    }

    // Overlap removal: keep the best predicted values, drop anything that
    // intersects an already-kept ball. Stable sort keeps candidate insertion
    // order on ties, so the result is deterministic.
    candidates.sort_by(|a, b| a.region.predicted_min_value.total_cmp(&b.region.predicted_min_value));
    let mut kept: Vec<Region> = Vec::new();
    for cand in candidates {
        let disjoint = kept.iter().all(|r| {
            (&r.center - &cand.region.center).norm() > r.radius + cand.region.radius
        });
        if disjoint {
            kept.push(cand.region);
        }
    }
    kept
}
