//! Benchmark objectives with known optima, synthetic GP-sample objectives,
//! and the "optimal hyperparameters" baseline estimated from a large
//! pre-drawn sample of the objective.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::gp::{
    default_length_scale_grid, loo_cv_length_scale, ml_constant_mean, ml_signal_variance,
    EstimationMethod, GpError, HyperEstimate,
};
use crate::kernels::KernelConfig;
use crate::simplex::nelder_mead;

type ObjectiveFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A black-box objective on a native box, with optional known-optimum
/// metadata for regret reporting.
#[derive(Clone)]
pub struct Benchmark {
    pub name: String,
    pub dim: usize,
    pub native_bounds: Vec<(f64, f64)>,
    evaluate: ObjectiveFn,
    pub known_optimum_value: Option<f64>,
    pub known_optimizer: Option<Vec<f64>>,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("native_bounds", &self.native_bounds)
            .field("known_optimum_value", &self.known_optimum_value)
            .finish()
    }
}

impl Benchmark {
    pub fn new(
        name: impl Into<String>,
        native_bounds: Vec<(f64, f64)>,
        evaluate: ObjectiveFn,
        known_optimum_value: Option<f64>,
        known_optimizer: Option<Vec<f64>>,
    ) -> Self {
        let dim = native_bounds.len();
        Self { name: name.into(), dim, native_bounds, evaluate, known_optimum_value, known_optimizer }
    }

    pub fn evaluate_native(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.evaluate)(x)
    }

    /// Affine map from the unit cube to the native box.
    pub fn to_native(&self, u: &DVector<f64>) -> Vec<f64> {
        self.native_bounds
            .iter()
            .zip(u.iter())
            .map(|(&(lo, hi), &t)| lo + t * (hi - lo))
            .collect()
    }

    /// Inverse of [`Self::to_native`].
    pub fn to_unit(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| {
            let (lo, hi) = self.native_bounds[i];
            (x[i] - lo) / (hi - lo)
        })
    }

    pub fn evaluate_unit(&self, u: &DVector<f64>) -> f64 {
        self.evaluate_native(&self.to_native(u))
    }

    /// The objective as a unit-cube closure for the optimization loop.
    pub fn unit_objective(&self) -> impl Fn(&DVector<f64>) -> f64 + '_ {
        move |u| self.evaluate_unit(u)
    }
}

/// `||x||^2` on `[-2, 2]^2`, minimum 0 at the origin.
pub fn quadratic_2d() -> Benchmark {
    Benchmark::new(
        "quadratic-2d",
        vec![(-2.0, 2.0); 2],
        Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
        Some(0.0),
        Some(vec![0.0, 0.0]),
    )
}

fn exp_weights(d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    (0..d).map(|i| 10f64.powf(i as f64 / (d - 1) as f64)).collect()
}

/// `1 - exp(x^T C x)` with `C = diag(10^{i/(d-1)})` on `[-2, 2]^d`.
///
/// With positive-definite `C` this is maximized at the center and minimized
/// at the box corners; see [`exp_bowl`] for the conventional bowl-shaped
/// variant.
pub fn exp_paper(d: usize) -> Benchmark {
    let c = exp_weights(d);
    let corner_value = 1.0 - (4.0 * c.iter().sum::<f64>()).exp();
    let weights = c.clone();
    Benchmark::new(
        format!("exp-paper-{d}d"),
        vec![(-2.0, 2.0); d],
        Arc::new(move |x: &[f64]| {
            let q: f64 = x.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
            1.0 - q.exp()
        }),
        Some(corner_value),
        Some(vec![2.0; d]),
    )
}

/// `1 - exp(-x^T C x)`, the bowl-shaped variant, minimum 0 at the origin.
pub fn exp_bowl(d: usize) -> Benchmark {
    let weights = exp_weights(d);
    Benchmark::new(
        format!("exp-bowl-{d}d"),
        vec![(-2.0, 2.0); d],
        Arc::new(move |x: &[f64]| {
            let q: f64 = x.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
            1.0 - (-q).exp()
        }),
        Some(0.0),
        Some(vec![0.0; d]),
    )
}

/// Rosenbrock on `[-5, 10]^2`, minimum 0 at (1, 1).
pub fn rosenbrock_2d() -> Benchmark {
    Benchmark::new(
        "rosenbrock-2d",
        vec![(-5.0, 10.0); 2],
        Arc::new(|x: &[f64]| {
            x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum()
        }),
        Some(0.0),
        Some(vec![1.0, 1.0]),
    )
}

/// Branin-Hoo on `[-5, 10] x [0, 15]`; three global minima with value
/// `5 / (4 pi)`.
pub fn branin_hoo() -> Benchmark {
    let pi = std::f64::consts::PI;
    Benchmark::new(
        "branin-hoo",
        vec![(-5.0, 10.0), (0.0, 15.0)],
        Arc::new(move |x: &[f64]| {
            let (x1, x2) = (x[0], x[1]);
            let b = 5.1 / (4.0 * pi * pi);
            let c = 5.0 / pi;
            let t = 1.0 / (8.0 * pi);
            (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
        }),
        Some(5.0 / (4.0 * pi)),
        Some(vec![pi, 2.275]),
    )
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

/// Hartmann 3D on `[0, 1]^3`.
pub fn hartmann_3d() -> Benchmark {
    const A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
    const P: [[f64; 3]; 4] = [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ];
    Benchmark::new(
        "hartmann-3d",
        vec![(0.0, 1.0); 3],
        Arc::new(|x: &[f64]| {
            let mut sum = 0.0;
            for i in 0..4 {
                let inner: f64 = (0..3).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum();
                sum -= HARTMANN_ALPHA[i] * (-inner).exp();
            }
            sum
        }),
        Some(-3.8627797873326619),
        Some(vec![0.11458886593427439, 0.5556488929743048, 0.8525469823796579]),
    )
}

/// Hartmann 6D on `[0, 1]^6`.
pub fn hartmann_6d() -> Benchmark {
    const A: [[f64; 6]; 4] = [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ];
    const P: [[f64; 6]; 4] = [
        [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
        [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
        [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
        [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
    ];
    Benchmark::new(
        "hartmann-6d",
        vec![(0.0, 1.0); 6],
        Arc::new(|x: &[f64]| {
            let mut sum = 0.0;
            for i in 0..4 {
                let inner: f64 = (0..6).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum();
                sum -= HARTMANN_ALPHA[i] * (-inner).exp();
            }
            sum
        }),
        Some(-3.3223680114155143),
        Some(vec![0.20168951046325687, 0.15001068523162842, 0.4768739704632568, 0.27533243, 0.31165162, 0.6573005352316285]),
    )
}

/// The benchmark suite: quadratic, exponential (printed form, 5D),
/// Rosenbrock, Branin-Hoo and the two Hartmann functions.
pub fn standard_suite() -> Vec<Benchmark> {
    vec![quadratic_2d(), exp_paper(5), rosenbrock_2d(), branin_hoo(), hartmann_3d(), hartmann_6d()]
}

/// Resolves a benchmark by the name used in experiment configs. Includes the
/// bowl-shaped exponential variants in addition to the suite.
pub fn by_name(name: &str) -> Option<Benchmark> {
    match name {
        "quadratic-2d" => Some(quadratic_2d()),
        "rosenbrock-2d" => Some(rosenbrock_2d()),
        "branin-hoo" => Some(branin_hoo()),
        "hartmann-3d" => Some(hartmann_3d()),
        "hartmann-6d" => Some(hartmann_6d()),
        _ => {
            // exp-paper-<d>d / exp-bowl-<d>d
            let parse_dim = |prefix: &str| -> Option<usize> {
                name.strip_prefix(prefix)?.strip_suffix('d')?.parse().ok()
            };
            if let Some(d) = parse_dim("exp-paper-") {
                (1..=8).contains(&d).then(|| exp_paper(d))
            } else if let Some(d) = parse_dim("exp-bowl-") {
                (1..=8).contains(&d).then(|| exp_bowl(d))
            } else {
                None
            }
        }
    }
}

/// A convex quadratic patch blended into a GP sample path.
///
/// Inside the inner 70% of the ball the objective equals
/// `min_value + 0.5 (x - min_point)^T diag(curvature) (x - min_point)`
/// exactly; a smoothstep blend returns to the field at the boundary.
#[derive(Debug, Clone)]
pub struct InsertedRegion {
    pub center: Vec<f64>,
    pub radius: f64,
    pub min_point: Vec<f64>,
    pub min_value: f64,
    pub curvature: Vec<f64>,
}

impl InsertedRegion {
    fn quad(&self, x: &[f64]) -> f64 {
        let q: f64 = x
            .iter()
            .zip(&self.min_point)
            .zip(&self.curvature)
            .map(|((&v, &m), &h)| 0.5 * h * (v - m) * (v - m))
            .sum();
        self.min_value + q
    }

    fn blend_weight(&self, x: &[f64]) -> f64 {
        let dist: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(&v, &c)| (v - c) * (v - c))
            .sum::<f64>()
            .sqrt();
        let s = dist / self.radius;
        if s >= 1.0 {
            0.0
        } else if s <= 0.7 {
            1.0
        } else {
            let t = (s - 0.7) / 0.3;
            1.0 - (3.0 * t * t - 2.0 * t * t * t)
        }
    }
}

struct GpSampleField {
    dim: usize,
    resolution: usize,
    values: Vec<f64>,
    regions: Vec<InsertedRegion>,
}

impl GpSampleField {
    /// Piecewise-linear (bilinear in 2D) interpolation of the grid values.
    fn field(&self, x: &[f64]) -> f64 {
        let g = self.resolution;
        let cell = |t: f64| -> (usize, f64) {
            let scaled = t.clamp(0.0, 1.0) * (g - 1) as f64;
            let i = (scaled.floor() as usize).min(g - 2);
            (i, scaled - i as f64)
        };
        match self.dim {
            1 => {
                let (i, f) = cell(x[0]);
                self.values[i] * (1.0 - f) + self.values[i + 1] * f
            }
            2 => {
                let (i, fi) = cell(x[0]);
                let (j, fj) = cell(x[1]);
                let at = |a: usize, b: usize| self.values[a * g + b];
                let v0 = at(i, j) * (1.0 - fj) + at(i, j + 1) * fj;
                let v1 = at(i + 1, j) * (1.0 - fj) + at(i + 1, j + 1) * fj;
                v0 * (1.0 - fi) + v1 * fi
            }
            _ => unreachable!("validated at construction"),
        }
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let base = self.field(x);
        let mut value = base;
        for r in &self.regions {
            let w = r.blend_weight(x);
            if w > 0.0 {
                value = w * r.quad(x) + (1.0 - w) * base;
                break;
            }
        }
        value
    }
}

/// Draws one sample path of a zero-mean unit-variance GP with the squared
/// exponential kernel on a uniform grid over `[0, 1]^dim` (`dim` is 1 or 2),
/// extended to the continuum by piecewise-linear interpolation, optionally
/// with convex quadratic regions blended in. The known optimum is computed by
/// an oversampled grid scan refined by simplex descent.
pub fn gp_sample_objective(
    length_scale: f64,
    seed: u64,
    grid_resolution: usize,
    dim: usize,
    inserted_regions: Vec<InsertedRegion>,
) -> Result<Benchmark, GpError> {
    assert!(dim == 1 || dim == 2, "sample objectives support 1D and 2D only");
    assert!(grid_resolution >= 32, "grid resolution must be at least 32 per dimension");
    let g = grid_resolution;
    let total = g.pow(dim as u32);
    let coords: Vec<DVector<f64>> = (0..total)
        .map(|idx| match dim {
            1 => DVector::from_column_slice(&[idx as f64 / (g - 1) as f64]),
            _ => {
                let i = idx / g;
                let j = idx % g;
                DVector::from_column_slice(&[i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64])
            }
        })
        .collect();

    let kernel = KernelConfig::se(length_scale, 1.0);
    let gram = DMatrix::from_fn(total, total, |i, j| kernel.evaluate(&coords[i], &coords[j]));
    let mut jitter = 1e-10;
    let chol = loop {
        let mut k = gram.clone();
        for i in 0..total {
            k[(i, i)] += jitter;
        }
        match nalgebra::Cholesky::new(k) {
            Some(c) => break c,
            None if jitter < 1e-2 => jitter *= 10.0,
            None => return Err(GpError::FactorizationFailure { max_jitter: jitter }),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: DVector<f64> = DVector::from_fn(total, |_, _| StandardNormal.sample(&mut rng));
    let values: Vec<f64> = (chol.l() * z).iter().copied().collect();

    let field = Arc::new(GpSampleField { dim, resolution: g, values, regions: inserted_regions });

    // Known optimum: oversampled scan plus local refinement, also started
    // from each inserted region's own minimum.
    let scan = 4 * g;
    let mut starts: Vec<DVector<f64>> = Vec::new();
    let mut best_scan = (DVector::zeros(dim), f64::INFINITY);
    let scan_total = scan.pow(dim as u32);
    for idx in 0..scan_total {
        let x = match dim {
            1 => DVector::from_column_slice(&[idx as f64 / (scan - 1) as f64]),
            _ => {
                let i = idx / scan;
                let j = idx % scan;
                DVector::from_column_slice(&[
                    i as f64 / (scan - 1) as f64,
                    j as f64 / (scan - 1) as f64,
                ])
            }
        };
        let v = field.evaluate(x.as_slice());
        if v < best_scan.1 {
            best_scan = (x, v);
        }
    }
    starts.push(best_scan.0.clone());
    for r in &field.regions {
        let m = DVector::from_column_slice(&r.min_point);
        if m.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            starts.push(m);
        }
    }
    let mut optimum = best_scan.1;
    let mut arg = best_scan.0;
    for s in starts {
        let field_ref = field.clone();
        let mut obj = |x: &DVector<f64>| {
            let c = x.map(|v| v.clamp(0.0, 1.0));
            field_ref.evaluate(c.as_slice())
        };
        let (x, v) = nelder_mead(&mut obj, &s, 1.0 / g as f64, 400);
        if v < optimum {
            optimum = v;
            arg = x.map(|v| v.clamp(0.0, 1.0));
        }
    }

    let eval_field = field.clone();
    Ok(Benchmark::new(
        format!("gp-sample-{dim}d-l{length_scale}-s{seed}"),
        vec![(0.0, 1.0); dim],
        Arc::new(move |x: &[f64]| eval_field.evaluate(x)),
        Some(optimum),
        Some(arg.iter().copied().collect()),
    ))
}

/// Estimates "oracle" hyperparameters for a benchmark from `n_samples`
/// pre-drawn uniform samples: length-scale by exhaustive leave-one-out cross
/// validation (on a subsample of at most `loo_subsample` points, for
/// tractability), then prior mean and signal variance by maximum likelihood
/// on the full sample.
pub fn optimal_hyperparameters(
    benchmark: &Benchmark,
    n_samples: usize,
    seed: u64,
    loo_subsample: usize,
    min_correlation: f64,
) -> Result<HyperEstimate, GpError> {
    assert!(n_samples >= 4 && loo_subsample >= 4);
    let d = benchmark.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new(d);
    for _ in 0..n_samples {
        let u = DVector::from_fn(d, |_, _| rng.gen::<f64>());
        let y = benchmark.evaluate_unit(&u);
        data.push(u, y).expect("uniform draws lie in the cube");
    }

    let loo_data = if data.len() > loo_subsample {
        let stride = data.len() as f64 / loo_subsample as f64;
        let indices: Vec<usize> = (0..loo_subsample).map(|i| (i as f64 * stride) as usize).collect();
        data.subset(&indices)
    } else {
        data.clone()
    };
    let grid = default_length_scale_grid(d, loo_data.len(), min_correlation);
    let length_scale = loo_cv_length_scale(&loo_data, &grid)?;

    let unit = KernelConfig::se(length_scale, 1.0);
    let c_mu = ml_constant_mean(&data, &unit)?;
    let sigma_f_sq = ml_signal_variance(&data, &unit, c_mu)?;
    Ok(HyperEstimate { c_mu, sigma_f_sq, length_scale, method: EstimationMethod::LooCv })
}
