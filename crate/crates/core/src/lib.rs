//! Bayesian optimization on the unit hypercube with two model-adaptation
//! mechanisms that target optimization progress rather than data likelihood:
//!
//! * **Alpha-ratio cool down** — the squared-exponential length-scale is
//!   halved whenever the optimal acquisition value under the halved
//!   length-scale is substantially better than under the current one, and is
//!   kept otherwise. A dimension-aware lower bound derived from a best-case
//!   space-filling design keeps the schedule from collapsing.
//! * **Mixed global/local (MGL) kernel** — ball-shaped convex neighborhoods
//!   around suspected local minima are detected from the data and modelled
//!   with a quadratic kernel, while the rest of the space keeps the
//!   stationary global kernel. Zero cross-covariance between the parts makes
//!   the posterior decouple exactly, so each region is optimized like a
//!   local quadratic model.
//!
//! The crate ships the GP machinery ([`gp`]), kernels ([`kernels`]),
//! expected-improvement acquisition with multi-start inner search
//! ([`acquisition`]), the cool-down controller ([`lengthscale`]), local
//! minimum region identification ([`regions`]), the optimization loop
//! ([`bo`]), standard benchmark objectives ([`benchmarks`]) and a CSV-emitting
//! experiment harness ([`harness`]).

pub mod acquisition;
pub mod benchmarks;
pub mod bo;
pub mod data;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod lengthscale;
pub mod regions;

mod simplex;

pub use acquisition::{ei, minimize_acquisition, minimize_acquisition_mgl, AcquisitionResult, SearchBudget};
pub use bo::{latin_hypercube, run_bo, BoConfig, BoError, IterationRecord, KernelMode, RunTrace};
pub use data::{DataError, Dataset};
pub use gp::{
    fit_posterior, loo_cv_length_scale, ml_constant_mean, ml_signal_variance, EstimationMethod,
    GpError, GpPosterior, HyperEstimate,
};
pub use kernels::{k_mgl, k_quadratic, k_se, region_membership, KernelConfig, Region};
pub use lengthscale::{
    ar_cool_down, equivalent_min_distance, length_scale_lower_bound, sphere_volume, CoolDownConfig,
    CoolDownDecision, CoolDownError, CoolDownState, InvalidCorrelation,
};
pub use regions::{distance_to_ball, fit_quadratic, identify_regions, knn, LmriConfig, QuadraticFit, RegionError};
