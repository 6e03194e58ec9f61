//! Kernel functions: squared exponential, quadratic, and the mixed
//! global/local (MGL) kernel.
//!
//! The MGL kernel is piecewise: inside a detected convex neighborhood it is
//! the quadratic kernel, between two points that are both outside every
//! neighborhood it is the stationary squared-exponential kernel, and across a
//! neighborhood boundary it is zero. The zero cross-covariance is what lets
//! the posterior decouple into one sub-model per neighborhood plus one global
//! model.

use nalgebra::{DMatrix, DVector};

/// A ball-shaped convex neighborhood with its fitted quadratic model.
///
/// Produced by [`crate::regions::identify_regions`]; the fit satisfies
/// `hessian` positive definite, `predicted_min_point` inside the ball, and
/// `predicted_min_value` no worse than the best observation at detection
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub center: DVector<f64>,
    pub radius: f64,
    pub beta0: f64,
    pub beta1: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub predicted_min_point: DVector<f64>,
    pub predicted_min_value: f64,
    /// Indices into the dataset of the samples the fit was computed from.
    pub member_indices: Vec<usize>,
}

impl Region {
    /// Closed-ball membership: boundary points count as inside.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (x - &self.center).norm() <= self.radius
    }
}

/// Kernel selection with hyperparameters.
///
/// The quadratic kernel carries no signal-variance factor; scale matching
/// between the quadratic and stationary parts of the MGL kernel is handled by
/// the optimization loop's variance down-scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    SquaredExponential { length_scale: f64, sigma_f_sq: f64 },
    Quadratic,
    Mgl { length_scale: f64, sigma_f_sq: f64, regions: Vec<Region> },
}

impl KernelConfig {
    pub fn se(length_scale: f64, sigma_f_sq: f64) -> Self {
        assert!(length_scale > 0.0 && sigma_f_sq > 0.0);
        Self::SquaredExponential { length_scale, sigma_f_sq }
    }

    /// MGL kernel; `regions` must be pairwise disjoint balls.
    pub fn mgl(length_scale: f64, sigma_f_sq: f64, regions: Vec<Region>) -> Self {
        assert!(length_scale > 0.0 && sigma_f_sq > 0.0);
        debug_assert!(regions_disjoint(&regions), "MGL regions must be pairwise disjoint");
        Self::Mgl { length_scale, sigma_f_sq, regions }
    }

    /// Evaluates the kernel on a pair of points.
    pub fn evaluate(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            Self::SquaredExponential { length_scale, sigma_f_sq } => {
                k_se(x, y, *length_scale, *sigma_f_sq)
            }
            Self::Quadratic => k_quadratic(x, y),
            Self::Mgl { .. } => k_mgl(x, y, self),
        }
    }

    /// Copy of this kernel with unit signal variance (quadratic unchanged).
    pub fn unit_variance(&self) -> Self {
        match self {
            Self::SquaredExponential { length_scale, .. } => Self::se(*length_scale, 1.0),
            Self::Quadratic => Self::Quadratic,
            Self::Mgl { length_scale, regions, .. } => {
                Self::Mgl { length_scale: *length_scale, sigma_f_sq: 1.0, regions: regions.clone() }
            }
        }
    }

    pub fn sigma_f_sq(&self) -> Option<f64> {
        match self {
            Self::SquaredExponential { sigma_f_sq, .. } | Self::Mgl { sigma_f_sq, .. } => Some(*sigma_f_sq),
            Self::Quadratic => None,
        }
    }

    pub fn length_scale(&self) -> Option<f64> {
        match self {
            Self::SquaredExponential { length_scale, .. } | Self::Mgl { length_scale, .. } => {
                Some(*length_scale)
            }
            Self::Quadratic => None,
        }
    }
}

/// Squared-exponential kernel `sigma_f_sq * exp(-0.5 ||x - y||^2 / l^2)`.
pub fn k_se(x: &DVector<f64>, y: &DVector<f64>, length_scale: f64, sigma_f_sq: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let d2 = (x - y).norm_squared();
    sigma_f_sq * (-0.5 * d2 / (length_scale * length_scale)).exp()
}

/// Quadratic kernel `(x . y + 1)^2`.
pub fn k_quadratic(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let ip = x.dot(y) + 1.0;
    ip * ip
}

/// Mixed global/local kernel.
///
/// Quadratic when both points share a region, squared exponential when both
/// points are outside every region, zero otherwise.
pub fn k_mgl(x: &DVector<f64>, y: &DVector<f64>, cfg: &KernelConfig) -> f64 {
    let KernelConfig::Mgl { length_scale, sigma_f_sq, regions } = cfg else {
        panic!("k_mgl requires an MGL kernel config");
    };
    let rx = region_membership(x, regions);
    let ry = region_membership(y, regions);
    match (rx, ry) {
        (Some(i), Some(j)) if i == j => k_quadratic(x, y),
        (None, None) => k_se(x, y, *length_scale, *sigma_f_sq),
        _ => 0.0,
    }
}

/// Index of the unique region whose closed ball contains `x`, if any.
///
/// Assumes the regions are pairwise disjoint; the first match wins.
pub fn region_membership(x: &DVector<f64>, regions: &[Region]) -> Option<usize> {
    regions.iter().position(|r| r.contains(x))
}

/// True when every pair of balls is strictly separated.
pub fn regions_disjoint(regions: &[Region]) -> bool {
    for i in 0..regions.len() {
        for j in (i + 1)..regions.len() {
            let dist = (&regions[i].center - &regions[j].center).norm();
            if dist <= regions[i].radius + regions[j].radius {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
pub(crate) fn test_region(center: &[f64], radius: f64) -> Region {
    let d = center.len();
    Region {
        center: DVector::from_column_slice(center),
        radius,
        beta0: 0.0,
        beta1: DVector::zeros(d),
        hessian: DMatrix::identity(d, d),
        predicted_min_point: DVector::from_column_slice(center),
        predicted_min_value: 0.0,
        member_indices: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(coords: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(coords)
    }

    #[test]
    fn se_at_zero_distance_is_sigma_f_sq() {
        let x = v(&[0.3, 0.7]);
        assert_eq!(k_se(&x, &x, 0.5, 2.5), 2.5);
    }

    #[test]
    fn se_at_one_length_scale() {
        // ||x - y|| = l gives exp(-0.5).
        let x = v(&[0.0]);
        let y = v(&[0.3]);
        assert_relative_eq!(k_se(&x, &y, 0.3, 1.0), (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(k_se(&x, &y, 0.3, 1.0), 0.6065306597126334, max_relative = 1e-12);
    }

    #[test]
    fn se_vanishes_far_away() {
        let x = v(&[0.0]);
        let y = v(&[1.0]);
        let k = k_se(&x, &y, 1e-3, 1.0);
        assert!(k >= 0.0 && k < 1e-300);
    }

    #[test]
    fn quadratic_kernel_values() {
        assert_eq!(k_quadratic(&v(&[0.0]), &v(&[0.0])), 1.0);
        assert_eq!(k_quadratic(&v(&[1.0]), &v(&[1.0])), 4.0);
        // (1*3 + 2*(-1) + 1)^2 = 4
        assert_eq!(k_quadratic(&v(&[1.0, 2.0]), &v(&[3.0, -1.0])), 4.0);
    }

    #[test]
    fn mgl_without_regions_is_se() {
        let cfg = KernelConfig::mgl(0.4, 1.7, vec![]);
        let x = v(&[0.2, 0.9]);
        let y = v(&[0.8, 0.1]);
        assert_eq!(k_mgl(&x, &y, &cfg), k_se(&x, &y, 0.4, 1.7));
    }

    #[test]
    fn mgl_cross_boundary_is_zero() {
        let cfg = KernelConfig::mgl(0.4, 1.0, vec![test_region(&[0.2, 0.2], 0.1)]);
        let inside = v(&[0.2, 0.2]);
        let outside = v(&[0.9, 0.9]);
        assert_eq!(k_mgl(&inside, &outside, &cfg), 0.0);
        assert_eq!(k_mgl(&outside, &inside, &cfg), 0.0);
    }

    #[test]
    fn mgl_same_region_uses_quadratic() {
        let origin_region = test_region(&[0.0, 0.0], 0.05);
        let cfg = KernelConfig::mgl(0.4, 1.0, vec![origin_region]);
        let o = v(&[0.0, 0.0]);
        assert_eq!(k_mgl(&o, &o, &cfg), 1.0);
    }

    #[test]
    fn membership_edge_cases() {
        assert_eq!(region_membership(&v(&[0.5]), &[]), None);
        let r = test_region(&[0.5], 0.1);
        assert_eq!(region_membership(&v(&[0.5]), &[r.clone()]), Some(0));
        // Boundary counts as inside, strictly beyond does not.
        assert_eq!(region_membership(&v(&[0.6]), &[r.clone()]), Some(0));
        assert_eq!(region_membership(&v(&[0.6 + 1e-6]), &[r]), None);
    }
}
