//! Observed samples of the objective on the unit hypercube.

use nalgebra::DVector;
use thiserror::Error;

/// Errors raised when constructing or extending a [`Dataset`].
#[derive(Debug, Error)]
pub enum DataError {
    #[error("points and values have different lengths ({points} vs {values})")]
    MismatchedLengths { points: usize, values: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
    #[error("coordinate {coord} of point {index} is {value}, outside [0, 1]")]
    OutOfBounds { index: usize, coord: usize, value: f64 },
    #[error("value {index} is not finite")]
    NonFiniteValue { index: usize },
}

/// An ordered list of (point, objective value) pairs on `[0, 1]^d`.
///
/// Points are kept in query order; the optimization loop appends one pair per
/// iteration and model fits treat the set as immutable between appends.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DVector<f64>>,
    values: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Creates an empty dataset for `dim`-dimensional points.
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { points: Vec::new(), values: Vec::new(), dim }
    }

    /// Builds a dataset from parallel point and value lists, validating the
    /// hypercube and shape invariants.
    pub fn from_pairs(points: Vec<DVector<f64>>, values: Vec<f64>, dim: usize) -> Result<Self, DataError> {
        if points.len() != values.len() {
            return Err(DataError::MismatchedLengths { points: points.len(), values: values.len() });
        }
        let mut data = Self::new(dim);
        for (x, y) in points.into_iter().zip(values) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    /// Appends one observation.
    pub fn push(&mut self, point: DVector<f64>, value: f64) -> Result<(), DataError> {
        let index = self.points.len();
        if point.len() != self.dim {
            return Err(DataError::DimensionMismatch { index, got: point.len(), expected: self.dim });
        }
        for (coord, &v) in point.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::OutOfBounds { index, coord, value: v });
            }
        }
        if !value.is_finite() {
            return Err(DataError::NonFiniteValue { index });
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Best (lowest) observed value, if any.
    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }

    /// Index of the best observation, ties broken toward the earliest.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &y) in self.values.iter().enumerate() {
            if best.map_or(true, |b| y < self.values[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Distance from `x` to the nearest stored point (`+inf` when empty).
    pub fn nearest_distance(&self, x: &DVector<f64>) -> f64 {
        self.points.iter().map(|p| (p - x).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Sub-dataset with the given indices, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.dim);
        for &i in indices {
            out.points.push(self.points[i].clone());
            out.values.push(self.values[i]);
        }
        out
    }
}
