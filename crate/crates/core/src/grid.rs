use ndarray::Array2;

use crate::config::CrossbarConfig;
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Per-cell ideal conductances of a crossbar tile, the decision variable of mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceGrid<T>(Array2<T>);

impl<T: Scalar> ConductanceGrid<T> {
    /// Wrap a matrix of conductances, checking shape and bounds against `config`.
    pub fn new(values: Array2<T>, config: &CrossbarConfig<T>) -> Result<Self> {
        if values.nrows() != config.rows || values.ncols() != config.cols {
            return Err(CoreError::InvalidInput(format!(
                "grid shape {}x{} does not match config {}x{}",
                values.nrows(),
                values.ncols(),
                config.rows,
                config.cols
            )));
        }
        for ((i, j), &g) in values.indexed_iter() {
            if !g.is_finite() || g < config.g_min || g > config.g_max {
                return Err(CoreError::InvalidInput(format!(
                    "conductance {g} at ({i},{j}) outside [{}, {}]",
                    config.g_min, config.g_max
                )));
            }
        }
        Ok(Self(values))
    }

    /// Grid with every cell at the same conductance.
    pub fn uniform(value: T, config: &CrossbarConfig<T>) -> Result<Self> {
        Self::new(Array2::from_elem((config.rows, config.cols), value), config)
    }

    pub fn values(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_values(self) -> Array2<T> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Non-negative target matrix W to be realized by a tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix<T>(Array2<T>);

impl<T: Scalar> TargetMatrix<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(CoreError::InvalidInput("empty target matrix".into()));
        }
        for ((i, j), &w) in values.indexed_iter() {
            if !w.is_finite() || w < T::zero() {
                return Err(CoreError::InvalidInput(format!(
                    "target entry {w} at ({i},{j}) must be finite and non-negative"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<T> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Largest entry; zero for the all-zero matrix.
    pub fn max_entry(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, &w| acc.max(w))
    }
}

/// Squared Frobenius norm of a matrix.
pub fn frob_norm_sq<T: Scalar>(m: &Array2<T>) -> T {
    m.iter().map(|&x| x * x).sum()
}
