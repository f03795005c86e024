//! Mapping of target matrices onto crossbar conductances: scaling-factor
//! search, projected conductance descent, calibration redistribution,
//! quantization, and state-variable solves, plus two prior-art baselines.

mod alpha;
mod descent;
mod flow;
mod state;

pub use alpha::{search_alpha, AlphaSearchParams, AlphaSearchResult};
pub use descent::{descend_conductances, descend_with, DescentOptions, DescentResult};
pub use flow::{
    baseline_calibration_map, baseline_fixed_alpha_map, map_matrix, weighted_calibration_residual,
};
pub use state::{solve_state_variables, FlaggedCell, FlagReason, StateSolution};

use ndarray::Array2;

use crate::config::CrossbarConfig;
use crate::error::{CoreError, Result};
use crate::grid::{frob_norm_sq, ConductanceGrid, TargetMatrix};
use crate::mna::CrossbarSolver;
use crate::scalar::{clamp, Scalar};

/// Which flow produced a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingMethod {
    /// Alpha search, descent, calibration redistribution, quantization.
    Proposed,
    /// Descent at a fixed scaling factor, then quantization.
    BaselineFixedAlpha,
    /// Calibration-current matching by fixed-point iteration.
    BaselineCalibration,
}

impl MappingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MappingMethod::Proposed => "proposed",
            MappingMethod::BaselineFixedAlpha => "baseline-fixed-alpha",
            MappingMethod::BaselineCalibration => "baseline-calibration",
        }
    }
}

/// Squared-Frobenius error decomposition of a candidate mapping.
///
/// `value_range` is measured before quantization, `total` after; `precision`
/// is their difference, clamped at zero against solver noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBreakdown<T> {
    pub total: T,
    pub value_range: T,
    pub precision: T,
}

impl<T: Scalar> ErrorBreakdown<T> {
    pub fn from_components(total: T, value_range: T) -> Self {
        let precision = (total - value_range).max(T::zero());
        Self {
            total,
            value_range,
            precision,
        }
    }
}

/// Extra observability attached to a [`MappingSolution`].
#[derive(Debug, Clone)]
pub struct MappingMetadata<T> {
    /// Error of the best alpha-search iterate, before redistribution.
    pub error_at_alpha_search: Option<ErrorBreakdown<T>>,
    /// Calibration residual `||(W - W^r) v_cal|| / ||W v_cal||` of the final
    /// pre-quantization grid, when a calibration vector was involved.
    pub calibration_residual: Option<T>,
    /// Rows that had no adjustable cell during redistribution.
    pub rows_without_adjustable: Vec<usize>,
    /// Cells whose state solve failed to converge or left [0, 1].
    pub flagged_cells: Vec<FlaggedCell>,
    /// Alpha-search iterations actually run.
    pub alpha_iterations: usize,
}

impl<T> Default for MappingMetadata<T> {
    fn default() -> Self {
        Self {
            error_at_alpha_search: None,
            calibration_residual: None,
            rows_without_adjustable: Vec::new(),
            flagged_cells: Vec::new(),
            alpha_iterations: 0,
        }
    }
}

/// Full mapping artifact: conductances, scaling factor, states, provenance.
#[derive(Debug, Clone)]
pub struct MappingSolution<T> {
    pub g: ConductanceGrid<T>,
    pub g_quantized: ConductanceGrid<T>,
    pub alpha: T,
    pub s: Option<Array2<T>>,
    pub method: MappingMethod,
    pub error: ErrorBreakdown<T>,
    pub metadata: MappingMetadata<T>,
}

/// Linear map of `W` into the conductance range: `g = clamp(alpha * W)`.
pub fn linear_map_initial<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    alpha: T,
) -> Result<ConductanceGrid<T>> {
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(CoreError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let values = w
        .values()
        .mapv(|wij| clamp(alpha * wij, config.g_min, config.g_max));
    ConductanceGrid::new(values, config)
}

/// Snap every conductance to the nearest of the `2^bits` equidistant levels
/// spanning `[g_min, g_max]`; ties round up.
pub fn quantize_grid<T: Scalar>(
    g: &ConductanceGrid<T>,
    config: &CrossbarConfig<T>,
) -> Result<ConductanceGrid<T>> {
    let step = config.quantization_step();
    let top = T::cast((config.levels() - 1) as f64);
    let values = g.values().mapv(|gv| {
        let level = ((gv - config.g_min) / step + T::half()).floor().min(top);
        config.g_min + level * step
    });
    ConductanceGrid::new(values, config)
}

/// Utilization of the programmable range: `(mean g - g_min) / (g_max - g_min)`.
pub fn utilization<T: Scalar>(g: &ConductanceGrid<T>, config: &CrossbarConfig<T>) -> T {
    let count = T::cast((g.nrows() * g.ncols()) as f64);
    let mean = g.values().iter().copied().sum::<T>() / count;
    (mean - config.g_min) / (config.g_max - config.g_min)
}

/// Total / value-range / precision error decomposition of a grid at `alpha`.
pub fn error_decomposition<T: Scalar>(
    w: &TargetMatrix<T>,
    g: &ConductanceGrid<T>,
    alpha: T,
    config: &CrossbarConfig<T>,
) -> Result<ErrorBreakdown<T>> {
    let solver = CrossbarSolver::new(config)?;
    error_decomposition_with(&solver, w, g, alpha)
}

/// Same as [`error_decomposition`] with a reusable solver.
pub fn error_decomposition_with<T: Scalar>(
    solver: &CrossbarSolver<T>,
    w: &TargetMatrix<T>,
    g: &ConductanceGrid<T>,
    alpha: T,
) -> Result<ErrorBreakdown<T>> {
    let config = solver.config();
    let value_range = realization_error(solver, w, g, alpha)?;
    let quantized = quantize_grid(g, config)?;
    let total = realization_error(solver, w, &quantized, alpha)?;
    Ok(ErrorBreakdown::from_components(total, value_range))
}

/// `||W - G(g)/alpha||_F^2`.
pub(crate) fn realization_error<T: Scalar>(
    solver: &CrossbarSolver<T>,
    w: &TargetMatrix<T>,
    g: &ConductanceGrid<T>,
    alpha: T,
) -> Result<T> {
    let factor = solver.factor(g)?;
    let gm = solver.conductance_matrix(&factor);
    let diff = w.values() - &gm.mapv(|v| v / alpha);
    Ok(frob_norm_sq(&diff))
}

/// Shift target rows so the row-sum residual against a uniform calibration
/// vector cancels.
///
/// With `R = W^r - W`, rows with residual sum `r_i` spread `-r_i / c_i` over
/// their `c_i` adjustable cells (those programmed above the lowest
/// quantization level). Rows without adjustable cells are left unchanged and
/// reported.
pub fn redistribute_targets<T: Scalar>(
    w: &TargetMatrix<T>,
    w_realized: &Array2<T>,
    g: &ConductanceGrid<T>,
    config: &CrossbarConfig<T>,
) -> Result<(TargetMatrix<T>, Vec<usize>)> {
    let (n, m) = (w.nrows(), w.ncols());
    if w_realized.dim() != (n, m) || g.nrows() != n || g.ncols() != m {
        return Err(CoreError::InvalidInput(
            "redistribution inputs must share the target shape".into(),
        ));
    }
    // adjustable = strictly above the lowest level, robust to quantization
    let threshold = config.g_min + config.quantization_step() * T::half();
    let mut adjusted = w.values().clone();
    let mut stuck_rows = Vec::new();
    for i in 0..n {
        let mut residual_sum = T::zero();
        let mut adjustable = 0usize;
        for j in 0..m {
            residual_sum += w_realized[[i, j]] - w.values()[[i, j]];
            if g.values()[[i, j]] > threshold {
                adjustable += 1;
            }
        }
        if adjustable == 0 {
            stuck_rows.push(i);
            continue;
        }
        let share = residual_sum / T::cast(adjustable as f64);
        for j in 0..m {
            if g.values()[[i, j]] > threshold {
                // negative targets cannot be realized; the clamp loses exact
                // cancellation only when a shift would cross zero
                adjusted[[i, j]] = (adjusted[[i, j]] - share).max(T::zero());
            }
        }
    }
    Ok((TargetMatrix::new(adjusted)?, stuck_rows))
}

/// Relative calibration residual `||(W - W^r) v_cal|| / ||W v_cal||` for a
/// uniform calibration vector; the norm ratio is scale-free so the uniform
/// value itself cancels.
pub fn calibration_residual<T: Scalar>(
    w: &TargetMatrix<T>,
    w_realized: &Array2<T>,
) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..w.nrows() {
        let mut diff = T::zero();
        let mut wsum = T::zero();
        for j in 0..w.ncols() {
            diff += w.values()[[i, j]] - w_realized[[i, j]];
            wsum += w.values()[[i, j]];
        }
        num += diff * diff;
        den += wsum * wsum;
    }
    if den == T::zero() {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
