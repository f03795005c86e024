//! Multiplicative search for the scaling factor balancing value-range and
//! precision errors.

use crate::config::CrossbarConfig;
use crate::error::{CoreError, Result};
use crate::grid::{ConductanceGrid, TargetMatrix};
use crate::mna::CrossbarSolver;
use crate::scalar::Scalar;

use super::descent::{descend_with, DescentOptions};
use super::{error_decomposition_with, linear_map_initial, ErrorBreakdown};

#[derive(Debug, Clone)]
pub struct AlphaSearchParams<T> {
    /// Initial guess; `None` maps the largest target entry to half of `g_max`.
    pub alpha0: Option<T>,
    /// Multiplicative step in (0, 1).
    pub beta: T,
    /// Consecutive non-improving iterations tolerated before stopping.
    pub patience: usize,
    /// Hard iteration cap.
    pub max_iters: usize,
    pub descent: DescentOptions<T>,
}

impl<T: Scalar> Default for AlphaSearchParams<T> {
    fn default() -> Self {
        Self {
            alpha0: None,
            beta: T::cast(0.1),
            patience: 3,
            max_iters: 40,
            descent: DescentOptions::default(),
        }
    }
}

impl<T: Scalar> AlphaSearchParams<T> {
    fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(CoreError::InvalidInput(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.patience == 0 {
            return Err(CoreError::InvalidInput("patience must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolve the initial scaling factor for a target matrix.
    pub fn resolve_alpha0(&self, w: &TargetMatrix<T>, config: &CrossbarConfig<T>) -> T {
        match self.alpha0 {
            Some(a) => a,
            None => {
                let wmax = w.max_entry();
                if wmax > T::zero() {
                    T::half() * config.g_max / wmax
                } else {
                    config.g_max
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlphaSearchResult<T> {
    pub alpha: T,
    pub error: ErrorBreakdown<T>,
    /// Conductances found by the descent at the winning alpha (pre-quantization).
    pub g: ConductanceGrid<T>,
    pub iterations: usize,
    /// Every (alpha, error) pair evaluated along the way.
    pub trace: Vec<(T, ErrorBreakdown<T>)>,
}

/// Walk the scaling factor toward balanced value-range and precision errors,
/// keeping the best-total-error candidate seen.
///
/// When value-range errors dominate, the scaling shrinks (lower utilization
/// eases IR-drop clipping); when precision errors dominate, it grows. The best
/// candidate includes the very first iterate, so the returned total error
/// never exceeds the one at `alpha0`.
pub fn search_alpha<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    params: &AlphaSearchParams<T>,
) -> Result<AlphaSearchResult<T>> {
    params.validate()?;
    let solver = CrossbarSolver::new(config)?;
    search_alpha_with(&solver, w, params)
}

pub(crate) fn search_alpha_with<T: Scalar>(
    solver: &CrossbarSolver<T>,
    w: &TargetMatrix<T>,
    params: &AlphaSearchParams<T>,
) -> Result<AlphaSearchResult<T>> {
    params.validate()?;
    let config = solver.config();
    let mut alpha = params.resolve_alpha0(w, config);
    let mut best: Option<(T, ErrorBreakdown<T>, ConductanceGrid<T>)> = None;
    let mut trace = Vec::new();
    let mut stale = 0usize;
    let mut iterations = 0usize;

    while iterations < params.max_iters {
        let g0 = linear_map_initial(w, config, alpha)?;
        let descent = descend_with(solver, w, alpha, &g0, &params.descent)?;
        let error = error_decomposition_with(solver, w, &descent.g, alpha)?;
        trace.push((alpha, error));
        iterations += 1;

        let improved = best
            .as_ref()
            .map(|(_, be, _)| error.total < be.total)
            .unwrap_or(true);
        if improved {
            best = Some((alpha, error, descent.g));
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                break;
            }
        }

        alpha = if error.value_range > error.precision {
            alpha * (T::one() - params.beta)
        } else {
            alpha * (T::one() + params.beta)
        };
    }

    let (alpha, error, g) = best.expect("at least one alpha evaluated");
    Ok(AlphaSearchResult {
        alpha,
        error,
        g,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn params_are_validated() {
        let w = TargetMatrix::new(Array2::from_elem((2, 2), 0.5)).unwrap();
        let cfg = CrossbarConfig::with_dims(2, 2).unwrap();
        let bad = AlphaSearchParams::<f64> { beta: 1.5, ..AlphaSearchParams::default() };
        assert!(search_alpha(&w, &cfg, &bad).is_err());
        let bad = AlphaSearchParams::<f64> { patience: 0, ..AlphaSearchParams::default() };
        assert!(search_alpha(&w, &cfg, &bad).is_err());
    }

    #[test]
    fn default_alpha0_targets_half_range() {
        let w = TargetMatrix::new(Array2::from_elem((2, 2), 2.0f64)).unwrap();
        let cfg = CrossbarConfig::with_dims(2, 2).unwrap();
        let p = AlphaSearchParams::default();
        let a0 = p.resolve_alpha0(&w, &cfg);
        assert!((a0 * 2.0 - 0.5 * cfg.g_max).abs() < 1e-18);
    }

    #[test]
    fn returned_error_never_exceeds_alpha0s() {
        let cfg = CrossbarConfig::with_dims(4, 4).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
            ((i * 13 + j * 7) % 11) as f64 / 11.0
        }))
        .unwrap();
        let params = AlphaSearchParams { max_iters: 8, ..AlphaSearchParams::default() };
        let res = search_alpha(&w, &cfg, &params).unwrap();
        let at_alpha0 = res.trace[0].1;
        assert!(res.error.total <= at_alpha0.total);
        assert!(res.iterations <= 8);
    }
}
