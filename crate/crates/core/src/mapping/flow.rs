//! End-to-end mapping flows: the proposed pipeline and two prior-art baselines.

use ndarray::{Array2, ArrayView1};

use crate::config::CrossbarConfig;
use crate::device::DeviceModel;
use crate::error::{CoreError, Result};
use crate::grid::{ConductanceGrid, TargetMatrix};
use crate::mna::CrossbarSolver;
use crate::scalar::{clamp, Scalar};

use super::alpha::{search_alpha_with, AlphaSearchParams};
use super::descent::descend_with;
use super::state::solve_states_from_voltages;
use super::{
    error_decomposition_with, linear_map_initial, quantize_grid, redistribute_targets,
    MappingMetadata, MappingMethod, MappingSolution,
};

/// Weighted calibration residual `||(W - W^r) v|| / ||W v||`.
pub fn weighted_calibration_residual<T: Scalar>(
    w: &TargetMatrix<T>,
    w_realized: &Array2<T>,
    v_cal: ArrayView1<'_, T>,
) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..w.nrows() {
        let mut diff = T::zero();
        let mut wsum = T::zero();
        for j in 0..w.ncols() {
            diff += (w.values()[[i, j]] - w_realized[[i, j]]) * v_cal[j];
            wsum += w.values()[[i, j]] * v_cal[j];
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

fn validate_v_cal<T: Scalar>(config: &CrossbarConfig<T>, v_cal: ArrayView1<'_, T>) -> Result<()> {
    if v_cal.len() != config.cols {
        return Err(CoreError::InvalidInput(format!(
            "calibration vector length {} does not match {} columns",
            v_cal.len(),
            config.cols
        )));
    }
    for &v in v_cal.iter() {
        if !v.is_finite() || v < T::zero() || v > config.v_max {
            return Err(CoreError::InvalidInput(format!(
                "calibration voltage {v} outside [0, {}]",
                config.v_max
            )));
        }
    }
    Ok(())
}

/// The proposed mapping flow: idealize devices, search the scaling factor,
/// redistribute calibration errors, re-descend, quantize, and (when a device
/// model is supplied) solve for state variables.
pub fn map_matrix<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    model: Option<&DeviceModel<T>>,
    params: &AlphaSearchParams<T>,
    v_cal: ArrayView1<'_, T>,
) -> Result<MappingSolution<T>> {
    if w.nrows() != config.rows || w.ncols() != config.cols {
        return Err(CoreError::InvalidInput(format!(
            "target shape {}x{} does not match tile {}x{}",
            w.nrows(),
            w.ncols(),
            config.rows,
            config.cols
        )));
    }
    validate_v_cal(config, v_cal)?;
    let solver = CrossbarSolver::new(config)?;

    // steps 1-2: ideal-device bounds come from the config; find alpha
    let search = search_alpha_with(&solver, w, params)?;
    let alpha = search.alpha;

    // step 3: cancel row-sum residuals against the calibration input, remap
    let factor = solver.factor(&search.g)?;
    let realized = solver.conductance_matrix(&factor).mapv(|v| v / alpha);
    let (w_t, stuck_rows) = redistribute_targets(w, &realized, &search.g, config)?;
    let redescended = descend_with(&solver, &w_t, alpha, &search.g, &params.descent)?;

    let factor = solver.factor(&redescended.g)?;
    let realized = solver.conductance_matrix(&factor).mapv(|v| v / alpha);
    let calibration = weighted_calibration_residual(w, &realized, v_cal);

    // step 4 onward: quantize, then convert conductances to states
    let g_quantized = quantize_grid(&redescended.g, config)?;
    let error = error_decomposition_with(&solver, w, &redescended.g, alpha)?;

    let mut metadata = MappingMetadata {
        error_at_alpha_search: Some(search.error),
        calibration_residual: Some(calibration),
        rows_without_adjustable: stuck_rows,
        flagged_cells: Vec::new(),
        alpha_iterations: search.iterations,
    };

    let s = match model {
        None => None,
        Some(model) => {
            let qfactor = solver.factor(&g_quantized)?;
            let voltages = solver.node_voltages(&qfactor, v_cal)?;
            let state = solve_states_from_voltages(&g_quantized, config, model, &voltages)?;
            metadata.flagged_cells = state.flagged;
            Some(state.s)
        }
    };

    Ok(MappingSolution {
        g: redescended.g,
        g_quantized,
        alpha,
        s,
        method: MappingMethod::Proposed,
        error,
        metadata,
    })
}

/// Fixed-alpha descent baseline: linear initialization, descent, quantization.
/// No alpha search, no redistribution, no state solve.
pub fn baseline_fixed_alpha_map<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    alpha: T,
) -> Result<MappingSolution<T>> {
    if w.nrows() != config.rows || w.ncols() != config.cols {
        return Err(CoreError::InvalidInput(format!(
            "target shape {}x{} does not match tile {}x{}",
            w.nrows(),
            w.ncols(),
            config.rows,
            config.cols
        )));
    }
    let solver = CrossbarSolver::new(config)?;
    let g0 = linear_map_initial(w, config, alpha)?;
    let params = AlphaSearchParams::<T>::default();
    let descent = descend_with(&solver, w, alpha, &g0, &params.descent)?;
    let g_quantized = quantize_grid(&descent.g, config)?;
    let error = error_decomposition_with(&solver, w, &descent.g, alpha)?;
    Ok(MappingSolution {
        g: descent.g,
        g_quantized,
        alpha,
        s: None,
        method: MappingMethod::BaselineFixedAlpha,
        error,
        metadata: MappingMetadata::default(),
    })
}

/// Calibration-current baseline: linearly map `W` onto the full conductance
/// range (which fixes alpha implicitly), then tune each cell so its current
/// under the calibration input matches the ideal current, by fixed-point
/// iteration on the node voltages.
pub fn baseline_calibration_map<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    model: Option<&DeviceModel<T>>,
    v_cal: ArrayView1<'_, T>,
) -> Result<MappingSolution<T>> {
    if w.nrows() != config.rows || w.ncols() != config.cols {
        return Err(CoreError::InvalidInput(format!(
            "target shape {}x{} does not match tile {}x{}",
            w.nrows(),
            w.ncols(),
            config.rows,
            config.cols
        )));
    }
    validate_v_cal(config, v_cal)?;
    let solver = CrossbarSolver::new(config)?;
    let (n, m) = (config.rows, config.cols);

    let wmax = w.max_entry();
    let alpha = if wmax > T::zero() {
        config.g_max / wmax
    } else {
        config.g_max
    };
    let g_ideal = linear_map_initial(w, config, alpha)?;
    let i_ideal = Array2::from_shape_fn((n, m), |(i, j)| g_ideal.values()[[i, j]] * v_cal[j]);
    let w_v: Vec<T> = (0..n)
        .map(|i| (0..m).map(|j| w.values()[[i, j]] * v_cal[j]).sum())
        .collect();
    let w_v_norm = w_v.iter().map(|&x| x * x).sum::<T>().sqrt();

    let tol = T::cast(1e-8).max(T::epsilon() * T::cast(100.0));
    let dv_floor = config.v_max * T::cast(1e-12);
    let mut g = g_ideal.clone();
    let mut best_g = g.clone();
    let mut best_residual = T::infinity();
    let mut converged = false;
    for _ in 0..200 {
        let factor = solver.factor(&g)?;
        let voltages = solver.node_voltages(&factor, v_cal)?;

        // calibration residual of this iterate, from row current conservation
        let mut num = T::zero();
        for i in 0..n {
            let out: T = (0..m).map(|j| voltages.i_cell[[i, j]]).sum();
            let diff = w_v[i] - out / alpha;
            num += diff * diff;
        }
        let residual = if w_v_norm > T::zero() {
            num.sqrt() / w_v_norm
        } else {
            num.sqrt()
        };
        if residual < best_residual {
            best_residual = residual;
            best_g = g.clone();
        }

        let mut max_change = T::zero();
        let next = Array2::from_shape_fn((n, m), |(i, j)| {
            let dv = voltages.v_col[[i, j]] - voltages.v_row[[i, j]];
            let target = i_ideal[[i, j]];
            let new = if target <= T::zero() {
                config.g_min
            } else if dv <= dv_floor {
                config.g_max
            } else {
                clamp(target / dv, config.g_min, config.g_max)
            };
            new
        });
        for ((i, j), &gv) in next.indexed_iter() {
            let change = (gv - g.values()[[i, j]]).abs() / g.values()[[i, j]];
            max_change = max_change.max(change);
        }
        g = ConductanceGrid::new(next, config)?;
        if max_change < tol {
            converged = true;
            break;
        }
    }
    if converged {
        // score the fixed point itself
        let factor = solver.factor(&g)?;
        let voltages = solver.node_voltages(&factor, v_cal)?;
        let mut num = T::zero();
        for i in 0..n {
            let out: T = (0..m).map(|j| voltages.i_cell[[i, j]]).sum();
            let diff = w_v[i] - out / alpha;
            num += diff * diff;
        }
        let residual = if w_v_norm > T::zero() {
            num.sqrt() / w_v_norm
        } else {
            num.sqrt()
        };
        if residual < best_residual {
            best_residual = residual;
            best_g = g;
        }
    }

    let g = best_g;
    let g_quantized = quantize_grid(&g, config)?;
    let error = error_decomposition_with(&solver, w, &g, alpha)?;

    let mut metadata = MappingMetadata {
        error_at_alpha_search: None,
        calibration_residual: Some(best_residual),
        rows_without_adjustable: Vec::new(),
        flagged_cells: Vec::new(),
        alpha_iterations: 0,
    };

    let s = match model {
        None => None,
        Some(model) => {
            let qfactor = solver.factor(&g_quantized)?;
            let voltages = solver.node_voltages(&qfactor, v_cal)?;
            let state = solve_states_from_voltages(&g_quantized, config, model, &voltages)?;
            metadata.flagged_cells = state.flagged;
            Some(state.s)
        }
    };

    Ok(MappingSolution {
        g,
        g_quantized,
        alpha,
        s,
        method: MappingMethod::BaselineCalibration,
        error,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn calibration_baseline_is_exact_without_parasitics() {
        let cfg = CrossbarConfig::<f64>::new(3, 3, 0.0, 0.0, 0.0, 1.0 / 3.0e6, 5e-4, 8, 0.2).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((3, 3), |(i, j)| {
            0.2 + 0.1 * ((i * 3 + j) as f64 / 9.0)
        }))
        .unwrap();
        let v_cal = Array1::from_elem(3, cfg.v_cal());
        let sol = baseline_calibration_map(&w, &cfg, None, v_cal.view()).unwrap();
        // no parasitics: first iterate already realizes G_ideal exactly
        let expected = linear_map_initial(&w, &cfg, sol.alpha).unwrap();
        for (a, b) in sol.g.values().iter().zip(expected.values().iter()) {
            assert!((a - b).abs() < 1e-15 * b);
        }
        assert!(sol.metadata.calibration_residual.unwrap() < 1e-12);
    }

    #[test]
    fn calibration_baseline_meets_its_guarantee_with_mild_parasitics() {
        let cfg = CrossbarConfig::<f64>::new(8, 8, 0.1, 1.0, 1.0, 1.0 / 3.0e6, 5e-4, 8, 0.2).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((8, 8), |(i, j)| {
            0.05 + ((i * 31 + j * 17) % 19) as f64 / 19.0
        }))
        .unwrap();
        let v_cal = Array1::from_elem(8, cfg.v_cal());
        let sol = baseline_calibration_map(&w, &cfg, None, v_cal.view()).unwrap();
        let solver = CrossbarSolver::new(&cfg).unwrap();
        let factor = solver.factor(&sol.g).unwrap();
        let realized = solver.conductance_matrix(&factor).mapv(|v| v / sol.alpha);
        let resid = weighted_calibration_residual(&w, &realized, v_cal.view());
        assert!(resid < 1e-3, "calibration residual {resid}");
    }

    #[test]
    fn fixed_alpha_baseline_is_exact_in_the_decoupled_case() {
        let cfg = CrossbarConfig::<f64>::new(3, 3, 0.0, 0.0, 0.0, 1.0 / 3.0e6, 5e-4, 8, 0.2).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((3, 3), |(i, j)| {
            0.3 + 0.05 * ((i + j) as f64)
        }))
        .unwrap();
        let alpha = 0.5 * cfg.g_max / 0.6;
        let sol = baseline_fixed_alpha_map(&w, &cfg, alpha).unwrap();
        assert!(sol.error.value_range < 1e-12);
    }

    #[test]
    fn alpha_sensitivity_shows_in_error_breakdowns() {
        let cfg = CrossbarConfig::with_dims(4, 4).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
            ((i * 5 + j * 3) % 8) as f64 / 8.0
        }))
        .unwrap();
        let a1 = 0.1 * cfg.g_max;
        let a2 = cfg.g_max;
        let s1 = baseline_fixed_alpha_map(&w, &cfg, a1).unwrap();
        let s2 = baseline_fixed_alpha_map(&w, &cfg, a2).unwrap();
        assert_ne!(s1.error.total, s2.error.total);
    }

    #[test]
    fn map_matrix_handles_the_zero_matrix() {
        let cfg = CrossbarConfig::<f64>::with_dims(2, 2).unwrap();
        let w = TargetMatrix::new(Array2::zeros((2, 2))).unwrap();
        let v_cal = Array1::from_elem(2, cfg.v_cal());
        let sol = map_matrix(&w, &cfg, None, &AlphaSearchParams::default(), v_cal.view()).unwrap();
        assert!(sol.g.values().iter().all(|&g| g == cfg.g_min));
        assert_eq!(sol.alpha, cfg.g_max);
        // the floor leakage is the whole (tiny) realization error
        assert!(sol.error.total > 0.0);
        assert_eq!(sol.metadata.rows_without_adjustable, vec![0, 1]);
    }

    #[test]
    fn map_matrix_single_cell_is_within_the_quantization_bound() {
        let cfg = CrossbarConfig::with_dims(1, 1).unwrap();
        let w = TargetMatrix::new(array![[0.7]]).unwrap();
        let v_cal = Array1::from_elem(1, cfg.v_cal());
        let sol = map_matrix(&w, &cfg, None, &AlphaSearchParams::default(), v_cal.view()).unwrap();
        let solver = CrossbarSolver::new(&cfg).unwrap();
        let factor = solver.factor(&sol.g_quantized).unwrap();
        let realized = solver.conductance_matrix(&factor)[[0, 0]] / sol.alpha;
        let rel = (realized - 0.7f64).abs() / 0.7;
        // one cell: quantization is the only irreducible error source
        let step_rel = cfg.quantization_step() / (sol.alpha * 0.7);
        assert!(rel <= step_rel, "rel {rel} vs step bound {step_rel}");
    }
}
