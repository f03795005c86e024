//! Projected steepest descent on `F(g) = ||W - G(g)/alpha||_F^2`.
//!
//! Gradients come from the adjoint solve; the step size starts from a
//! Barzilai-Borwein estimate and backtracks under a projected Armijo rule, so
//! the objective never increases across accepted iterations.

use ndarray::Array2;

use crate::config::CrossbarConfig;
use crate::error::Result;
use crate::grid::{frob_norm_sq, ConductanceGrid, TargetMatrix};
use crate::mna::CrossbarSolver;
use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone)]
pub struct DescentOptions<T> {
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Stop once the relative objective decrease over `window` iterations
    /// falls below this.
    pub rel_tol: T,
    pub window: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Backtracking halvings per iteration before giving up on the step.
    pub max_backtracks: usize,
}

impl<T: Scalar> Default for DescentOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: T::cast(1e-6),
            window: 5,
            armijo: T::cast(1e-4),
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentResult<T> {
    pub g: ConductanceGrid<T>,
    /// Final objective `||W - G/alpha||_F^2` (pre-quantization).
    pub objective: T,
    pub iterations: usize,
}

/// Minimize `||W - G(g)/alpha||_F^2` over the box `[g_min, g_max]^(N*M)`.
pub fn descend_conductances<T: Scalar>(
    w: &TargetMatrix<T>,
    alpha: T,
    config: &CrossbarConfig<T>,
    g_init: &ConductanceGrid<T>,
    options: &DescentOptions<T>,
) -> Result<DescentResult<T>> {
    let solver = CrossbarSolver::new(config)?;
    descend_with(&solver, w, alpha, g_init, options)
}

/// Same as [`descend_conductances`] with a reusable solver.
pub fn descend_with<T: Scalar>(
    solver: &CrossbarSolver<T>,
    w: &TargetMatrix<T>,
    alpha: T,
    g_init: &ConductanceGrid<T>,
    options: &DescentOptions<T>,
) -> Result<DescentResult<T>> {
    let config = solver.config();
    let (lo, hi) = (config.g_min, config.g_max);
    let project = |m: &Array2<T>| m.mapv(|v| clamp(v, lo, hi));

    let mut g = project(g_init.values());
    let mut factor = solver.factor_unchecked(&g)?;
    let mut basis = solver.basis(&factor);
    let mut residual = w.values() - &basis.g_matrix.mapv(|v| v / alpha);
    let mut objective = frob_norm_sq(&residual);

    let mut best_g = g.clone();
    let mut best_obj = objective;

    // initial trial step sized so the first move spans a modest fraction of the box
    let mut grad = solver.frobenius_gradient(&factor, &basis, &residual, alpha);
    let mut step = initial_step(&grad, hi - lo);
    let mut history = std::collections::VecDeque::with_capacity(options.window + 1);
    history.push_back(objective);

    let mut iterations = 0;
    while iterations < options.max_iters {
        if grad.iter().all(|&d| d == T::zero()) {
            break;
        }
        // backtracking under the projected Armijo condition
        let mut accepted = None;
        let mut t = step;
        for _ in 0..options.max_backtracks {
            let trial = project(&(&g - &grad.mapv(|d| d * t)));
            let move_sq = frob_norm_sq(&(&trial - &g));
            if move_sq == T::zero() {
                t = t * T::half();
                continue;
            }
            let trial_factor = solver.factor_unchecked(&trial)?;
            let trial_basis = solver.basis(&trial_factor);
            let trial_residual = w.values() - &trial_basis.g_matrix.mapv(|v| v / alpha);
            let trial_obj = frob_norm_sq(&trial_residual);
            if trial_obj <= objective - options.armijo * move_sq / t {
                accepted = Some((trial, trial_factor, trial_basis, trial_residual, trial_obj));
                break;
            }
            t = t * T::half();
        }
        let Some((new_g, new_factor, new_basis, new_residual, new_obj)) = accepted else {
            break; // no descent direction survives projection at any step size
        };
        let prev_g = g;
        let prev_grad = grad;
        g = new_g;
        factor = new_factor;
        basis = new_basis;
        residual = new_residual;
        objective = new_obj;
        iterations += 1;
        if objective < best_obj {
            best_obj = objective;
            best_g = g.clone();
        }

        grad = solver.frobenius_gradient(&factor, &basis, &residual, alpha);

        // Barzilai-Borwein step for the next iteration
        let dg = &g - &prev_g;
        let dgrad = &grad - &prev_grad;
        let sy = dg.iter().zip(dgrad.iter()).map(|(&a, &b)| a * b).sum::<T>();
        let yy = frob_norm_sq(&dgrad);
        step = if sy > T::zero() && yy > T::zero() && (sy / yy).is_finite() {
            sy / yy
        } else {
            t * T::two()
        };

        history.push_back(objective);
        if history.len() > options.window {
            let old = history.pop_front().unwrap();
            let drop = old - objective;
            if drop <= options.rel_tol * old.max(T::min_positive_value()) {
                break;
            }
        }
    }

    Ok(DescentResult {
        g: ConductanceGrid::new(best_g, config)?,
        objective: best_obj,
        iterations,
    })
}

fn initial_step<T: Scalar>(grad: &Array2<T>, range: T) -> T {
    let gmax = grad.iter().fold(T::zero(), |acc, &d| acc.max(d.abs()));
    if gmax > T::zero() {
        T::cast(0.25) * range / gmax
    } else {
        T::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::linear_map_initial;
    use crate::mna::extract_conductance_matrix;
    use ndarray::array;

    #[test]
    fn decoupled_problem_is_solved_exactly() {
        let cfg = crate::config::CrossbarConfig::<f64>::new(3, 3, 0.0, 0.0, 0.0, 1e-7, 5e-4, 8, 0.2)
            .unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((3, 3), |(i, j)| {
            0.2 + 0.08 * (i as f64) + 0.05 * (j as f64)
        }))
        .unwrap();
        let alpha = 5e-4; // alpha * max(W) well inside the range
        let g0 = ConductanceGrid::uniform(1e-4, &cfg).unwrap();
        let res =
            descend_conductances(&w, alpha, &cfg, &g0, &DescentOptions::default()).unwrap();
        let wnorm = frob_norm_sq(w.values());
        assert!(res.objective <= 1e-10 * wnorm, "objective {}", res.objective);
        for ((i, j), &gv) in res.g.values().indexed_iter() {
            assert!((gv - alpha * w.values()[[i, j]]).abs() < 1e-9 * cfg.g_max);
        }
    }

    #[test]
    fn recovers_a_known_interior_grid() {
        let cfg = crate::config::CrossbarConfig::with_dims(4, 4).unwrap();
        let g_true = ConductanceGrid::new(
            Array2::from_shape_fn((4, 4), |(i, j)| 4e-5 + 2.3e-5 * ((i * 4 + j) as f64)),
            &cfg,
        )
        .unwrap();
        let alpha = 1e-3;
        let gm = extract_conductance_matrix(&cfg, &g_true).unwrap();
        let w = TargetMatrix::new(gm.mapv(|v| v / alpha)).unwrap();
        let g0 = linear_map_initial(&w, &cfg, alpha).unwrap();
        let res =
            descend_conductances(&w, alpha, &cfg, &g0, &DescentOptions::default()).unwrap();
        let wnorm = frob_norm_sq(w.values());
        assert!(
            res.objective < 1e-10 * wnorm,
            "objective {} vs bound {}",
            res.objective,
            1e-10 * wnorm
        );
    }

    #[test]
    fn overrange_entry_saturates_and_carries_the_residual() {
        let cfg = crate::config::CrossbarConfig::<f64>::new(2, 2, 0.0, 0.0, 0.0, 1e-7, 5e-4, 8, 0.2)
            .unwrap();
        // one entry requires 2x the top conductance at this alpha
        let w = TargetMatrix::new(array![[2.0f64, 0.5], [0.4, 0.3]]).unwrap();
        let alpha = 5e-4;
        let g0 = ConductanceGrid::uniform(1e-4, &cfg).unwrap();
        let res =
            descend_conductances(&w, alpha, &cfg, &g0, &DescentOptions::default()).unwrap();
        assert_eq!(res.g.values()[[0, 0]], cfg.g_max);
        let gm = extract_conductance_matrix(&cfg, &res.g).unwrap();
        let wr = gm.mapv(|v| v / alpha);
        let err = w.values() - &wr;
        // residual concentrated on the clipped cell
        assert!(err[[0, 0]].abs() > 0.99);
        assert!(err[[0, 1]].abs() < 1e-6);
        assert!(err[[1, 0]].abs() < 1e-6);
        assert!(err[[1, 1]].abs() < 1e-6);
    }

    #[test]
    fn objective_never_increases() {
        // indirectly: result objective must not exceed the initial objective
        let cfg = crate::config::CrossbarConfig::with_dims(4, 4).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
            ((i * 31 + j * 17) % 10) as f64 / 10.0
        }))
        .unwrap();
        let alpha = 2.5e-4;
        let g0 = linear_map_initial(&w, &cfg, alpha).unwrap();
        let solver = CrossbarSolver::new(&cfg).unwrap();
        let init_obj = {
            let f = solver.factor(&g0).unwrap();
            let gm = solver.conductance_matrix(&f);
            frob_norm_sq(&(w.values() - &gm.mapv(|v| v / alpha)))
        };
        let res =
            descend_conductances(&w, alpha, &cfg, &g0, &DescentOptions::default()).unwrap();
        assert!(res.objective <= init_obj);
    }
}
