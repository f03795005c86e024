//! Representable-value analysis, error sweeps, noise injection, and the
//! output-error metric used by the experiments.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::CrossbarConfig;
use crate::device::DeviceModel;
use crate::error::{CoreError, Result};
use crate::grid::{ConductanceGrid, TargetMatrix};
use crate::mapping::{
    error_decomposition_with, linear_map_initial, utilization, DescentOptions, ErrorBreakdown,
    MappingSolution,
};
use crate::mna::CrossbarSolver;
use crate::nonlinear::{NewtonOptions, NonlinearSolver};
use crate::scalar::{clamp, Scalar};

/// Background occupancy assumed for the untouched cells of a range probe.
#[derive(Debug, Clone)]
pub enum BackgroundFill<T> {
    AllGMin,
    /// Worst-case IR-drop: every other cell fully conductive (the default).
    AllGMax,
    Grid(ConductanceGrid<T>),
}

/// Per-cell realizable value bounds at a given scaling factor and background.
#[derive(Debug, Clone)]
pub struct ValueRangeMap<T> {
    pub lo: Array2<T>,
    pub hi: Array2<T>,
}

impl<T: Scalar> ValueRangeMap<T> {
    /// Length `hi - lo` of each cell's realizable interval.
    pub fn range_length(&self) -> Array2<T> {
        &self.hi - &self.lo
    }
}

/// Realizable [lo, hi] matrix-value interval of every cell: set the probed
/// cell to `g_min` / `g_max` against the background fill and read the value
/// the tile realizes there.
///
/// The lower bound is not zero: sneak paths through the rest of the array
/// deliver current even when the probed cell is fully resistive.
pub fn value_range_map<T: Scalar>(
    config: &CrossbarConfig<T>,
    alpha: T,
    background: &BackgroundFill<T>,
) -> Result<ValueRangeMap<T>> {
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(CoreError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let (n, m) = (config.rows, config.cols);
    let base = match background {
        BackgroundFill::AllGMin => ConductanceGrid::uniform(config.g_min, config)?,
        BackgroundFill::AllGMax => ConductanceGrid::uniform(config.g_max, config)?,
        BackgroundFill::Grid(g) => {
            if g.nrows() != n || g.ncols() != m {
                return Err(CoreError::InvalidInput(
                    "background grid shape does not match config".into(),
                ));
            }
            g.clone()
        }
    };
    let solver = CrossbarSolver::new(config)?;
    let mut lo = Array2::zeros((n, m));
    let mut hi = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            for (bound, out) in [(config.g_min, &mut lo), (config.g_max, &mut hi)] {
                let mut probe = base.values().clone();
                probe[[i, j]] = bound;
                let grid = ConductanceGrid::new(probe, config)?;
                let factor = solver.factor(&grid)?;
                out[[i, j]] = solver.conductance_entry(&factor, i, j) / alpha;
            }
        }
    }
    Ok(ValueRangeMap { lo, hi })
}

/// One sample of an alpha sweep.
#[derive(Debug, Clone, Copy)]
pub struct AlphaSample<T> {
    pub alpha: T,
    pub error: ErrorBreakdown<T>,
    pub utilization: T,
}

/// Ordered alpha-sweep samples.
#[derive(Debug, Clone)]
pub struct ErrorCurve<T> {
    pub samples: Vec<AlphaSample<T>>,
}

/// Run the descent at every scaling factor and record the error decomposition
/// and conductance-range utilization.
pub fn sweep_alpha<T: Scalar>(
    w: &TargetMatrix<T>,
    config: &CrossbarConfig<T>,
    alphas: &[T],
) -> Result<ErrorCurve<T>> {
    for pair in alphas.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(CoreError::InvalidInput(
                "alpha samples must be strictly increasing".into(),
            ));
        }
    }
    let solver = CrossbarSolver::new(config)?;
    let options = DescentOptions::default();
    let mut samples = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !alpha.is_finite() || alpha <= T::zero() {
            return Err(CoreError::InvalidInput(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let g0 = linear_map_initial(w, config, alpha)?;
        let descent = crate::mapping::descend_with(&solver, w, alpha, &g0, &options)?;
        let error = error_decomposition_with(&solver, w, &descent.g, alpha)?;
        samples.push(AlphaSample {
            alpha,
            error,
            utilization: utilization(&descent.g, config),
        });
    }
    Ok(ErrorCurve { samples })
}

/// Static random-telegraph-noise perturbation: every entry is multiplied by
/// `(1 + eps)` with `eps` drawn uniformly from `[-delta, delta]`, then clamped
/// to the physical bounds. Deterministic under the seed.
pub fn apply_rtn_noise<T: Scalar>(
    values: &Array2<T>,
    delta: T,
    bounds: (T, T),
    seed: u64,
) -> Result<Array2<T>> {
    let delta_f = delta.to_f64().unwrap_or(f64::NAN);
    if !(0.0..=0.2).contains(&delta_f) {
        return Err(CoreError::InvalidInput(format!(
            "noise fraction must lie in [0, 0.2], got {delta}"
        )));
    }
    let (lo, hi) = bounds;
    if delta == T::zero() {
        return Ok(values.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(values.mapv(|v| {
        let eps = T::cast(rng.gen_range(-delta_f..=delta_f));
        clamp(v * (T::one() + eps), lo, hi)
    }))
}

/// Maximum output error of a mapped solution over a set of input vectors,
/// normalized by the largest ideal output magnitude over the same set.
///
/// Uses the device-level simulation when states and a model are available,
/// otherwise the linear model with the quantized conductances.
pub fn max_output_error<T: Scalar>(
    w: &TargetMatrix<T>,
    solution: &MappingSolution<T>,
    config: &CrossbarConfig<T>,
    model: Option<&DeviceModel<T>>,
    inputs: &[Array1<T>],
) -> Result<T> {
    if inputs.is_empty() {
        return Err(CoreError::InvalidInput(
            "need at least one input vector".into(),
        ));
    }
    let m = config.cols;
    for v in inputs {
        if v.len() != m {
            return Err(CoreError::InvalidInput(format!(
                "input length {} does not match {} columns",
                v.len(),
                m
            )));
        }
        for &x in v.iter() {
            if !x.is_finite() || x < T::zero() || x > config.v_max {
                return Err(CoreError::InvalidInput(format!(
                    "input voltage {x} outside [0, {}]",
                    config.v_max
                )));
            }
        }
    }
    let alpha = solution.alpha;

    enum Sim<'a, T: Scalar> {
        Linear(Array2<T>),
        Nonlinear(NonlinearSolver<T>, &'a Array2<T>),
    }
    let sim = match (&solution.s, model) {
        (Some(s), Some(model)) => Sim::Nonlinear(NonlinearSolver::new(config, model)?, s),
        _ => {
            let solver = CrossbarSolver::new(config)?;
            let factor = solver.factor(&solution.g_quantized)?;
            Sim::Linear(solver.conductance_matrix(&factor))
        }
    };

    let mut worst = T::zero();
    let mut scale = T::zero();
    let newton = NewtonOptions::default();
    for v in inputs {
        let ideal = ideal_product(w, v.view());
        let outputs = match &sim {
            Sim::Linear(gm) => gm.dot(v).mapv(|y| y / alpha),
            Sim::Nonlinear(solver, s) => {
                let sol = solver.simulate(s.view(), v.view(), &newton)?;
                sol.outputs.mapv(|y| y / alpha)
            }
        };
        for (yi, ri) in outputs.iter().zip(ideal.iter()) {
            worst = worst.max((*yi - *ri).abs());
            scale = scale.max(ri.abs());
        }
    }
    if scale == T::zero() {
        Ok(worst)
    } else {
        Ok(worst / scale)
    }
}

fn ideal_product<T: Scalar>(w: &TargetMatrix<T>, v: ArrayView1<'_, T>) -> Array1<T> {
    w.values().dot(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{baseline_fixed_alpha_map, quantize_grid};

    #[test]
    fn parasitic_free_ranges_are_uniform() {
        let cfg = CrossbarConfig::<f64>::new(3, 3, 0.0, 0.0, 0.0, 1.0 / 3.0e6, 5e-4, 8, 0.2).unwrap();
        let alpha = 1e-3;
        let map = value_range_map(&cfg, alpha, &BackgroundFill::AllGMax).unwrap();
        for &lo in map.lo.iter() {
            assert!((lo - cfg.g_min / alpha).abs() < 1e-15);
        }
        for &hi in map.hi.iter() {
            assert!((hi - cfg.g_max / alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn far_corner_has_the_shortest_range() {
        let cfg = CrossbarConfig::with_dims(8, 8).unwrap();
        let map = value_range_map(&cfg, 1e-3, &BackgroundFill::AllGMax).unwrap();
        let len = map.range_length();
        // near corner (0, M-1) adjoins both drivers; far corner is (N-1, 0)
        assert!(
            len[[7, 0]] < len[[0, 7]],
            "far {} vs near {}",
            len[[7, 0]],
            len[[0, 7]]
        );
    }

    #[test]
    fn larger_alpha_shrinks_realized_ranges() {
        let cfg = CrossbarConfig::with_dims(4, 4).unwrap();
        let small = value_range_map(&cfg, 1e-3, &BackgroundFill::AllGMax).unwrap();
        let large = value_range_map(&cfg, 4e-3, &BackgroundFill::AllGMax).unwrap();
        for (a, b) in large.range_length().iter().zip(small.range_length().iter()) {
            assert!(a < b);
        }
    }

    #[test]
    fn single_alpha_sweep_matches_direct_decomposition() {
        let cfg = CrossbarConfig::with_dims(4, 4).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
            ((i * 7 + j * 3) % 9) as f64 / 9.0
        }))
        .unwrap();
        let alpha = 2e-4;
        let curve = sweep_alpha(&w, &cfg, &[alpha]).unwrap();
        assert_eq!(curve.samples.len(), 1);
        let sample = curve.samples[0];
        let direct = baseline_fixed_alpha_map(&w, &cfg, alpha).unwrap();
        assert!((sample.error.total - direct.error.total).abs() <= 1e-12 * direct.error.total);
    }

    #[test]
    fn sweep_rejects_unsorted_alphas() {
        let cfg = CrossbarConfig::with_dims(2, 2).unwrap();
        let w = TargetMatrix::new(Array2::from_elem((2, 2), 0.5)).unwrap();
        assert!(sweep_alpha(&w, &cfg, &[2e-4, 1e-4]).is_err());
    }

    #[test]
    fn rtn_noise_is_deterministic_bounded_and_identity_at_zero() {
        let v = Array2::from_shape_fn((4, 4), |(i, j)| 1.0 + (i * 4 + j) as f64);
        let same = apply_rtn_noise(&v, 0.0, (0.0, 100.0), 7).unwrap();
        assert_eq!(same, v);
        let a = apply_rtn_noise(&v, 0.2, (0.0, 100.0), 7).unwrap();
        let b = apply_rtn_noise(&v, 0.2, (0.0, 100.0), 7).unwrap();
        assert_eq!(a, b);
        let c = apply_rtn_noise(&v, 0.2, (0.0, 100.0), 8).unwrap();
        assert_ne!(a, c);
        for (orig, pert) in v.iter().zip(a.iter()) {
            assert!((pert - orig).abs() <= 0.2 * orig + 1e-12);
        }
        assert!(apply_rtn_noise(&v, 0.25, (0.0, 100.0), 7).is_err());
    }

    #[test]
    fn rtn_noise_respects_bounds() {
        let v = Array2::from_elem((2, 2), 1.0);
        let a = apply_rtn_noise(&v, 0.2, (0.95, 1.05), 3).unwrap();
        for &x in a.iter() {
            assert!((0.95..=1.05).contains(&x));
        }
    }

    #[test]
    fn zero_inputs_give_zero_error() {
        let cfg = CrossbarConfig::with_dims(2, 2).unwrap();
        let w = TargetMatrix::new(Array2::from_elem((2, 2), 0.5)).unwrap();
        let sol = baseline_fixed_alpha_map(&w, &cfg, 2e-4).unwrap();
        let err =
            max_output_error(&w, &sol, &cfg, None, &[Array1::zeros(2)]).unwrap();
        assert_eq!(err, 0.0);
        assert!(max_output_error(&w, &sol, &cfg, None, &[]).is_err());
    }

    #[test]
    fn output_error_is_invariant_under_input_permutation() {
        let cfg = CrossbarConfig::with_dims(3, 3).unwrap();
        let w = TargetMatrix::new(Array2::from_shape_fn((3, 3), |(i, j)| {
            ((i * 3 + j) % 5) as f64 / 5.0
        }))
        .unwrap();
        let sol = baseline_fixed_alpha_map(&w, &cfg, 3e-4).unwrap();
        let inputs: Vec<Array1<f64>> = (0..4)
            .map(|k| Array1::from_shape_fn(3, |j| 0.05 * ((k + j) % 4) as f64))
            .collect();
        let fwd = max_output_error(&w, &sol, &cfg, None, &inputs).unwrap();
        let mut rev = inputs.clone();
        rev.reverse();
        let bwd = max_output_error(&w, &sol, &cfg, None, &rev).unwrap();
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn quantize_preserves_bounds_for_noise_clamping() {
        // noise on a quantized grid stays inside the programmable window
        let cfg = CrossbarConfig::with_dims(2, 2).unwrap();
        let g = ConductanceGrid::uniform(3e-4, &cfg).unwrap();
        let q = quantize_grid(&g, &cfg).unwrap();
        let noisy =
            apply_rtn_noise(q.values(), 0.2, (cfg.g_min, cfg.g_max), 11).unwrap();
        assert!(ConductanceGrid::new(noisy, &cfg).is_ok());
    }
}
