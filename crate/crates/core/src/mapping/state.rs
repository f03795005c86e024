//! Conversion of ideal cell conductances into device state variables.
//!
//! Under the calibration input, each cell must carry the same current through
//! the series memristor/transistor pair as the ideal conductor did. That is a
//! two-unknown system per cell (state s, internal node voltage v_p), solved
//! independently with a damped 2x2 Newton iteration and an analytic Jacobian.

use ndarray::{Array2, ArrayView1};

use crate::config::CrossbarConfig;
use crate::device::{DeviceModel, TransistorLaw};
use crate::error::Result;
use crate::grid::ConductanceGrid;
use crate::mna::{CrossbarSolver, NodeVoltageSolution};
use crate::scalar::Scalar;

/// Why a cell was flagged by the state solve.
#[derive(Debug, Clone, PartialEq)]
pub enum FlagReason {
    /// The exact solution lies outside [0, 1]; the state was clamped.
    OutOfRange { solved: f64 },
    /// Newton ran out of iterations; the best iterate was kept.
    NonConvergence { residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedCell {
    pub row: usize,
    pub col: usize,
    pub reason: FlagReason,
}

#[derive(Debug, Clone)]
pub struct StateSolution<T> {
    /// State matrix with every entry in [0, 1].
    pub s: Array2<T>,
    pub flagged: Vec<FlaggedCell>,
}

const MAX_ITERS: usize = 100;

/// Solve for the state matrix realizing grid `g` under calibration inputs.
pub fn solve_state_variables<T: Scalar>(
    g: &ConductanceGrid<T>,
    config: &CrossbarConfig<T>,
    model: &DeviceModel<T>,
    v_cal: ArrayView1<'_, T>,
) -> Result<StateSolution<T>> {
    let solver = CrossbarSolver::new(config)?;
    let factor = solver.factor(g)?;
    let voltages = solver.node_voltages(&factor, v_cal)?;
    solve_states_from_voltages(g, config, model, &voltages)
}

pub(crate) fn solve_states_from_voltages<T: Scalar>(
    g: &ConductanceGrid<T>,
    config: &CrossbarConfig<T>,
    model: &DeviceModel<T>,
    voltages: &NodeVoltageSolution<T>,
) -> Result<StateSolution<T>> {
    let (n, m) = (config.rows, config.cols);
    let tol_rel = T::cast(1e-9).max(T::epsilon() * T::cast(100.0));
    let (dev_lo, dev_hi) = model.memristor.bounds();
    // keep iterates where the device conductance stays positive
    let s_floor = -T::half() * dev_lo / (dev_hi - dev_lo);
    let s_ceil = T::two();

    let mut s = Array2::zeros((n, m));
    let mut flagged = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let i_g = voltages.i_cell[[i, j]];
            let v_c = voltages.v_col[[i, j]];
            let v_r = voltages.v_row[[i, j]];
            let g_cell = g.values()[[i, j]];

            let (solved, residual_ok) = if i_g == T::zero() || v_c == v_r {
                // no current to match: fall back to the small-signal conductance
                let sv = model
                    .memristor
                    .state_for_conductance(match model.transistor.small_signal(v_r) {
                        None => g_cell,
                        Some(gt) => {
                            if g_cell >= gt {
                                dev_hi * T::two() // forces an out-of-range flag
                            } else {
                                g_cell * gt / (gt - g_cell)
                            }
                        }
                    });
                (sv, true)
            } else {
                match model.transistor {
                    TransistorLaw::Ideal => {
                        solve_state_1d(model, i_g, v_c - v_r, g_cell, tol_rel, s_floor, s_ceil)
                    }
                    _ => solve_cell_2d(model, i_g, v_c, v_r, g_cell, tol_rel, s_floor, s_ceil),
                }
            };

            if !residual_ok {
                flagged.push(FlaggedCell {
                    row: i,
                    col: j,
                    reason: FlagReason::NonConvergence {
                        residual: residual_for(model, solved, i_g, v_c, v_r)
                            .to_f64()
                            .unwrap_or(f64::NAN),
                    },
                });
            } else if solved < T::zero() || solved > T::one() {
                flagged.push(FlaggedCell {
                    row: i,
                    col: j,
                    reason: FlagReason::OutOfRange {
                        solved: solved.to_f64().unwrap_or(f64::NAN),
                    },
                });
            }
            s[[i, j]] = solved.max(T::zero()).min(T::one());
        }
    }
    Ok(StateSolution { s, flagged })
}

/// Magnitude of the current mismatch at a candidate state (for diagnostics).
fn residual_for<T: Scalar>(model: &DeviceModel<T>, s: T, i_g: T, v_c: T, v_r: T) -> T {
    match model.transistor {
        TransistorLaw::Ideal => (i_g - model.memristor.current(s, v_c - v_r)).abs(),
        _ => (i_g - model.memristor.current(s, v_c - v_r)).abs(), // rough: mid node unknown here
    }
}

/// Ideal transistor: the internal node sits at v_r; solve i_m(s, v) = i_g in s.
fn solve_state_1d<T: Scalar>(
    model: &DeviceModel<T>,
    i_g: T,
    v_m: T,
    _g_cell: T,
    tol_rel: T,
    s_floor: T,
    s_ceil: T,
) -> (T, bool) {
    let mut s = model
        .memristor
        .state_for_conductance(i_g / v_m)
        .max(s_floor)
        .min(s_ceil);
    let target = i_g.abs();
    for _ in 0..MAX_ITERS {
        let f = i_g - model.memristor.current(s, v_m);
        if f.abs() <= tol_rel * target {
            return (s, true);
        }
        let (dim_ds, _) = model.memristor.partials(s, v_m);
        if dim_ds == T::zero() {
            break;
        }
        let mut lambda = T::one();
        let mut moved = false;
        for _ in 0..40 {
            let trial = (s + lambda * f / dim_ds).max(s_floor).min(s_ceil);
            let tf = i_g - model.memristor.current(trial, v_m);
            if tf.abs() < f.abs() {
                s = trial;
                moved = true;
                break;
            }
            lambda = lambda * T::half();
        }
        if !moved {
            return (s, false);
        }
    }
    let f = i_g - model.memristor.current(s, v_m);
    (s, f.abs() <= tol_rel * target)
}

/// Square-law transistor: solve the coupled (s, v_p) system with Newton.
#[allow(clippy::too_many_arguments)]
fn solve_cell_2d<T: Scalar>(
    model: &DeviceModel<T>,
    i_g: T,
    v_c: T,
    v_r: T,
    g_cell: T,
    tol_rel: T,
    s_floor: T,
    s_ceil: T,
) -> (T, bool) {
    let gt0 = model
        .transistor
        .small_signal(v_r)
        .expect("square-law transistor has small signal");
    let mut v_p = v_r + i_g / gt0;
    let mut s = match model.state_for_cell_conductance(g_cell) {
        Some(sv) => sv.max(s_floor).min(s_ceil),
        None => T::one(),
    };
    let target = i_g.abs();
    let res = |s: T, v_p: T| {
        let f1 = i_g - model.memristor.current(s, v_c - v_p);
        let f2 = i_g - model.transistor.current(v_p, v_r);
        (f1, f2)
    };
    let norm = |f1: T, f2: T| f1.abs().max(f2.abs());

    let (mut f1, mut f2) = res(s, v_p);
    for _ in 0..MAX_ITERS {
        if norm(f1, f2) <= tol_rel * target {
            return (s, true);
        }
        let (dim_ds, dim_dv) = model.memristor.partials(s, v_c - v_p);
        let (_, dit_dp, _) = model.transistor.current_and_partials(v_p, v_r);
        // J = [[-dim_ds, +dim_dv], [0, -dit_dp]]
        let det = dim_ds * dit_dp;
        if det == T::zero() || !det.is_finite() {
            return (s, false);
        }
        let dv_p = f2 / dit_dp;
        let ds = (f1 + dim_dv * dv_p) / dim_ds;

        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let ts = (s + lambda * ds).max(s_floor).min(s_ceil);
            let tv = v_p + lambda * dv_p;
            let (t1, t2) = res(ts, tv);
            if norm(t1, t2) < norm(f1, f2) {
                s = ts;
                v_p = tv;
                f1 = t1;
                f2 = t2;
                accepted = true;
                break;
            }
            lambda = lambda * T::half();
        }
        if !accepted {
            return (s, false);
        }
    }
    (s, norm(f1, f2) <= tol_rel * target)
}
