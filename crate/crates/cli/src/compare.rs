//! Seeded head-to-head comparison of the mapping methods.

use anyhow::Result;
use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use xbarmap_core::analysis::max_output_error;
use xbarmap_core::mapping::{baseline_calibration_map, baseline_fixed_alpha_map, map_matrix};
use xbarmap_core::TargetMatrix;

use crate::config::ExperimentConfig;
use crate::rng::rng_for;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub alpha: f64,
    pub total_error: f64,
    pub value_range_error: f64,
    pub precision_error: f64,
    pub utilization: f64,
    pub max_output_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub proposed: MethodRecord,
    pub baseline_fixed_alpha: MethodRecord,
    pub baseline_calibration: MethodRecord,
    /// baseline-calibration max output error over the proposed one.
    pub output_error_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareAggregate {
    pub instances: usize,
    pub proposed_wins_vs_calibration: usize,
    pub proposed_wins_vs_fixed_alpha: usize,
    pub median_output_error_ratio: f64,
    pub mean_proposed_error: f64,
    pub mean_calibration_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: usize,
    pub cols: usize,
    pub inputs_per_instance: usize,
    pub records: Vec<InstanceRecord>,
    pub aggregate: CompareAggregate,
}

/// Run all three mapping methods on seeded random non-negative matrices and
/// score them with the max-output-error metric over seeded random inputs.
pub fn run_compare(
    experiment: &ExperimentConfig,
    rows: usize,
    cols: usize,
    instances: usize,
    inputs_per_instance: usize,
    seed: u64,
) -> Result<CompareReport> {
    let config = experiment.crossbar.to_core(rows, cols)?;
    let params = experiment.alpha_params();
    let v_cal = Array1::from_elem(cols, config.v_cal());

    let records: Vec<InstanceRecord> = (0..instances)
        .into_par_iter()
        .map(|instance| -> Result<InstanceRecord> {
            let mut rng = rng_for(seed, instance as u64);
            let w = TargetMatrix::new(Array2::from_shape_fn((rows, cols), |_| {
                rng.gen_range(0.0..1.0)
            }))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let inputs: Vec<Array1<f64>> = (0..inputs_per_instance)
                .map(|_| Array1::from_shape_fn(cols, |_| rng.gen_range(0.0..config.v_max)))
                .collect();

            let proposed = map_matrix(&w, &config, None, &params, v_cal.view())
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let alpha0 = params.resolve_alpha0(&w, &config);
            let fixed = baseline_fixed_alpha_map(&w, &config, alpha0)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let calibration = baseline_calibration_map(&w, &config, None, v_cal.view())
                .map_err(|e| anyhow::anyhow!("{e}"))?;

            let score = |sol: &xbarmap_core::mapping::MappingSolution<f64>| -> Result<MethodRecord> {
                let err = max_output_error(&w, sol, &config, None, &inputs)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                Ok(MethodRecord {
                    alpha: sol.alpha,
                    total_error: sol.error.total,
                    value_range_error: sol.error.value_range,
                    precision_error: sol.error.precision,
                    utilization: xbarmap_core::mapping::utilization(&sol.g_quantized, &config),
                    max_output_error: err,
                })
            };
            let proposed = score(&proposed)?;
            let fixed = score(&fixed)?;
            let calibration = score(&calibration)?;
            let ratio = calibration.max_output_error / proposed.max_output_error;
            Ok(InstanceRecord {
                instance,
                proposed,
                baseline_fixed_alpha: fixed,
                baseline_calibration: calibration,
                output_error_ratio: ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let wins_cal = records
        .iter()
        .filter(|r| r.proposed.max_output_error < r.baseline_calibration.max_output_error)
        .count();
    let wins_fixed = records
        .iter()
        .filter(|r| r.proposed.total_error < r.baseline_fixed_alpha.total_error)
        .count();
    let mut ratios: Vec<f64> = records.iter().map(|r| r.output_error_ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if ratios.is_empty() {
        f64::NAN
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    let mean = |f: &dyn Fn(&InstanceRecord) -> f64| {
        records.iter().map(|r| f(r)).sum::<f64>() / records.len().max(1) as f64
    };
    let aggregate = CompareAggregate {
        instances,
        proposed_wins_vs_calibration: wins_cal,
        proposed_wins_vs_fixed_alpha: wins_fixed,
        median_output_error_ratio: median,
        mean_proposed_error: mean(&|r| r.proposed.max_output_error),
        mean_calibration_error: mean(&|r| r.baseline_calibration.max_output_error),
    };
    Ok(CompareReport {
        rows,
        cols,
        inputs_per_instance,
        records,
        aggregate,
    })
}
