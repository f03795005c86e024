// Development scratch: measures the empirical margins behind the mapping
// tests. Not part of the test suite.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbarmap_core::analysis::*;
use xbarmap_core::mapping::*;
use xbarmap_core::*;
use std::time::Instant;

fn rand_target(rng: &mut ChaCha8Rng, n: usize, m: usize) -> TargetMatrix<f64> {
    TargetMatrix::new(Array2::from_shape_fn((n, m), |_| rng.gen_range(0.0..1.0))).unwrap()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();

    if which == "redistribute" || which.is_empty() {
        println!("== redistribution on 8x8 ==");
        let cfg = CrossbarConfig::<f64>::with_dims(8, 8).unwrap();
        let solver = CrossbarSolver::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for inst in 0..5 {
            let w = rand_target(&mut rng, 8, 8);
            let params = AlphaSearchParams::<f64>::default();
            let search = search_alpha(&w, &cfg, &params).unwrap();
            let alpha = search.alpha;
            let f = solver.factor(&search.g).unwrap();
            let wr = solver.conductance_matrix(&f).mapv(|v| v / alpha);
            let v_cal = Array1::from_elem(8, cfg.v_cal());
            let pre = baseline_cal_residual(&w, &wr, &v_cal);
            let (wt, stuck) = redistribute_targets(&w, &wr, &search.g, &cfg).unwrap();
            let re = descend_with(&solver, &wt, alpha, &search.g, &params.descent).unwrap();
            let f2 = solver.factor(&re.g).unwrap();
            let wr2 = solver.conductance_matrix(&f2).mapv(|v| v / alpha);
            let post = baseline_cal_residual(&w, &wr2, &v_cal);
            println!(
                "inst {inst}: alpha {alpha:.3e} pre {pre:.3e} post {post:.3e} ratio {:.1} stuck {:?}",
                pre / post, stuck
            );
        }
    }

    if which == "balance" {
        println!("== components at search optimum, 16x16 ==");
        let cfg = CrossbarConfig::<f64>::with_dims(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for inst in 0..8 {
            let w = rand_target(&mut rng, 16, 16);
            let params = AlphaSearchParams::<f64>::default();
            let res = search_alpha(&w, &cfg, &params).unwrap();
            let e = res.error;
            let ratio = e.value_range.max(e.precision) / e.value_range.min(e.precision).max(1e-300);
            println!(
                "inst {inst}: alpha {:.3e} total {:.3e} vr {:.3e} prec {:.3e} dom-ratio {:.1}",
                res.alpha, e.total, e.value_range, e.precision, ratio
            );
        }
    }

    if which == "headtohead" || which.is_empty() {
        println!("== map_matrix vs fixed-alpha, 16x16, 12 instances ==");
        let cfg = CrossbarConfig::<f64>::with_dims(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut wins = 0;
        let t0 = Instant::now();
        for inst in 0..12 {
            let w = rand_target(&mut rng, 16, 16);
            let params = AlphaSearchParams::<f64>::default();
            let a0 = params.resolve_alpha0(&w, &cfg);
            let v_cal = Array1::from_elem(16, cfg.v_cal());
            let prop = map_matrix(&w, &cfg, None, &params, v_cal.view()).unwrap();
            let base = baseline_fixed_alpha_map(&w, &cfg, a0).unwrap();
            let win = prop.error.total < base.error.total;
            wins += win as i32;
            println!(
                "inst {inst}: proposed {:.4e} (search {:.4e}, alpha {:.3e}, iters {}) vs fixed {:.4e} -> {}",
                prop.error.total,
                prop.metadata.error_at_alpha_search.unwrap().total,
                prop.alpha,
                prop.metadata.alpha_iterations,
                base.error.total,
                if win { "win" } else { "LOSS" }
            );
        }
        println!("wins {wins}/12, elapsed {:?}", t0.elapsed());
    }

    if which == "compare" || which.is_empty() {
        println!("== proposed vs calibration baseline, 16x16 ==");
        let cfg = CrossbarConfig::<f64>::with_dims(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ratios = Vec::new();
        let t0 = Instant::now();
        for inst in 0..10 {
            let w = rand_target(&mut rng, 16, 16);
            let params = AlphaSearchParams::<f64>::default();
            let v_cal = Array1::from_elem(16, cfg.v_cal());
            let prop = map_matrix(&w, &cfg, None, &params, v_cal.view()).unwrap();
            let cal = baseline_calibration_map(&w, &cfg, None, v_cal.view()).unwrap();
            let inputs: Vec<Array1<f64>> = (0..100)
                .map(|_| Array1::from_shape_fn(16, |_| rng.gen_range(0.0..cfg.v_max)))
                .collect();
            let ep = max_output_error(&w, &prop, &cfg, None, &inputs).unwrap();
            let ec = max_output_error(&w, &cal, &cfg, None, &inputs).unwrap();
            ratios.push(ec / ep);
            println!("inst {inst}: proposed {ep:.4e} calib {ec:.4e} ratio {:.2}", ec / ep);
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("median ratio {:.2}, elapsed {:?}", ratios[ratios.len() / 2], t0.elapsed());
    }

    if which == "sweep" || which.is_empty() {
        println!("== alpha sweep on 16x16 ==");
        let cfg = CrossbarConfig::<f64>::with_dims(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = rand_target(&mut rng, 16, 16);
        let a0 = 0.5 * cfg.g_max; // max(W) ~ 1
        let alphas: Vec<f64> = (0..8).map(|k| a0 / 16.0 * 2f64.powi(k)).collect();
        let t0 = Instant::now();
        let curve = sweep_alpha(&w, &cfg, &alphas).unwrap();
        for s in &curve.samples {
            println!(
                "alpha {:.4e}: total {:.4e} vr {:.4e} prec {:.4e} util {:.3}",
                s.alpha, s.error.total, s.error.value_range, s.error.precision, s.utilization
            );
        }
        println!("elapsed {:?}", t0.elapsed());
    }

    if which == "roundtrip" || which.is_empty() {
        println!("== state-solve round trip, 4x4 sinh ==");
        let cfg = CrossbarConfig::<f64>::with_dims(4, 4).unwrap();
        let model = DeviceModel::<f64>::default_sinh();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for inst in 0..4 {
            let w = rand_target(&mut rng, 4, 4);
            let params = AlphaSearchParams::<f64>::default();
            let v_cal = Array1::from_elem(4, cfg.v_cal());
            let sol = map_matrix(&w, &cfg, Some(&model), &params, v_cal.view()).unwrap();
            let ideal = extract_conductance_matrix(&cfg, &sol.g_quantized).unwrap();
            let expect = ideal.dot(&v_cal);
            let sim = xbarmap_core::nonlinear::simulate_nonlinear(
                &cfg,
                sol.s.as_ref().unwrap().view(),
                &model,
                v_cal.view(),
            )
            .unwrap();
            let mut worst = 0.0f64;
            for (a, b) in sim.outputs.iter().zip(expect.iter()) {
                worst = worst.max((a - b).abs() / b.abs());
            }
            println!(
                "inst {inst}: worst output rel {:.3e}, flagged {}",
                worst,
                sol.metadata.flagged_cells.len()
            );
        }
    }
}

fn baseline_cal_residual(
    w: &TargetMatrix<f64>,
    wr: &Array2<f64>,
    v_cal: &Array1<f64>,
) -> f64 {
    xbarmap_core::mapping::weighted_calibration_residual(w, wr, v_cal.view())
}
