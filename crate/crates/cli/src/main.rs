use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;

use xbarmap_core::analysis::{sweep_alpha, value_range_map, BackgroundFill};
use xbarmap_core::mapping::{
    baseline_calibration_map, baseline_fixed_alpha_map, map_matrix, MappingSolution,
};
use xbarmap_core::nonlinear::{NewtonOptions, NonlinearSolver};
use xbarmap_core::{CrossbarSolver, TargetMatrix};

use xbarmap_cli::compare::run_compare;
use xbarmap_cli::config::ExperimentConfig;
use xbarmap_cli::io;
use xbarmap_cli::network::{self, MappedNetwork};
use xbarmap_cli::report::{write_tsv, Report};

#[derive(Parser)]
#[command(
    name = "xbarmap",
    version,
    about = "Map matrices onto simulated memristor crossbars and evaluate the analog accuracy"
)]
struct Cli {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for all randomness (overrides the config seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap; results are independent of it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Include wall-clock timing in the report (breaks byte-for-byte
    /// reproducibility of the output file).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a matrix file to a crossbar solution file.
    Map(MapArgs),
    /// Simulate a solution against a file of input vectors.
    Simulate(SimulateArgs),
    /// Representable-value analysis.
    Analyze(AnalyzeArgs),
    /// Proposed mapping vs. the two baselines over seeded random instances.
    Compare(CompareArgs),
    /// Tiled DNN-layer evaluation against fixture weights and data.
    DnnEval(DnnEvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Proposed,
    FixedAlpha,
    Calibration,
}

#[derive(Args)]
struct MapArgs {
    /// Target matrix (.csv or .json), non-negative entries.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, value_enum, default_value = "proposed")]
    method: MethodArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// Solution file produced by `map`.
    #[arg(long)]
    solution: PathBuf,
    /// Input vectors, one per matrix row (.csv or .json), volts.
    #[arg(long)]
    inputs: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    what: AnalyzeCommand,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-cell realizable value bounds at a fixed scaling factor.
    Range(RangeArgs),
    /// Error decomposition and utilization across scaling factors.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackgroundArg {
    GMax,
    GMin,
}

#[derive(Args)]
struct RangeArgs {
    /// Scaling factor alpha.
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "g-max")]
    background: BackgroundArg,
    /// Optional TSV series (row, col, lo, hi, length).
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Target matrix (.csv or .json).
    #[arg(long)]
    matrix: PathBuf,
    /// Number of log-spaced scaling factors.
    #[arg(long, default_value = "8")]
    points: usize,
    /// Lowest alpha; default centers the sweep on half-range utilization.
    #[arg(long)]
    alpha_min: Option<f64>,
    /// Highest alpha.
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Optional TSV series (alpha, total, value_range, precision, utilization).
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value = "16")]
    rows: usize,
    #[arg(long, default_value = "16")]
    cols: usize,
    #[arg(long, default_value = "50")]
    instances: usize,
    /// Random test inputs per instance.
    #[arg(long, default_value = "100")]
    inputs: usize,
    /// Optional TSV series (instance, per-method output errors, ratio).
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct DnnEvalArgs {
    /// Network spec JSON (layer weight/bias files, dataset, labels).
    #[arg(long)]
    network: PathBuf,
    /// RTN noise fraction; overrides the config noise section.
    #[arg(long)]
    noise: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            let diagnostic = serde_json::json!({
                "error": {
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{diagnostic}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => io::load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let seed = config.seed;
    let started = Instant::now();

    match &cli.command {
        Command::Map(args) => {
            let matrix = io::load_matrix(&args.matrix)?;
            let (n, m) = matrix.dim();
            let core_cfg = config.crossbar.to_core(n, m)?;
            let w = TargetMatrix::new(matrix).map_err(|e| anyhow::anyhow!("{e}"))?;
            let model = config.device_model()?;
            let params = config.alpha_params();
            let v_cal = Array1::from_elem(m, core_cfg.v_cal());
            let solution: MappingSolution<f64> = match args.method {
                MethodArg::Proposed => {
                    map_matrix(&w, &core_cfg, model.as_ref(), &params, v_cal.view())
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                }
                MethodArg::FixedAlpha => {
                    let alpha0 = params.resolve_alpha0(&w, &core_cfg);
                    baseline_fixed_alpha_map(&w, &core_cfg, alpha0)
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                }
                MethodArg::Calibration => {
                    baseline_calibration_map(&w, &core_cfg, model.as_ref(), v_cal.view())
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                }
            };
            let file = io::solution_to_file(&solution, &config.crossbar);
            let mut report = Report::new("map", seed, &config, file);
            if cli.timings {
                report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
            }
            report.emit(cli.out.as_deref())?;
        }

        Command::Simulate(args) => {
            let (solution, core_cfg) = io::load_solution(&args.solution)?;
            let inputs = io::load_inputs(&args.inputs, core_cfg.cols)?;
            let model = config.device_model()?;
            let mut outputs = Vec::with_capacity(inputs.len());
            let mut realized = Vec::with_capacity(inputs.len());
            match (&solution.s, &model) {
                (Some(s), Some(m)) => {
                    let solver = NonlinearSolver::new(&core_cfg, m)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    let newton = NewtonOptions::default();
                    for v in &inputs {
                        let sol = solver
                            .simulate(s.view(), v.view(), &newton)
                            .map_err(|e| anyhow::anyhow!("{e}"))?;
                        realized.push(
                            sol.outputs.iter().map(|i| i / solution.alpha).collect::<Vec<_>>(),
                        );
                        outputs.push(sol.outputs.to_vec());
                    }
                }
                _ => {
                    let solver =
                        CrossbarSolver::new(&core_cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
                    let factor = solver
                        .factor(&solution.g_quantized)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    let gm = solver.conductance_matrix(&factor);
                    for v in &inputs {
                        let i = gm.dot(v);
                        realized.push(i.iter().map(|i| i / solution.alpha).collect::<Vec<_>>());
                        outputs.push(i.to_vec());
                    }
                }
            }
            let payload = serde_json::json!({
                "inputs": inputs.len(),
                "output_currents": outputs,
                "realized_products": realized,
            });
            let mut report = Report::new("simulate", seed, &config, payload);
            if cli.timings {
                report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
            }
            report.emit(cli.out.as_deref())?;
        }

        Command::Analyze(args) => match &args.what {
            AnalyzeCommand::Range(range) => {
                let core_cfg = config
                    .crossbar
                    .to_core(config.crossbar.rows, config.crossbar.cols)?;
                let background = match range.background {
                    BackgroundArg::GMax => BackgroundFill::AllGMax,
                    BackgroundArg::GMin => BackgroundFill::AllGMin,
                };
                let map = value_range_map(&core_cfg, range.alpha, &background)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                if let Some(tsv) = &range.tsv {
                    let mut rows = Vec::new();
                    for ((i, j), lo) in map.lo.indexed_iter() {
                        let hi = map.hi[[i, j]];
                        rows.push(vec![
                            i.to_string(),
                            j.to_string(),
                            format!("{lo:e}"),
                            format!("{hi:e}"),
                            format!("{:e}", hi - lo),
                        ]);
                    }
                    write_tsv(tsv, &["row", "col", "lo", "hi", "length"], &rows)?;
                }
                let payload = serde_json::json!({
                    "alpha": range.alpha,
                    "rows": core_cfg.rows,
                    "cols": core_cfg.cols,
                    "lo": map.lo.iter().copied().collect::<Vec<_>>(),
                    "hi": map.hi.iter().copied().collect::<Vec<_>>(),
                });
                let mut report = Report::new("analyze-range", seed, &config, payload);
                if cli.timings {
                    report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
                }
                report.emit(cli.out.as_deref())?;
            }
            AnalyzeCommand::Sweep(sweep) => {
                let matrix = io::load_matrix(&sweep.matrix)?;
                let (n, m) = matrix.dim();
                let core_cfg = config.crossbar.to_core(n, m)?;
                let w = TargetMatrix::new(matrix).map_err(|e| anyhow::anyhow!("{e}"))?;
                if sweep.points < 2 {
                    bail!("need at least 2 sweep points");
                }
                let wmax = w.max_entry();
                if wmax <= 0.0 {
                    bail!("sweep needs a nonzero matrix");
                }
                let center = 0.5 * core_cfg.g_max / wmax;
                let lo = sweep.alpha_min.unwrap_or(center / 16.0);
                let hi = sweep.alpha_max.unwrap_or(center * 8.0);
                if !(lo > 0.0 && hi > lo) {
                    bail!("need 0 < alpha-min < alpha-max, got {lo} and {hi}");
                }
                let ratio = (hi / lo).powf(1.0 / (sweep.points - 1) as f64);
                let alphas: Vec<f64> =
                    (0..sweep.points).map(|k| lo * ratio.powi(k as i32)).collect();
                let curve =
                    sweep_alpha(&w, &core_cfg, &alphas).map_err(|e| anyhow::anyhow!("{e}"))?;
                if let Some(tsv) = &sweep.tsv {
                    let rows: Vec<Vec<String>> = curve
                        .samples
                        .iter()
                        .map(|s| {
                            vec![
                                format!("{:e}", s.alpha),
                                format!("{:e}", s.error.total),
                                format!("{:e}", s.error.value_range),
                                format!("{:e}", s.error.precision),
                                format!("{:e}", s.utilization),
                            ]
                        })
                        .collect();
                    write_tsv(
                        tsv,
                        &["alpha", "total", "value_range", "precision", "utilization"],
                        &rows,
                    )?;
                }
                let samples: Vec<serde_json::Value> = curve
                    .samples
                    .iter()
                    .map(|s| {
                        serde_json::json!({
                            "alpha": s.alpha,
                            "total": s.error.total,
                            "value_range": s.error.value_range,
                            "precision": s.error.precision,
                            "utilization": s.utilization,
                        })
                    })
                    .collect();
                let payload = serde_json::json!({ "samples": samples });
                let mut report = Report::new("analyze-sweep", seed, &config, payload);
                if cli.timings {
                    report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
                }
                report.emit(cli.out.as_deref())?;
            }
        },

        Command::Compare(args) => {
            let report_payload = run_compare(
                &config,
                args.rows,
                args.cols,
                args.instances,
                args.inputs,
                seed,
            )?;
            if let Some(tsv) = &args.tsv {
                let rows: Vec<Vec<String>> = report_payload
                    .records
                    .iter()
                    .map(|r| {
                        vec![
                            r.instance.to_string(),
                            format!("{:e}", r.proposed.max_output_error),
                            format!("{:e}", r.baseline_fixed_alpha.max_output_error),
                            format!("{:e}", r.baseline_calibration.max_output_error),
                            format!("{:e}", r.output_error_ratio),
                        ]
                    })
                    .collect();
                write_tsv(
                    tsv,
                    &["instance", "proposed", "fixed_alpha", "calibration", "ratio"],
                    &rows,
                )?;
            }
            let mut report = Report::new("compare", seed, &config, report_payload);
            if cli.timings {
                report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
            }
            report.emit(cli.out.as_deref())?;
        }

        Command::DnnEval(args) => {
            let net = network::load_network(&args.network)?;
            let noise = args.noise.unwrap_or(config.noise.delta);
            if !(0.0..=0.2).contains(&noise) {
                bail!("noise must lie in [0, 0.2], got {noise}");
            }
            let float_acc = network::float_accuracy(&net);
            let mapped = MappedNetwork::map(&net, &config)?;
            let prepared = mapped.prepare(&net, &config, noise, seed)?;
            let mapped_acc = prepared.accuracy(&net)?;
            let payload = serde_json::json!({
                "samples": net.labels.len(),
                "noise_delta": noise,
                "float_accuracy": float_acc,
                "mapped_accuracy": mapped_acc,
                "accuracy_drop": float_acc - mapped_acc,
            });
            let mut report = Report::new("dnn-eval", seed, &config, payload);
            if cli.timings {
                report.elapsed_seconds = Some(started.elapsed().as_secs_f64());
            }
            report.emit(cli.out.as_deref())?;
        }
    }
    Ok(())
}
