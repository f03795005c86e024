//! Differential encoding, tiling, converter models, and the tiled forward pass.

use anyhow::{bail, Result};
use ndarray::{s, Array1, Array2};

use xbarmap_core::analysis::apply_rtn_noise;
use xbarmap_core::mapping::{map_matrix, MappingSolution};
use xbarmap_core::nonlinear::{NewtonOptions, NonlinearSolver};
use xbarmap_core::{CrossbarSolver, TargetMatrix};

use crate::config::ExperimentConfig;
use crate::rng::split_seed;

/// Converter bit depth; `Infinite` bypasses quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Infinite,
    Finite(u32),
}

impl BitDepth {
    pub fn from_option(bits: Option<u32>) -> Self {
        match bits {
            None => BitDepth::Infinite,
            Some(b) => BitDepth::Finite(b),
        }
    }
}

/// DAC model: uniform `2^bits` levels over the fixed range [0, v_max].
pub fn dac_quantize(v: &Array1<f64>, bits: BitDepth, v_max: f64) -> Array1<f64> {
    match bits {
        BitDepth::Infinite => v.clone(),
        BitDepth::Finite(b) => {
            let step = v_max / ((1u64 << b) - 1) as f64;
            v.mapv(|x| (x / step).round() * step)
        }
    }
}

/// ADC model: uniform `2^bits` levels over [0, max(y)], recomputed per output
/// vector (dynamic reference).
pub fn adc_quantize(y: &Array1<f64>, bits: BitDepth) -> Array1<f64> {
    match bits {
        BitDepth::Infinite => y.clone(),
        BitDepth::Finite(b) => {
            let ymax = y.iter().copied().fold(0.0f64, f64::max);
            if ymax <= 0.0 {
                return y.clone();
            }
            let step = ymax / ((1u64 << b) - 1) as f64;
            y.mapv(|x| (x / step).round() * step)
        }
    }
}

/// Split a signed matrix into non-negative planes with `W = plus - minus`.
pub fn differential_encode(w: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let plus = w.mapv(|x| x.max(0.0));
    let minus = w.mapv(|x| (-x).max(0.0));
    (plus, minus)
}

/// One block of the partition grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Cut an `n_out x n_in` matrix into blocks of at most `tile_rows x tile_cols`.
pub fn partition_matrix(
    n_out: usize,
    n_in: usize,
    tile_rows: usize,
    tile_cols: usize,
) -> Vec<TileSpec> {
    let mut tiles = Vec::new();
    let mut row0 = 0;
    while row0 < n_out {
        let rows = tile_rows.min(n_out - row0);
        let mut col0 = 0;
        while col0 < n_in {
            let cols = tile_cols.min(n_in - col0);
            tiles.push(TileSpec { row0, col0, rows, cols });
            col0 += cols;
        }
        row0 += rows;
    }
    tiles
}

/// Post-accumulation activation of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    pub fn apply(&self, y: &mut Array1<f64>) {
        if matches!(self, Activation::Relu) {
            y.mapv_inplace(|x| x.max(0.0));
        }
    }
}

/// Differential pair of mapped crossbars for one tile.
#[derive(Debug, Clone)]
pub struct MappedTile {
    pub spec: TileSpec,
    pub plus: MappingSolution<f64>,
    pub minus: MappingSolution<f64>,
}

/// A signed weight matrix mapped tile-by-tile onto differential crossbar pairs.
#[derive(Debug, Clone)]
pub struct TiledLayer {
    pub n_out: usize,
    pub n_in: usize,
    pub tiles: Vec<MappedTile>,
    /// Bias applied digitally after tile reassembly.
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl TiledLayer {
    /// Map a signed weight matrix (and bias) onto crossbar tiles.
    pub fn map(
        weights: &Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
        experiment: &ExperimentConfig,
    ) -> Result<Self> {
        let (n_out, n_in) = weights.dim();
        if bias.len() != n_out {
            bail!("bias length {} does not match {} outputs", bias.len(), n_out);
        }
        let model = experiment.device_model()?;
        let params = experiment.alpha_params();
        let specs = partition_matrix(
            n_out,
            n_in,
            experiment.crossbar.rows,
            experiment.crossbar.cols,
        );
        let mut tiles = Vec::with_capacity(specs.len());
        for spec in specs {
            let block = weights
                .slice(s![
                    spec.row0..spec.row0 + spec.rows,
                    spec.col0..spec.col0 + spec.cols
                ])
                .to_owned();
            let (plus, minus) = differential_encode(&block);
            let config = experiment.crossbar.to_core(spec.rows, spec.cols)?;
            let v_cal = Array1::from_elem(spec.cols, config.v_cal());
            let map_plane = |plane: Array2<f64>| -> Result<MappingSolution<f64>> {
                let target = TargetMatrix::new(plane).map_err(|e| anyhow::anyhow!("{e}"))?;
                map_matrix(&target, &config, model.as_ref(), &params, v_cal.view())
                    .map_err(|e| anyhow::anyhow!("{e}"))
            };
            tiles.push(MappedTile {
                spec,
                plus: map_plane(plus)?,
                minus: map_plane(minus)?,
            });
        }
        Ok(Self {
            n_out,
            n_in,
            tiles,
            bias,
            activation,
        })
    }

    /// Perturb the programmed devices with static RTN noise (fresh draw per
    /// plane, derived from `seed`). States are perturbed when present,
    /// conductances otherwise.
    pub fn with_noise(&self, delta: f64, seed: u64, experiment: &ExperimentConfig) -> Result<Self> {
        if delta == 0.0 {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for (idx, tile) in out.tiles.iter_mut().enumerate() {
            let config = experiment.crossbar.to_core(tile.spec.rows, tile.spec.cols)?;
            for (plane, sol) in [(0u64, &mut tile.plus), (1u64, &mut tile.minus)] {
                let stream = split_seed(seed, (idx as u64) * 2 + plane);
                match &mut sol.s {
                    Some(states) => {
                        *states = apply_rtn_noise(states, delta, (0.0, 1.0), stream)
                            .map_err(|e| anyhow::anyhow!("{e}"))?;
                    }
                    None => {
                        let noisy = apply_rtn_noise(
                            sol.g_quantized.values(),
                            delta,
                            (config.g_min, config.g_max),
                            stream,
                        )
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                        sol.g_quantized =
                            xbarmap_core::ConductanceGrid::new(noisy, &config)
                                .map_err(|e| anyhow::anyhow!("{e}"))?;
                    }
                }
            }
        }
        Ok(out)
    }
}

enum TileSim {
    /// Realized conductance matrix of the quantized grid; outputs are G v.
    Linear(Array2<f64>),
    /// Device-level Newton solve per input.
    Nonlinear(NonlinearSolver<f64>, Array2<f64>),
}

struct PreparedTile {
    spec: TileSpec,
    alpha_plus: f64,
    alpha_minus: f64,
    plus: TileSim,
    minus: TileSim,
}

/// A [`TiledLayer`] with per-tile solvers set up for repeated forward passes.
pub struct PreparedLayer {
    n_out: usize,
    n_in: usize,
    tiles: Vec<PreparedTile>,
    bias: Array1<f64>,
    activation: Activation,
    v_max: f64,
    dac: BitDepth,
    adc: BitDepth,
}

impl PreparedLayer {
    pub fn new(layer: &TiledLayer, experiment: &ExperimentConfig) -> Result<Self> {
        let model = experiment.device_model()?;
        let mut tiles = Vec::with_capacity(layer.tiles.len());
        for tile in &layer.tiles {
            let config = experiment.crossbar.to_core(tile.spec.rows, tile.spec.cols)?;
            let prep = |sol: &MappingSolution<f64>| -> Result<TileSim> {
                match (&sol.s, &model) {
                    (Some(s), Some(m)) => Ok(TileSim::Nonlinear(
                        NonlinearSolver::new(&config, m).map_err(|e| anyhow::anyhow!("{e}"))?,
                        s.clone(),
                    )),
                    _ => {
                        let solver =
                            CrossbarSolver::new(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
                        let factor = solver
                            .factor(&sol.g_quantized)
                            .map_err(|e| anyhow::anyhow!("{e}"))?;
                        Ok(TileSim::Linear(solver.conductance_matrix(&factor)))
                    }
                }
            };
            tiles.push(PreparedTile {
                spec: tile.spec,
                alpha_plus: tile.plus.alpha,
                alpha_minus: tile.minus.alpha,
                plus: prep(&tile.plus)?,
                minus: prep(&tile.minus)?,
            });
        }
        Ok(Self {
            n_out: layer.n_out,
            n_in: layer.n_in,
            tiles,
            bias: layer.bias.clone(),
            activation: layer.activation,
            v_max: experiment.crossbar.v_max,
            dac: BitDepth::from_option(experiment.dac_bits),
            adc: BitDepth::from_option(experiment.adc_bits),
        })
    }

    /// Forward one digital activation vector (entries in [0, 1]) through the
    /// tiled analog layer: DAC, per-tile simulation, ADC, digital reassembly
    /// (partial sums, differential subtraction, bias, activation).
    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.forward_scaled(x, 1.0)
    }

    /// Like [`Self::forward`], but the analog product is digitally multiplied
    /// by `scale` before bias and activation, for inputs that were pre-scaled
    /// into [0, 1].
    pub fn forward_scaled(&self, x: &Array1<f64>, scale: f64) -> Result<Array1<f64>> {
        if x.len() != self.n_in {
            bail!("input length {} does not match layer inputs {}", x.len(), self.n_in);
        }
        let v_full = dac_quantize(
            &x.mapv(|a| (a * self.v_max).clamp(0.0, self.v_max)),
            self.dac,
            self.v_max,
        );
        let mut y = Array1::zeros(self.n_out);
        let newton = NewtonOptions::default();
        for tile in &self.tiles {
            let v_seg = v_full
                .slice(s![tile.spec.col0..tile.spec.col0 + tile.spec.cols])
                .to_owned();
            let accumulate =
                |sim: &TileSim, alpha: f64, sign: f64, y: &mut Array1<f64>| -> Result<()> {
                    let currents = match sim {
                        TileSim::Linear(gm) => gm.dot(&v_seg),
                        TileSim::Nonlinear(solver, s) => solver
                            .simulate(s.view(), v_seg.view(), &newton)
                            .map_err(|e| anyhow::anyhow!("{e}"))?
                            .outputs,
                    };
                    let digital =
                        adc_quantize(&currents, self.adc).mapv(|i| i / (alpha * self.v_max));
                    for (r, d) in digital.iter().enumerate() {
                        y[tile.spec.row0 + r] += sign * d;
                    }
                    Ok(())
                };
            accumulate(&tile.plus, tile.alpha_plus, 1.0, &mut y)?;
            accumulate(&tile.minus, tile.alpha_minus, -1.0, &mut y)?;
        }
        if scale != 1.0 {
            y.mapv_inplace(|v| v * scale);
        }
        y += &self.bias;
        self.activation.apply(&mut y);
        Ok(y)
    }
}
