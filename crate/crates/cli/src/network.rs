//! Network fixture loading and the tiled DNN evaluation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io;
use crate::tile::{Activation, PreparedLayer, TiledLayer};

#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkSpecFile {
    pub schema_version: u32,
    pub layers: Vec<LayerSpec>,
    pub dataset: String,
    pub labels: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerSpec {
    pub weights: String,
    pub bias: String,
    /// "relu" or "none"; the classifier output is decided by argmax so a
    /// final softmax is unnecessary.
    pub activation: String,
}

pub struct LoadedNetwork {
    pub layers: Vec<(Array2<f64>, Array1<f64>, Activation)>,
    /// One sample per row, features in [0, 1].
    pub dataset: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn load_network(spec_path: &Path) -> Result<LoadedNetwork> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading network spec {}", spec_path.display()))?;
    let spec: NetworkSpecFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing network spec {}", spec_path.display()))?;
    if spec.schema_version != crate::config::SCHEMA_VERSION {
        bail!("unsupported network schema_version {}", spec.schema_version);
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| -> PathBuf { base.join(p) };

    let mut layers = Vec::new();
    for layer in &spec.layers {
        let weights = io::load_matrix(&resolve(&layer.weights))?;
        let bias_mat = io::load_matrix(&resolve(&layer.bias))?;
        if bias_mat.nrows() != 1 && bias_mat.ncols() != 1 {
            bail!("bias file must be a single row or column");
        }
        let bias: Array1<f64> = Array1::from_iter(bias_mat.iter().copied());
        if bias.len() != weights.nrows() {
            bail!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weights.nrows()
            );
        }
        let activation = match layer.activation.as_str() {
            "relu" => Activation::Relu,
            "none" => Activation::None,
            other => bail!("unknown activation {other:?}"),
        };
        layers.push((weights, bias, activation));
    }
    // layer chaining must be dimensionally consistent
    for pair in layers.windows(2) {
        if pair[1].0.ncols() != pair[0].0.nrows() {
            bail!(
                "layer output size {} feeds layer expecting {} inputs",
                pair[0].0.nrows(),
                pair[1].0.ncols()
            );
        }
    }
    let dataset = io::load_matrix(&resolve(&spec.dataset))?;
    let labels = io::load_labels(&resolve(&spec.labels))?;
    if dataset.nrows() != labels.len() {
        bail!(
            "dataset has {} samples but {} labels",
            dataset.nrows(),
            labels.len()
        );
    }
    if let Some((w0, _, _)) = layers.first() {
        if dataset.ncols() != w0.ncols() {
            bail!(
                "dataset features {} do not match first-layer inputs {}",
                dataset.ncols(),
                w0.ncols()
            );
        }
    }
    for &v in dataset.iter() {
        if !(0.0..=1.0).contains(&v) {
            bail!("dataset values must lie in [0, 1], found {v}");
        }
    }
    Ok(LoadedNetwork {
        layers,
        dataset,
        labels,
    })
}

/// Digital float forward pass; the accuracy oracle.
pub fn float_forward(net: &LoadedNetwork, x: &Array1<f64>) -> Array1<f64> {
    let mut h = x.clone();
    for (w, b, act) in &net.layers {
        let mut y = w.dot(&h) + b;
        act.apply(&mut y);
        h = y;
    }
    h
}

fn argmax(y: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in y.iter().enumerate() {
        if v > y[best] {
            best = i;
        }
    }
    best
}

pub fn float_accuracy(net: &LoadedNetwork) -> f64 {
    let mut hits = 0usize;
    for (row, &label) in net.dataset.rows().into_iter().zip(&net.labels) {
        let pred = argmax(&float_forward(net, &row.to_owned()));
        hits += (pred == label) as usize;
    }
    hits as f64 / net.labels.len() as f64
}

/// All layers mapped to tiled differential crossbars.
pub struct MappedNetwork {
    pub layers: Vec<TiledLayer>,
}

impl MappedNetwork {
    pub fn map(net: &LoadedNetwork, experiment: &ExperimentConfig) -> Result<Self> {
        let layers = net
            .layers
            .iter()
            .map(|(w, b, act)| TiledLayer::map(w, b.clone(), *act, experiment))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    /// Optionally noise-perturbed, solver-ready network.
    ///
    /// Hidden activations are unbounded while the analog tiles expect inputs
    /// in [0, 1], so each layer gets a fixed digital input scale calibrated
    /// from the float pass over the dataset (a fixed reference, matching the
    /// fixed-reference DACs); the scale is folded back after the analog
    /// product.
    pub fn prepare(
        &self,
        net: &LoadedNetwork,
        experiment: &ExperimentConfig,
        noise_delta: f64,
        noise_seed: u64,
    ) -> Result<PreparedNetwork> {
        let scales = calibrate_layer_scales(net);
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(idx, layer)| {
                let noisy = layer.with_noise(
                    noise_delta,
                    crate::rng::split_seed(noise_seed, idx as u64),
                    experiment,
                )?;
                PreparedLayer::new(&noisy, experiment)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedNetwork { layers, scales })
    }
}

/// Largest float-model input seen by each layer over the dataset (>= 1).
fn calibrate_layer_scales(net: &LoadedNetwork) -> Vec<f64> {
    let mut scales = vec![1.0f64; net.layers.len()];
    for row in net.dataset.rows() {
        let mut h = row.to_owned();
        for (idx, (w, b, act)) in net.layers.iter().enumerate() {
            let peak = h.iter().copied().fold(0.0f64, f64::max);
            scales[idx] = scales[idx].max(peak);
            let mut y = w.dot(&h) + b;
            act.apply(&mut y);
            h = y;
        }
    }
    scales
}

pub struct PreparedNetwork {
    layers: Vec<PreparedLayer>,
    scales: Vec<f64>,
}

impl PreparedNetwork {
    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let mut h = x.clone();
        for (layer, &scale) in self.layers.iter().zip(&self.scales) {
            let scaled = if scale > 1.0 { h.mapv(|v| v / scale) } else { h.clone() };
            let mut y = layer.forward_scaled(&scaled, scale)?;
            std::mem::swap(&mut h, &mut y);
        }
        Ok(h)
    }

    pub fn accuracy(&self, net: &LoadedNetwork) -> Result<f64> {
        let mut hits = 0usize;
        for (row, &label) in net.dataset.rows().into_iter().zip(&net.labels) {
            let pred = argmax(&self.forward(&row.to_owned())?);
            hits += (pred == label) as usize;
        }
        Ok(hits as f64 / net.labels.len() as f64)
    }
}
