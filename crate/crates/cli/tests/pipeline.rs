//! Tiled evaluation pipeline against exact digital oracles.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xbarmap_cli::config::ExperimentConfig;
use xbarmap_cli::network::{self, MappedNetwork};
use xbarmap_cli::tile::{Activation, PreparedLayer, TiledLayer};

/// Idealized hardware: no parasitics, a conductance floor at the f64 noise
/// level, fine programming, no converters. The plumbing (tiling, differential
/// planes, scale reassembly) must then reproduce the digital product exactly.
fn idealized_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.crossbar.rows = 4;
    cfg.crossbar.cols = 4;
    cfg.crossbar.r_wire = 0.0;
    cfg.crossbar.r_input = 0.0;
    cfg.crossbar.r_output = 0.0;
    cfg.crossbar.g_min = 1e-18;
    cfg.crossbar.bits = 40;
    cfg
}

#[test]
fn tiled_forward_matches_the_dense_product() {
    let cfg = idealized_config();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = Array2::from_shape_fn((10, 10), |_| rng.gen_range(-1.0..1.0));
    let bias = Array1::zeros(10);
    let layer = TiledLayer::map(&w, bias, Activation::None, &cfg).unwrap();
    assert_eq!(layer.tiles.len(), 9, "10x10 over 4x4 tiles is a 3x3 grid");
    let prepared = PreparedLayer::new(&layer, &cfg).unwrap();
    for _ in 0..4 {
        let x = Array1::from_shape_fn(10, |_| rng.gen_range(0.0..1.0));
        let direct = w.dot(&x);
        let tiled = prepared.forward(&x).unwrap();
        for (a, b) in tiled.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn layer_forward_with_relu_and_bias_matches_digital() {
    let cfg = idealized_config();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = Array2::from_shape_fn((6, 7), |_| rng.gen_range(-1.0..1.0));
    let bias = Array1::from_shape_fn(6, |_| rng.gen_range(-0.5..0.5));
    let layer = TiledLayer::map(&w, bias.clone(), Activation::Relu, &cfg).unwrap();
    let prepared = PreparedLayer::new(&layer, &cfg).unwrap();
    let x = Array1::from_shape_fn(7, |_| rng.gen_range(0.0..1.0));
    let mut direct = w.dot(&x) + &bias;
    direct.mapv_inplace(|v| v.max(0.0));
    let analog = prepared.forward(&x).unwrap();
    for (a, b) in analog.iter().zip(direct.iter()) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    let zero = prepared.forward(&Array1::zeros(7)).unwrap();
    let mut expect = bias.clone();
    expect.mapv_inplace(|v| v.max(0.0));
    for (a, b) in zero.iter().zip(expect.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn fixture_network_maps_to_float_accuracy_on_ideal_hardware() {
    // quick subset: idealized hardware keeps the full pipeline exact
    let net = network::load_network(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/mlp/network.json"
    )))
    .unwrap();
    let mut cfg = idealized_config();
    cfg.crossbar.rows = 16;
    cfg.crossbar.cols = 16;

    // trim to 30 samples to keep this a unit-scale test
    let trimmed = network::LoadedNetwork {
        layers: net.layers.clone(),
        dataset: net.dataset.slice(ndarray::s![..30, ..]).to_owned(),
        labels: net.labels[..30].to_vec(),
    };
    let float_acc = network::float_accuracy(&trimmed);
    let mapped = MappedNetwork::map(&trimmed, &cfg).unwrap();
    let prepared = mapped.prepare(&trimmed, &cfg, 0.0, 0).unwrap();
    let acc = prepared.accuracy(&trimmed).unwrap();
    assert_eq!(acc, float_acc, "idealized analog pass must match float");
}

#[test]
fn noise_perturbs_solutions_deterministically() {
    let cfg = {
        let mut c = ExperimentConfig::default();
        c.crossbar.rows = 4;
        c.crossbar.cols = 4;
        c
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = Array2::from_shape_fn((4, 4), |_| rng.gen_range(-1.0..1.0));
    let layer = TiledLayer::map(&w, Array1::zeros(4), Activation::None, &cfg).unwrap();
    let a = layer.with_noise(0.1, 9, &cfg).unwrap();
    let b = layer.with_noise(0.1, 9, &cfg).unwrap();
    let c = layer.with_noise(0.1, 10, &cfg).unwrap();
    assert_eq!(
        a.tiles[0].plus.g_quantized.values(),
        b.tiles[0].plus.g_quantized.values()
    );
    assert_ne!(
        a.tiles[0].plus.g_quantized.values(),
        c.tiles[0].plus.g_quantized.values()
    );
    // delta = 0 is the identity
    let id = layer.with_noise(0.0, 9, &cfg).unwrap();
    assert_eq!(
        id.tiles[0].plus.g_quantized.values(),
        layer.tiles[0].plus.g_quantized.values()
    );
}
