//! Experiment harness around the crossbar mapping engine: file formats,
//! experiment configuration, differential/tiled DNN-layer evaluation with
//! DAC/ADC quantization, comparison runs, and deterministic JSON reports.

pub mod compare;
pub mod config;
pub mod io;
pub mod network;
pub mod report;
pub mod rng;
pub mod tile;

pub use config::ExperimentConfig;
pub use tile::{
    adc_quantize, dac_quantize, differential_encode, partition_matrix, Activation, BitDepth,
    PreparedLayer, TiledLayer,
};
