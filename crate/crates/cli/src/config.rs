//! Versioned experiment configuration.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use xbarmap_core::mapping::AlphaSearchParams;
use xbarmap_core::{CrossbarConfig, DeviceModel, MemristorLaw, TransistorLaw};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub crossbar: CrossbarSection,
    /// Device model for state solves and nonlinear evaluation; absent means
    /// the ideal-conductor (linear) evaluation path.
    #[serde(default)]
    pub device_model: Option<DeviceModelSection>,
    #[serde(default)]
    pub alpha_search: AlphaSection,
    #[serde(default)]
    pub noise: NoiseSection,
    /// DAC bit depth; absent means no input quantization.
    #[serde(default)]
    pub dac_bits: Option<u32>,
    /// ADC bit depth (dynamic reference); absent means no output quantization.
    #[serde(default)]
    pub adc_bits: Option<u32>,
    #[serde(default)]
    pub inputs: InputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            crossbar: CrossbarSection::default(),
            device_model: None,
            alpha_search: AlphaSection::default(),
            noise: NoiseSection::default(),
            dac_bits: None,
            adc_bits: None,
            inputs: InputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        self.crossbar
            .to_core(self.crossbar.rows, self.crossbar.cols)
            .context("crossbar section")?;
        if let Some(dm) = &self.device_model {
            dm.to_core().context("device_model section")?;
        }
        if !(0.0..=0.2).contains(&self.noise.delta) {
            bail!("noise.delta must lie in [0, 0.2], got {}", self.noise.delta);
        }
        Ok(())
    }

    pub fn device_model(&self) -> Result<Option<DeviceModel<f64>>> {
        self.device_model.as_ref().map(|d| d.to_core()).transpose()
    }

    pub fn alpha_params(&self) -> AlphaSearchParams<f64> {
        AlphaSearchParams {
            alpha0: self.alpha_search.alpha0,
            beta: self.alpha_search.beta,
            patience: self.alpha_search.patience,
            max_iters: self.alpha_search.max_iters,
            ..AlphaSearchParams::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CrossbarSection {
    pub rows: usize,
    pub cols: usize,
    pub r_wire: f64,
    pub r_input: f64,
    pub r_output: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub bits: u32,
    pub v_max: f64,
}

impl Default for CrossbarSection {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            r_wire: 1.0,
            r_input: 100.0,
            r_output: 100.0,
            g_min: 1.0 / 3.0e6,
            g_max: 1.0 / 2.0e3,
            bits: 8,
            v_max: 0.2,
        }
    }
}

impl CrossbarSection {
    /// Core config with the given dimensions (tile shape may differ from the
    /// configured full-array shape, e.g. for edge tiles or loaded matrices).
    pub fn to_core(&self, rows: usize, cols: usize) -> Result<CrossbarConfig<f64>> {
        CrossbarConfig::new(
            rows,
            cols,
            self.r_wire,
            self.r_input,
            self.r_output,
            self.g_min,
            self.g_max,
            self.bits,
            self.v_max,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceModelSection {
    /// "sinh" or "linear".
    pub kind: String,
    pub g_dev_min: f64,
    pub g_dev_max: f64,
    /// Nonlinearity in 1/volts; only used by the sinh law.
    pub nonlinearity: f64,
    pub transistor: TransistorSection,
}

impl Default for DeviceModelSection {
    fn default() -> Self {
        Self {
            kind: "sinh".into(),
            g_dev_min: 3.0e-7,
            g_dev_max: 6.5e-4,
            nonlinearity: 2.0,
            transistor: TransistorSection::default(),
        }
    }
}

impl DeviceModelSection {
    pub fn to_core(&self) -> Result<DeviceModel<f64>> {
        let memristor = match self.kind.as_str() {
            "sinh" => MemristorLaw::Sinh {
                g_dev_min: self.g_dev_min,
                g_dev_max: self.g_dev_max,
                c: self.nonlinearity,
            },
            "linear" => MemristorLaw::Linear {
                g_dev_min: self.g_dev_min,
                g_dev_max: self.g_dev_max,
            },
            other => bail!("unknown memristor law {other:?} (expected \"sinh\" or \"linear\")"),
        };
        let transistor = match self.transistor.kind.as_str() {
            "ideal" => TransistorLaw::Ideal,
            "square_law" => TransistorLaw::SquareLaw {
                k: self.transistor.k,
                v_th: self.transistor.v_th,
                v_gate: self.transistor.v_gate,
                g_leak: self.transistor.g_leak,
            },
            other => {
                bail!("unknown transistor law {other:?} (expected \"square_law\" or \"ideal\")")
            }
        };
        DeviceModel::new(memristor, transistor).map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TransistorSection {
    /// "square_law" or "ideal".
    pub kind: String,
    pub k: f64,
    pub v_th: f64,
    pub v_gate: f64,
    pub g_leak: f64,
}

impl Default for TransistorSection {
    fn default() -> Self {
        Self {
            kind: "square_law".into(),
            k: 4.0e-3,
            v_th: 0.5,
            v_gate: 1.8,
            g_leak: 1.0e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSection {
    pub alpha0: Option<f64>,
    pub beta: f64,
    pub patience: usize,
    pub max_iters: usize,
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self {
            alpha0: None,
            beta: 0.1,
            patience: 3,
            max_iters: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// RTN magnitude as a fraction in [0, 0.2].
    pub delta: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { delta: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InputSection {
    pub count: usize,
    /// Only "uniform" is defined: entries i.i.d. uniform over [0, v_max].
    pub distribution: String,
}

impl Default for InputSection {
    fn default() -> Self {
        Self {
            count: 100,
            distribution: "uniform".into(),
        }
    }
}
