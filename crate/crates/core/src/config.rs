use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Geometry and parasitics of one crossbar tile.
///
/// `rows` horizontal output lines by `cols` vertical input lines. Each cell sits
/// between its column line and its row line; wire segments of `r_wire` chain
/// adjacent cells, `r_input` connects each DAC to the head of its column, and
/// `r_output` connects the tail of each row to its TIA virtual ground.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarConfig<T> {
    /// Number of outputs (horizontal lines), N.
    pub rows: usize,
    /// Number of inputs (vertical lines), M.
    pub cols: usize,
    /// Resistance of one wire segment between adjacent cells, in ohms.
    pub r_wire: T,
    /// Resistance between each DAC and its column's first node, in ohms.
    pub r_input: T,
    /// Resistance between each row's last node and its TIA virtual ground, in ohms.
    pub r_output: T,
    /// Lower conductance bound of the idealized series cell, in siemens.
    pub g_min: T,
    /// Upper conductance bound of the idealized series cell, in siemens.
    pub g_max: T,
    /// Programming bit-depth; cells snap to `2^bits` equidistant levels.
    pub bits: u32,
    /// Maximum input voltage, in volts.
    pub v_max: T,
}

impl<T: Scalar> CrossbarConfig<T> {
    /// Build a config and validate its invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        r_wire: T,
        r_input: T,
        r_output: T,
        g_min: T,
        g_max: T,
        bits: u32,
        v_max: T,
    ) -> Result<Self> {
        let cfg = Self {
            rows,
            cols,
            r_wire,
            r_input,
            r_output,
            g_min,
            g_max,
            bits,
            v_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default tile: 1 ohm wire segments, 100 ohm input/output resistances,
    /// a 2 kOhm..3 MOhm programmable cell range, 8-bit programming, 0.2 V drive.
    pub fn with_dims(rows: usize, cols: usize) -> Result<Self> {
        Self::new(
            rows,
            cols,
            T::one(),
            T::cast(100.0),
            T::cast(100.0),
            T::cast(1.0 / 3.0e6),
            T::cast(1.0 / 2.0e3),
            8,
            T::cast(0.2),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(CoreError::InvalidConfig(format!(
                "dimensions must be positive, got {}x{}",
                self.rows, self.cols
            )));
        }
        for (name, r) in [
            ("r_wire", self.r_wire),
            ("r_input", self.r_input),
            ("r_output", self.r_output),
        ] {
            if !r.is_finite() || r < T::zero() {
                return Err(CoreError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {r}"
                )));
            }
        }
        if !(self.g_min.is_finite() && self.g_max.is_finite())
            || self.g_min <= T::zero()
            || self.g_min >= self.g_max
        {
            return Err(CoreError::InvalidConfig(format!(
                "need 0 < g_min < g_max, got g_min={} g_max={}",
                self.g_min, self.g_max
            )));
        }
        if self.bits < 1 || self.bits > 52 {
            return Err(CoreError::InvalidConfig(format!(
                "bits must be in 1..=52, got {}",
                self.bits
            )));
        }
        if !self.v_max.is_finite() || self.v_max <= T::zero() {
            return Err(CoreError::InvalidConfig(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        Ok(())
    }

    /// Number of programmable levels, `2^bits`.
    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    /// Spacing between adjacent programmable conductance levels.
    pub fn quantization_step(&self) -> T {
        (self.g_max - self.g_min) / T::cast((self.levels() - 1) as f64)
    }

    /// Default calibration vector entry, `v_max / 2`.
    pub fn v_cal(&self) -> T {
        self.v_max * T::half()
    }
}
