//! Nonlinear device laws for the memristor / access-transistor cell.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Memristor current law `i_m(s, v)` with internal state `s` in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum MemristorLaw<T> {
    /// Ohmic device: `i = g_dev(s) * v`.
    Linear { g_dev_min: T, g_dev_max: T },
    /// Smooth nonlinear device: `i = g_dev(s) * sinh(c * v) / c`.
    ///
    /// The `c -> 0` limit recovers the linear law; `c` is in 1/volts.
    Sinh { g_dev_min: T, g_dev_max: T, c: T },
}

impl<T: Scalar> MemristorLaw<T> {
    pub fn bounds(&self) -> (T, T) {
        match *self {
            MemristorLaw::Linear { g_dev_min, g_dev_max }
            | MemristorLaw::Sinh { g_dev_min, g_dev_max, .. } => (g_dev_min, g_dev_max),
        }
    }

    /// Small-signal device conductance at `v = 0` for state `s`.
    pub fn conductance(&self, s: T) -> T {
        let (lo, hi) = self.bounds();
        lo + s * (hi - lo)
    }

    /// State whose small-signal conductance equals `g_dev`, unclamped.
    pub fn state_for_conductance(&self, g_dev: T) -> T {
        let (lo, hi) = self.bounds();
        (g_dev - lo) / (hi - lo)
    }

    pub fn current(&self, s: T, v: T) -> T {
        match *self {
            MemristorLaw::Linear { .. } => self.conductance(s) * v,
            MemristorLaw::Sinh { c, .. } => self.conductance(s) * (c * v).sinh() / c,
        }
    }

    /// Partial derivatives (d i/d s, d i/d v).
    pub fn partials(&self, s: T, v: T) -> (T, T) {
        let (lo, hi) = self.bounds();
        match *self {
            MemristorLaw::Linear { .. } => ((hi - lo) * v, self.conductance(s)),
            MemristorLaw::Sinh { c, .. } => (
                (hi - lo) * (c * v).sinh() / c,
                self.conductance(s) * (c * v).cosh(),
            ),
        }
    }
}

/// Access-transistor current law `i_t(v_a, v_b, v_g)`.
///
/// `current(v_a, v_b)` is the current flowing from terminal a to terminal b;
/// it is zero at `v_a == v_b` and monotone in the terminal difference.
#[derive(Debug, Clone, PartialEq)]
pub enum TransistorLaw<T> {
    /// Perfect conductor; the cell degenerates to the memristor alone.
    Ideal,
    /// Symmetric square-law FET in triode/saturation with a fixed gate drive.
    ///
    /// `g_leak` is a tiny parallel conductance keeping the Jacobian nonsingular
    /// in cutoff.
    SquareLaw { k: T, v_th: T, v_gate: T, g_leak: T },
}

impl<T: Scalar> TransistorLaw<T> {
    /// Current from terminal a to terminal b with its partial derivatives
    /// (i, di/dv_a, di/dv_b).
    pub fn current_and_partials(&self, v_a: T, v_b: T) -> (T, T, T) {
        match *self {
            TransistorLaw::Ideal => {
                // callers must contract the two terminals instead
                (T::zero(), T::zero(), T::zero())
            }
            TransistorLaw::SquareLaw { k, v_th, v_gate, g_leak } => {
                // Source/drain swap with the lower terminal acting as source.
                let (i, da, db) = if v_a >= v_b {
                    let (i, dgs, dds) = nmos_drain_current(k, v_th, v_gate - v_b, v_a - v_b);
                    (i, dds, -dgs - dds)
                } else {
                    let (i, dgs, dds) = nmos_drain_current(k, v_th, v_gate - v_a, v_b - v_a);
                    (-i, dgs + dds, -dds)
                };
                (i + g_leak * (v_a - v_b), da + g_leak, db - g_leak)
            }
        }
    }

    pub fn current(&self, v_a: T, v_b: T) -> T {
        self.current_and_partials(v_a, v_b).0
    }

    /// Small-signal conductance around `v_a = v_b = v`.
    pub fn small_signal(&self, v: T) -> Option<T> {
        match *self {
            TransistorLaw::Ideal => None,
            TransistorLaw::SquareLaw { k, v_th, v_gate, g_leak } => {
                let vov = v_gate - v - v_th;
                Some(if vov > T::zero() { k * vov + g_leak } else { g_leak })
            }
        }
    }
}

/// Square-law NMOS drain current with partials (I, dI/d v_gs, dI/d v_ds),
/// valid for v_ds >= 0, covering cutoff, triode, and saturation.
fn nmos_drain_current<T: Scalar>(k: T, v_th: T, v_gs: T, v_ds: T) -> (T, T, T) {
    let vov = v_gs - v_th;
    if vov <= T::zero() {
        (T::zero(), T::zero(), T::zero())
    } else if v_ds < vov {
        let i = k * (vov * v_ds - v_ds * v_ds * T::half());
        (i, k * v_ds, k * (vov - v_ds))
    } else {
        let i = k * T::half() * vov * vov;
        (i, k * vov, T::zero())
    }
}

/// Memristor in series with its access transistor; the per-cell device model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel<T> {
    pub memristor: MemristorLaw<T>,
    pub transistor: TransistorLaw<T>,
}

impl<T: Scalar> DeviceModel<T> {
    pub fn new(memristor: MemristorLaw<T>, transistor: TransistorLaw<T>) -> Result<Self> {
        let (lo, hi) = memristor.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo <= T::zero() || lo >= hi {
            return Err(CoreError::InvalidConfig(format!(
                "memristor conductance bounds must satisfy 0 < min < max, got [{lo}, {hi}]"
            )));
        }
        if let MemristorLaw::Sinh { c, .. } = memristor {
            if !c.is_finite() || c <= T::zero() {
                return Err(CoreError::InvalidConfig(format!(
                    "sinh nonlinearity must be positive, got {c}"
                )));
            }
        }
        if let TransistorLaw::SquareLaw { k, v_th, v_gate, g_leak } = transistor {
            if !k.is_finite() || k <= T::zero() {
                return Err(CoreError::InvalidConfig(format!(
                    "transconductance factor must be positive, got {k}"
                )));
            }
            if v_gate <= v_th {
                return Err(CoreError::InvalidConfig(format!(
                    "gate drive {v_gate} must exceed threshold {v_th}"
                )));
            }
            if g_leak < T::zero() {
                return Err(CoreError::InvalidConfig("negative leak conductance".into()));
            }
        }
        Ok(Self { memristor, transistor })
    }

    /// Default nonlinear model: mildly nonlinear sinh memristor behind a
    /// square-law access transistor whose on-conductance comfortably exceeds
    /// the cell range, so states in [0, 1] cover the default 2 kOhm..3 MOhm
    /// series-cell window.
    pub fn default_sinh() -> Self {
        Self::new(
            MemristorLaw::Sinh {
                g_dev_min: T::cast(3.0e-7),
                g_dev_max: T::cast(6.5e-4),
                c: T::two(),
            },
            TransistorLaw::SquareLaw {
                k: T::cast(4.0e-3),
                v_th: T::half(),
                v_gate: T::cast(1.8),
                g_leak: T::cast(1.0e-12),
            },
        )
        .expect("default model is valid")
    }

    /// Linear memristor with an ideal access device; the cell reduces to an
    /// ideal conductor with `g = g_dev(s)`.
    pub fn linear_ideal() -> Self {
        Self::new(
            MemristorLaw::Linear {
                g_dev_min: T::cast(3.0e-7),
                g_dev_max: T::cast(6.5e-4),
            },
            TransistorLaw::Ideal,
        )
        .expect("linear model is valid")
    }

    /// Series small-signal conductance of the whole cell at state `s`, around
    /// zero bias.
    pub fn cell_small_signal(&self, s: T) -> T {
        let gm = self.memristor.conductance(s);
        match self.transistor.small_signal(T::zero()) {
            None => gm,
            Some(gt) => gm * gt / (gm + gt),
        }
    }

    /// State whose series small-signal conductance equals `g_cell`, unclamped;
    /// `None` when the access transistor cannot carry that conductance at all.
    pub fn state_for_cell_conductance(&self, g_cell: T) -> Option<T> {
        match self.transistor.small_signal(T::zero()) {
            None => Some(self.memristor.state_for_conductance(g_cell)),
            Some(gt) => {
                if g_cell >= gt {
                    None
                } else {
                    let g_dev = g_cell * gt / (gt - g_cell);
                    Some(self.memristor.state_for_conductance(g_dev))
                }
            }
        }
    }
}
