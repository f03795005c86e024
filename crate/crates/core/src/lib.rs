//! Simulation and mapping of real matrices onto memristor crossbar tiles.
//!
//! The crate models a crossbar of programmable conductances with parasitic
//! wire, input, and output resistances, solves the resulting resistive (and
//! optionally nonlinear device-level) network, and maps arbitrary non-negative
//! matrices onto it: choosing cell conductances, a peripheral scaling factor,
//! and device state variables so the analog matrix-vector product tracks the
//! target matrix as closely as the hardware allows.
//!
//! Everything is generic over the floating-point scalar via [`Scalar`];
//! concrete `f64` aliases are exported for the common case.

pub mod analysis;
pub mod config;
pub mod device;
pub mod error;
pub mod grid;
pub mod mapping;
pub mod mna;
pub mod nonlinear;
pub mod scalar;
pub mod solver;

pub use config::CrossbarConfig;
pub use device::{DeviceModel, MemristorLaw, TransistorLaw};
pub use error::{CoreError, Result};
pub use grid::{frob_norm_sq, ConductanceGrid, TargetMatrix};
pub use mna::{
    assemble_mna, conductance_gradient, extract_conductance_matrix, realized_matrix,
    solve_node_voltages, CrossbarSolver, MnaSystem, NodeVoltageSolution,
};
pub use scalar::Scalar;

/// Double-precision aliases for the main entry types.
pub type CrossbarConfig64 = CrossbarConfig<f64>;
pub type ConductanceGrid64 = ConductanceGrid<f64>;
pub type TargetMatrix64 = TargetMatrix<f64>;
pub type DeviceModel64 = DeviceModel<f64>;

/// Single-precision aliases.
pub type CrossbarConfig32 = CrossbarConfig<f32>;
pub type ConductanceGrid32 = ConductanceGrid<f32>;
pub type TargetMatrix32 = TargetMatrix<f32>;
pub type DeviceModel32 = DeviceModel<f32>;
