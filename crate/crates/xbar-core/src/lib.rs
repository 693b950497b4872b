//! Circuit-accurate and reduced models of resistive crossbar arrays.
//!
//! A resistive crossbar computes an analog vector-matrix product: input
//! voltages applied to the rows multiply the device conductances and the
//! column currents accumulate the products. Wire, sense and driver
//! resistances, data-dependent DAC transfer, ADC quantization and device
//! variation all pull the real array away from that ideal.
//!
//! This crate provides:
//!
//! - [`circuit`] — the exact nodal model of the full resistive network,
//!   used as ground truth everywhere else;
//! - [`nonideal`] — a one-time exact reduction of the network onto its
//!   ports, so that every subsequent evaluation is a single vector-matrix
//!   product;
//! - [`converters`] — load-dependent DAC, saturating ADC, differential
//!   weight-to-conductance mapping and device variation sampling;
//! - [`characterize`] — error sweeps over size, state, inputs and
//!   variation, plus a fidelity comparison against a constant-error
//!   baseline;
//! - [`energy`] — event counters priced by a user-supplied energy table.

pub mod band;
pub mod characterize;
pub mod circuit;
pub mod config;
pub mod converters;
pub mod energy;
pub mod error;
pub mod matrix;
pub mod nonideal;
pub mod params;

pub use circuit::{assemble, assemble_with_drivers, port_conductance, NodalSystem, SolveResult};
pub use converters::{AdcConfig, DacConfig, GLoadMode, VariationConfig};
pub use energy::{EnergyLedger, PriceTable};
pub use error::{Error, Result};
pub use matrix::{ConductanceMatrix, Matrix};
pub use nonideal::{build_nonideal, NonIdealCrossbar};
pub use params::CrossbarParams;
