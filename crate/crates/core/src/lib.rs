//! Simulation and analysis of feedback-stabilized continuous measurement of
//! cavity photon number.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod ensemble;
pub mod error;
pub mod fock;
pub mod qfunc;
pub mod rng;
pub mod scalar;
pub mod sme;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DensityMatrix64 = fock::DensityMatrix<f64>;
pub type DensityMatrix32 = fock::DensityMatrix<f32>;
pub type FockOperator64 = fock::FockOperator<f64>;
pub type SimParams64 = sme::SimParams<f64>;
pub type SimParams32 = sme::SimParams<f32>;
pub type Engine64 = sme::Engine<f64>;
pub type TrajectoryRecord64 = sme::TrajectoryRecord<f64>;
pub type EnsembleSpec64 = ensemble::EnsembleSpec<f64>;
pub type EnsembleStats64 = ensemble::EnsembleStats<f64>;
pub type QGrid64 = qfunc::QGrid<f64>;
