//! Quantum state diffusion of a continuously measured qubit.
//!
//! The crate simulates weak measurement of one or two Pauli observables,
//! either with discrete Kraus maps or with the equivalent Itô SDEs, evolves the
//! matching Fokker–Planck densities and accumulates stochastic entropy
//! production along individual trajectories.
//!
//! Numerical code is generic over [`Real`] (`f64` or `f32`). The aliases at
//! the bottom of this file fix the scalar to `f64`.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod ensemble;
pub mod entropy;
pub mod error;
pub mod fpe;
pub mod kraus;
pub mod num;
pub mod quad;
pub mod rng;
pub mod sde;

pub use error::{QsdError, Result};
pub use num::Real;

pub type BlochState64 = bloch::BlochState<f64>;
pub type BlochState32 = bloch::BlochState<f32>;
pub type Matrix2 = bloch::ComplexMatrix2<f64>;
pub type Channel = kraus::MeasurementChannel<f64>;
pub type Scheme = kraus::KrausScheme<f64>;
pub type StepOutcome = kraus::KrausStepOutcome<f64>;
pub type Stepper = sde::StepperConfig<f64>;
pub type Grid = fpe::Grid1D<f64>;
pub type Field = fpe::PdfField<f64>;
pub type ThetaPdf = fpe::StationaryThetaPdf<f64>;
pub type Ledger = entropy::EntropyLedger<f64>;
