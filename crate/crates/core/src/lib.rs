//! Single-shot measurement of arbitrary motional observables of a trapped ion.
//!
//! The crate synthesizes arbitrary motional superpositions with sequences of
//! carrier ("vertical") and red-sideband ("diagonal") laser pulses, propagates
//! them under the exact travelling- or standing-wave Hamiltonian, and runs the
//! sequential ground-state filtering protocol that reduces a measurement of
//! any observable to repeated "is the ion in `|g,0⟩`?" questions.
//!
//! All numerics are generic over the scalar type ([`Real`]: `f32` or `f64`);
//! the aliases below fix the double-precision instantiation used by the CLI.

pub mod error;
pub mod hamiltonians;
pub mod harness;
pub mod hilbert;
pub mod measurement;
pub mod num;
pub mod observables;
pub mod propagator;
pub mod pulse_compiler;

pub use error::{Error, Result};
pub use num::Real;

pub type StateVector = hilbert::StateVector<f64>;
pub type OperatorMatrix = hilbert::OperatorMatrix<f64>;
pub type TrapParams = hamiltonians::TrapParams<f64>;
pub type LaserPulse = hamiltonians::LaserPulse<f64>;
pub type IntegratorConfig = propagator::IntegratorConfig<f64>;
pub type Schedule = pulse_compiler::Schedule<f64>;
pub type ObservableBasis = observables::ObservableBasis<f64>;
pub type StateRecipe = observables::StateRecipe<f64>;
pub type MeasurementRecord = measurement::MeasurementRecord<f64>;
pub type Protocol = measurement::Protocol<f64>;

pub type StateVector32 = hilbert::StateVector<f32>;
pub type OperatorMatrix32 = hilbert::OperatorMatrix<f32>;
pub type Schedule32 = pulse_compiler::Schedule<f32>;
pub type ObservableBasis32 = observables::ObservableBasis<f32>;
