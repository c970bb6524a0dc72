//! Statevector simulation of small circuits and the gate-cutting workload
//! built on it.
//!
//! Qubit 0 is the least-significant bit of a basis-state index.

pub mod circuit;
pub mod cutting;
pub mod error;
pub mod gate;
pub mod observable;
pub mod sampling;
pub mod state;

pub use circuit::{hea_circuit, Circuit};
pub use error::{CutError, QuantumError};
pub use gate::{Gate, Matrix2};
pub use observable::{expectation, Observable, Pauli, PauliString};
pub use sampling::{derive_seed, sample_shots, Estimate};
pub use state::{simulate, StateVector, MAX_QUBITS};
