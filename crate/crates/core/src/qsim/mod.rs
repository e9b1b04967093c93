//! State-vector simulator for the small gate set used by the QNN and the
//! homomorphic evaluator.
//!
//! Qubit ordering is little-endian throughout: qubit 0 is the least
//! significant bit of the basis index. States are compared up to global phase.

mod basis;
mod circuit;
mod gate;
mod state;

pub use basis::{BasisState, QState};
pub use circuit::{run_circuit, run_circuit_with_rng, Circuit};
pub use gate::{Gate, GateKind};
pub use state::{apply_gate, expectation_z, fidelity, measure_all, reset_qubit, StateVector};

use thiserror::Error;

/// Largest register the dense simulator will allocate.
pub const MAX_QUBITS: usize = 20;

/// Largest register the basis-state fast path can track.
pub const MAX_BASIS_QUBITS: usize = 64;

/// Norm tolerance used by validation and measurement.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("register of {0} qubits exceeds the simulator limit")]
    TooManyQubits(usize),
    #[error("register must have at least one qubit")]
    EmptyRegister,
    #[error("qubit {qubit} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("{kind} takes {expected} qubit(s), got {got}")]
    Arity {
        kind: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("qubit {0} repeated in gate targets")]
    DuplicateTarget(usize),
    #[error("{0} requires an angle")]
    MissingAngle(GateKind),
    #[error("{0} does not take an angle")]
    UnexpectedAngle(GateKind),
    #[error("rotation angle must be finite")]
    NonFiniteAngle,
    #[error("{0} has no inverse")]
    NotInvertible(GateKind),
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: circuit has {circuit} qubits, state has {state}")]
    DimensionMismatch { circuit: usize, state: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state norm {0} deviates from 1")]
    NotNormalized(f64),
    #[error("RESET needs a random source; use run_circuit_with_rng")]
    ResetNeedsRng,
    #[error("qubits {0:?} are not all in |0>")]
    NotProduct(Vec<usize>),
}
