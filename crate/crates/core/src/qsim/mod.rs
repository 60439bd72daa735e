//! Statevector quantum simulator: circuits, fake backends, routing-only
//! transpilation, and the sampler / estimator primitives.

mod backend;
mod circuit;
mod random;
mod statevector;
mod transpile;

pub use backend::{backend_registry, lookup_backend, Backend};
pub use circuit::{Circuit, Gate, GateOp, Op, MAX_QUBITS};
pub use random::random_circuit;
pub use statevector::{
    apply_gate, estimate, estimate_within, norm, pauli_expectation, sample, sample_within,
    simulate, simulate_within, zero_state, JobKind, JobResult, Observable, PauliTerm, Statevector,
};
pub use transpile::{transpile, unpermute, RoutedCircuit, MAX_LEVEL};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("gate {gate} takes {expected} qubit(s), got {got}")]
    Arity {
        gate: Gate,
        expected: usize,
        got: usize,
    },
    #[error("gate {0} has a missing, unexpected or non-finite angle")]
    Parameter(Gate),
    #[error("two-qubit gate repeats qubit {0}")]
    RepeatedQubit(usize),
    #[error("circuit needs at least one qubit")]
    EmptyRegister,
    #[error("{0} qubits exceeds the simulator cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("qubit {qubit} out of range for {num_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("clbit {clbit} out of range for {num_clbits} classical bits")]
    ClbitOutOfRange { clbit: usize, num_clbits: usize },
    #[error("circuit contains measurements; use the sampler")]
    MeasurementInStatevector,
    #[error("circuit has no measurements to sample")]
    NoMeasurements,
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("gate acts on qubit {0} after it was measured")]
    GateAfterMeasure(usize),
    #[error("observable has no terms")]
    EmptyObservable,
    #[error("invalid Pauli character `{0}`")]
    InvalidPauli(char),
    #[error("Pauli label length {got}, expected {expected}")]
    LabelLength { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("coupling edge ({0}, {1}) is invalid")]
    BadCouplingEdge(usize, usize),
    #[error("coupling map of `{0}` is disconnected")]
    Disconnected(String),
    #[error("{circuit}-qubit circuit does not fit a {backend}-qubit backend")]
    CircuitTooLarge { circuit: usize, backend: usize },
    #[error("optimization level {0} not in 0..=3")]
    BadLevel(u8),
    #[error("execution budget exhausted")]
    DeadlineExceeded,
}
