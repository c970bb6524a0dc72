use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("{requested}-qubit register exceeds the simulator cap of {cap} qubits")]
    CapacityExceeded { requested: usize, cap: usize },

    #[error("observable spans {observable} qubits but the state has {state}")]
    DimensionMismatch { observable: usize, state: usize },

    #[error("gate {index}: qubit {qubit} out of range for a {num_qubits}-qubit circuit")]
    QubitOutOfRange {
        index: usize,
        qubit: usize,
        num_qubits: usize,
    },

    #[error("gate {index}: two-qubit gate needs distinct qubits")]
    RepeatedQubit { index: usize },

    #[error("gate {index}: rotation angle is not finite")]
    NonFiniteAngle { index: usize },

    #[error("gate {index}: matrix is not unitary (deviation {deviation:e})")]
    NotUnitary { index: usize, deviation: f64 },

    #[error("circuit must have at least one qubit")]
    EmptyRegister,

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid circuit document: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutError {
    #[error("gate {0} cannot be cut: only CZ and CNOT have a decomposition")]
    UnsupportedGate(String),

    #[error("gate index {0} does not name an entangling gate")]
    NotEntangling(usize),

    #[error("no cut set with at most {max_cuts} cuts keeps fragments within {max_fragment_qubits} qubits")]
    Infeasible {
        max_fragment_qubits: usize,
        max_cuts: usize,
    },

    #[error("fragment bound must be at least one qubit")]
    InvalidBound,

    #[error("decomposition of {gate} deviates from the gate channel by {deviation:e}")]
    DecompositionUnverified { gate: &'static str, deviation: f64 },

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifact(Vec<String>),

    #[error(transparent)]
    Quantum(#[from] QuantumError),
}
