use thiserror::Error;

use crate::ClientId;

/// Errors returned by the protocol engine.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("interpolation node collision: alpha[{alpha}] coincides with beta[{beta}]")]
    NodeCollision { alpha: usize, beta: usize },

    #[error("duplicate interpolation node at index {0}")]
    DuplicateNode(usize),

    #[error("relative error is undefined for an all-zero reference tensor")]
    ZeroTruth,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("group size {r} exceeds the {available} candidate clients")]
    RTooLarge { r: usize, available: usize },

    #[error("{rows} sample rows cannot be split into {k} equal blocks")]
    IndivisibleO { rows: usize, k: usize },

    #[error("share from member {0} is missing")]
    MissingShare(ClientId),

    #[error("insufficient aggregated shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },

    #[error("blind factor has a zero entry at ({0}, {1})")]
    ZeroBlindEntry(usize, usize),

    #[error("value {value} does not fit the quantization range at {digits} digits")]
    Overflow { value: f64, digits: u32 },

    #[error("auxiliary proofs are incomplete for member {0}")]
    IncompleteAux(ClientId),

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("attack kind {0} cannot be applied in this role")]
    KindMismatch(String),

    #[error("unknown pairing backend {0:?}")]
    UnknownBackend(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
