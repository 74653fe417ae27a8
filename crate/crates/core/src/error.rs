use thiserror::Error;

/// Errors shared across the solver and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}x{0} vs {1}x{1} modes")]
    GridMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("wong-zakai level {level} exceeds path resolution (max_level {max_level}, k_dim {k_dim})")]
    LevelOutOfRange {
        level: u32,
        max_level: u32,
        k_dim: usize,
    },

    #[error("noise mode index {index} out of range for k_dim {k_dim}")]
    ModeOutOfRange { index: usize, k_dim: usize },

    #[error("noise dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time step T/2^{dt_log2} does not resolve dyadic mesh T/2^{mesh_log2}")]
    StepMeshMismatch { dt_log2: u32, mesh_log2: u32 },

    #[error("solution blew up at step {step}: |u|_H = {h_norm}")]
    BlowUp { step: usize, h_norm: f64 },

    #[error("path dump is malformed: {0}")]
    BadDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
