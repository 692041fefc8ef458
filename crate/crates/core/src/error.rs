//! Error types shared across the simulator.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MeshError>;

#[derive(Debug, Error)]
pub enum MeshError {
    /// Caller violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cell's scratch capacity would be exceeded; an algorithm bug signal.
    #[error("capacity fault at cell ({x}, {y}): {detail}")]
    CapacityFault { x: u32, y: u32, detail: String },

    /// Squirrel payload capacity would be exceeded.
    #[error("payload fault for squirrel {id}: {detail}")]
    PayloadFault { id: u32, detail: String },

    /// The scheduler reached a state it must never reach (e.g. deadlock).
    #[error("scheduling fault: {0}")]
    SchedulingFault(String),

    #[error("unsupported metric for this operation: {0}")]
    UnsupportedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MeshError {
    pub fn domain(msg: impl Into<String>) -> Self {
        MeshError::Domain(msg.into())
    }
}
