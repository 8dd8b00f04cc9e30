use thiserror::Error;

/// Everything that can go wrong inside the simulator and trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("coincident points: destination {dst} and source {src} are at distance zero")]
    Singularity { dst: usize, src: usize },

    #[error("pilot matrix is singular")]
    SingularPilots,

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,

    #[error("malformed IDX file at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
