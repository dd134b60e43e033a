use std::io;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("node id {id} out of range for a tree with {len} nodes")]
    NodeOutOfRange { id: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at channel {channel}, voxel {voxel}")]
    NonFinite { channel: usize, voxel: usize },

    #[error("region id(s) {0:?} occur under the mask but have no mapping")]
    UnmappedRegions(Vec<u16>),

    #[error("node {0} is a leaf and cannot receive an \"other\" child")]
    LeafParent(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
