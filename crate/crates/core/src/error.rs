use thiserror::Error;

/// Errors raised by the belief, fusion, loss and training routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("frame size {0} outside 1..=16")]
    InvalidFrame(usize),
    #[error("masses sum to {0}, expected 1")]
    NonUnitSum(f64),
    #[error("the empty set carries mass {0}")]
    EmptySetMass(f64),
    #[error("subset {subset:#b} lies outside a frame of size {frame}")]
    SubsetOutOfFrame { subset: u32, frame: usize },
    #[error("mass value {0} is negative or not finite")]
    InvalidMassValue(f64),
    #[error("invalid mass function: {0}")]
    InvalidMass(String),
    #[error("mass functions live on different frames ({0} vs {1})")]
    FrameMismatch(usize, usize),
    #[error("total conflict between sources (K = 1)")]
    TotalConflict,
    #[error("evidence must be non-negative and finite, got {0}")]
    NegativeEvidence(f64),
    #[error("full-set mass is zero, no Dirichlet inverse exists")]
    ZeroUncertainty,
    #[error("cannot split a singleton focal element")]
    SingletonSplit,
    #[error("information volume did not converge within {0} loops")]
    NonConvergence(usize),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("all fused terms vanished")]
    DegenerateInput,
    #[error("grid dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("logits contain a non-finite value")]
    NonFiniteInput,
    #[error("label vector is not one-hot")]
    MalformedOneHot,
    #[error("rank {rank} outside 1..={voxels}")]
    RankOutOfBounds { rank: usize, voxels: usize },
    #[error("epoch {epoch} outside 1..={total}")]
    EpochOutOfBounds { epoch: usize, total: usize },
    #[error("mask ratio {0} outside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("mask has no surface points")]
    EmptySurface,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
