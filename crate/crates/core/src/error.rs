use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The sampled boundary comes too close to (or crosses) the fixed disk.
    #[error("degenerate boundary: radius {radius:.6} at phi = {phi:.6} is below {limit}")]
    DegenerateBoundary { phi: f64, radius: f64, limit: f64 },

    #[error("invalid sample vector: {0}")]
    InvalidSample(String),

    #[error("coincident points in fundamental solution")]
    CoincidentPoints,

    #[error("boundary meshes intersect or touch; distinct curves must be separated")]
    IntersectingBoundaries,

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("level {level} out of range ({min}..={max})")]
    LevelOutOfRange { level: usize, min: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
