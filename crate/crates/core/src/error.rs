use thiserror::Error;

pub type Result<T, E = ChcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ChcError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    /// The inverse Neumann Laplacian only acts on zero-mean data.
    #[error("input has non-zero mean {mean:e} (tolerance {tolerance:e}); subtract the mean first")]
    NonZeroMeanInput { mean: f64, tolerance: f64 },

    /// Logarithmic potential evaluated outside (-1, 1).
    #[error("potential evaluated outside its domain at r = {0}")]
    DomainViolation(f64),

    #[error("resolvent iteration did not converge for r = {0}")]
    NoConvergence(f64),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    /// The singular potential was used without its Yosida regularization.
    #[error("logarithmic potential requires the regularized scheme")]
    PotentialDomainViolation,

    #[error("state became non-finite; time step too large?")]
    NonFinite,

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<ChcError>,
    },

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("empty path set")]
    EmptyPathSet,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ChcError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        ChcError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Stable variant name for machine-readable error lines.
    pub fn tag(&self) -> &'static str {
        match self {
            ChcError::InvalidGrid(_) => "InvalidGrid",
            ChcError::InvalidParameter { .. } => "InvalidParameter",
            ChcError::ShapeMismatch(_) => "ShapeMismatch",
            ChcError::NonFiniteInput(_) => "NonFiniteInput",
            ChcError::NonZeroMeanInput { .. } => "NonZeroMeanInput",
            ChcError::DomainViolation(_) => "DomainViolation",
            ChcError::NoConvergence(_) => "NoConvergence",
            ChcError::IndexOutOfRange { .. } => "IndexOutOfRange",
            ChcError::PotentialDomainViolation => "PotentialDomainViolation",
            ChcError::NonFinite => "NonFinite",
            ChcError::Step { source, .. } => source.tag(),
            ChcError::TrajectoryMismatch(_) => "TrajectoryMismatch",
            ChcError::EmptyPathSet => "EmptyPathSet",
            ChcError::Format(_) => "Format",
            ChcError::Io(_) => "Io",
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        ChcError::Step {
            step,
            source: Box::new(self),
        }
    }
}
