use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants fall in two families: validation problems (bad shapes, bad
/// configuration, bad inputs) and numerical failures (non-finite values,
/// degenerate geometry, stalled solvers). [`Error::is_numerical`] tells them
/// apart so front ends can map them to distinct exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid batch: need at least {min} rows, got {got}")]
    InvalidBatch { min: usize, got: usize },
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("row {row} has zero variance")]
    DegenerateRow { row: usize },
    #[error("invalid k = {k}: must be in 1..={max}")]
    InvalidK { k: usize, max: usize },
    #[error("non-finite value at layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite gradient for parameter block {block}")]
    NonFiniteGradient { block: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("neighbor {neighbor} has the same rotation as the base point")]
    DuplicateRotation { neighbor: usize },
    #[error("rank deficient: requested rank {requested}, achieved {achieved}")]
    RankDeficient { requested: usize, achieved: usize },
    #[error("pushforward collapsed to rank 0")]
    DegeneratePushforward,
    #[error("geodesic is ambiguous between antipodal rotations")]
    AmbiguousGeodesic,
    #[error("object generation failed: {0}")]
    Generation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate curve: segment {segment} has zero length")]
    DegenerateCurve { segment: usize },
    #[error("line search stalled at iteration {iteration}")]
    Stalled { iteration: usize },
    #[error("mapper has not been trained")]
    UntrainedMapper,
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::NonFiniteGradient { .. }
            | Error::NonFiniteLoss { .. }
            | Error::DegenerateRow { .. }
            | Error::RankDeficient { .. }
            | Error::DegeneratePushforward
            | Error::AmbiguousGeodesic
            | Error::Generation(_)
            | Error::DegenerateCurve { .. }
            | Error::Stalled { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Wraps the error with a human-readable location.
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: alloc::boxed::Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
