//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the demonstration, inference, and training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Feature vectors of different dimensions were mixed.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// An operation received an empty collection or file.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A data file row could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A feature extractor was used on input it cannot handle.
    #[error("extractor kind mismatch: {0}")]
    ExtractorKind(String),

    /// DBSCAN produced no clusters.
    #[error("no clusters found; decrease eps or min_points, or provide more demonstrations")]
    NoClusters,

    /// An abstract demonstration references a proposition outside 0..k.
    #[error("unknown proposition p{id} (cluster count k = {k})")]
    UnknownProposition { id: usize, k: usize },

    /// Demonstrations end in different RM states.
    #[error("demonstrations end in different RM states: u{0} vs u{1}")]
    InconsistentGoal(usize, usize),

    /// No demonstration ever leaves the initial RM state.
    #[error("degenerate task: no demonstration leaves the initial RM state")]
    DegenerateTask,

    /// The goal state cannot be reached from some RM state.
    #[error("goal state u{goal} is unreachable from u{state}; the RM edge map is incomplete")]
    UnreachableGoal { state: usize, goal: usize },

    /// The labeling function returned more than one true proposition.
    #[error("ambiguous label {props:?}: kappa is too large for the prototype separation")]
    AmbiguousLabel { props: Vec<usize> },

    /// A transition references an RM state outside the machine.
    #[error("unknown RM state index {0}")]
    StateIndex(usize),

    /// A schedule was queried outside its valid range.
    #[error("episode {episode} out of range (configured episodes = {episodes})")]
    Range { episode: usize, episodes: usize },

    /// A recorded demonstration does not replay under the environment dynamics.
    #[error("demonstration {demo} inconsistent with environment dynamics at step {step}")]
    ReplayMismatch { demo: usize, step: usize },

    /// Coverage mode needs at least one demonstration per allowed ordering.
    #[error("coverage requires at least {required} demonstrations, got {requested}")]
    Coverage { required: usize, requested: usize },

    /// Prototype vectors are closer than 2*kappa, so labels would overlap.
    #[error(
        "prototype separation violated: minimum pairwise prototype distance {min_distance} \
         is not greater than 2*kappa = {two_kappa}; decrease kappa or eps"
    )]
    SeparationViolation { min_distance: f64, two_kappa: f64 },

    /// The first frames of the demonstrations do not form a single cluster.
    #[error("initial-state cluster violation: {0}; adjust eps or min_points")]
    InitialCluster(String),

    /// A task specification is physically invalid.
    #[error("invalid task: {0}")]
    InvalidTask(String),

    /// Configuration file or parameter validation failed.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 config/validation, 3 inference, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } => 4,
            Error::NoClusters
            | Error::UnknownProposition { .. }
            | Error::InconsistentGoal(_, _)
            | Error::DegenerateTask
            | Error::UnreachableGoal { .. }
            | Error::AmbiguousLabel { .. }
            | Error::SeparationViolation { .. }
            | Error::InitialCluster(_) => 3,
            _ => 2,
        }
    }
}
