use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid action for robot {robot}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    InvalidAction { robot: usize, step: Option<usize> },

    #[error("expected {expected} per-robot components, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("horizon must be at least 1")]
    InvalidHorizon,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "role map at step {step} sends participant {participant} to robot {robot}, but the primary has {robots} robots"
    )]
    RoleOutOfRange {
        step: usize,
        participant: usize,
        robot: usize,
        robots: usize,
    },

    #[error("time scale maps step {step} to primary step {primary_step}, beyond the primary trace ({len} states)")]
    TimeOutOfRange {
        step: usize,
        primary_step: usize,
        len: usize,
    },

    #[error("time scale is not strictly increasing at index {0}")]
    NotStrictlyIncreasing(usize),

    #[error("witness covers {covered} secondary steps, {required} required")]
    WitnessTooShort { covered: usize, required: usize },

    #[error("need at least two time scale entries to measure slowdown")]
    InsufficientData,

    #[error("outer witness has {participants} participants but the middle system has {robots} robots")]
    ArityMismatch { participants: usize, robots: usize },

    #[error("required offset {0} is indistinguishable from an empty sensor reading")]
    UnreachableOffset(f64),

    #[error("{roles} roles but only {robots} complicit robots")]
    InsufficientRobots { roles: usize, robots: usize },

    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("plateau for secondary step {0} exceeded the step cap")]
    Timeout(usize),

    #[error("squeeze sensor is undefined for negative state")]
    NegativeState,

    #[error("chase must start from a dyadic rational")]
    NonDyadicStart,

    #[error("at least one trial is required")]
    NoTrials,
}
