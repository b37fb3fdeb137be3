use thiserror::Error;

/// Errors raised by the library.
///
/// Schedule problems found during validation are not errors; they are
/// collected into a [`crate::ValidationReport`]. The variants here cover
/// malformed input, violated preconditions, and exhausted search budgets.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WormsError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("non-uniform leaf height: leaf {leaf} has height {height}, expected {expected}")]
    NonUniformLeafHeight {
        leaf: usize,
        height: usize,
        expected: usize,
    },

    #[error("message {message} targets node {node}, which is not a leaf")]
    TargetNotLeaf { message: usize, node: usize },

    #[error("B = {0} is below the minimum of 12")]
    CapacityTooSmall(usize),

    #[error("P = {0} must be at least 1")]
    NoParallelism(usize),

    #[error("incomplete schedule: message {0} never reaches its target")]
    IncompleteSchedule(usize),

    #[error("schedule is not overfilling: {0}")]
    NotOverfilling(String),

    #[error("infeasible task schedule: {0}")]
    InfeasibleTaskSchedule(String),

    #[error("invalid outtree instance: {0}")]
    InvalidOuttree(String),

    #[error("horn_schedule requires P = 1, got P = {0}")]
    RequiresSingleMachine(usize),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),

    #[error("empty instance: generator produced no messages")]
    EmptyInstance,

    #[error("invalid 3-partition input: {0}")]
    InvalidThreePartition(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, WormsError>;
