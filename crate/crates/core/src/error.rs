use crate::model::{AppId, InstanceId, TypeId};
use thiserror::Error;

/// Errors shared across the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A probability parameter left the unit interval.
    #[error("probability {value} outside [0, 1] for {what}")]
    ProbabilityOutOfRange { what: &'static str, value: f64 },

    /// A problem failed load-time validation.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// No catalog type can host the application on a compatible market.
    #[error("application {0} cannot be hosted by any compatible instance type")]
    UnsolvableApp(AppId),

    /// An assignment or metric referenced an instance id not in the portfolio.
    #[error("unknown instance {0}")]
    UnknownInstance(InstanceId),

    /// An assignment referenced an application id not in the problem.
    #[error("unknown application {0}")]
    UnknownApp(AppId),

    /// A portfolio instance referenced a type id not in the catalog.
    #[error("unknown instance type {0}")]
    UnknownType(TypeId),

    /// A metric is undefined on the given input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    /// The scenario generator exhausted its retry budget.
    #[error("scenario generation failed: {0}")]
    Generation(String),

    /// The exhaustive oracle refused an instance above its size limits.
    #[error("problem exceeds oracle limits: {0}")]
    OracleLimits(String),
}

pub type Result<T> = std::result::Result<T, Error>;
