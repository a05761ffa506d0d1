use crate::model::TaskId;
use thiserror::Error;

/// Errors surfaced by the engine, the oracles and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument violated its domain constraint.
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// Aggregation was asked to average an empty set of reports.
    #[error("cannot aggregate an empty set of reports")]
    EmptyAggregation,

    /// Fewer winners than the accuracy requirement demands.
    #[error("{n_winners} winners cannot meet an accuracy requirement of {requirement}")]
    BelowRequirement { n_winners: u32, requirement: u32 },

    /// A Monte Carlo routine was invoked with too few trials to be meaningful.
    #[error("at least {minimum} trials required, got {trials}")]
    TooFewTrials { trials: u64, minimum: u64 },

    /// The submitted bids cannot cover every task requirement.
    #[error("tasks {0:?} cannot be fully covered by the submitted bids")]
    Infeasible(Vec<TaskId>),

    /// An exhaustive oracle was asked to solve an instance beyond its size cap.
    #[error("instance has {n} users, exhaustive search capped at {limit}")]
    TooLarge { n: usize, limit: usize },

    /// The approximation-ratio certificate is undefined for this instance.
    #[error("approximation ratio degenerate: {0}")]
    DegenerateRatio(String),

    /// Scenario generation could not cover the drawn requirements with margin.
    #[error("generated population cannot cover tasks {tasks:?} with a spare bidder each")]
    GenerationInfeasible { tasks: Vec<TaskId> },

    /// The participation target demands more selections per slot than the
    /// requirements are estimated to produce.
    #[error(
        "participation target needs {required:.2} selections per slot, \
         estimated capacity is {estimated:.2}"
    )]
    ParticipationInfeasible { required: f64, estimated: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
