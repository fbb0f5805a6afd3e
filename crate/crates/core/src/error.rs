use thiserror::Error;

use crate::strategy::OfflineSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n_elements = {0} is not a power of two")]
    NonPowerOfTwoElements(usize),
    #[error("n_elements = {n_elements} does not equal 2^max_grouping_level = {expected}")]
    ElementLevelMismatch { n_elements: usize, expected: usize },
    #[error(
        "probing at grouping level {level} takes {probe_time_s} s, not below the coherence time {coherence_time_s} s"
    )]
    ProbeExceedsCoherence {
        level: u32,
        probe_time_s: f64,
        coherence_time_s: f64,
    },
    #[error("parameter `{0}` must be strictly positive")]
    NonPositiveParameter(&'static str),
    #[error("grouping level {level} outside 1..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no user was granted in this RR phase")]
    EmptyGrantSet,
    #[error("step size {given} outside the legal interval [{lo}, {hi}]")]
    StepSizeOutOfRange { given: f64, lo: f64, hi: f64 },
    #[error("accuracy must be strictly positive, got {0}")]
    NonPositiveAccuracy(f64),
    #[error("fixed-point iteration did not reach the requested accuracy after {} iterations", .0.iterations)]
    MaxIterationsExceeded(Box<OfflineSolution>),
    #[error("{0} consecutive RR phases without data transmission")]
    SkipCapExceeded(u64),
    #[error("strategy `{0}` requires a throughput threshold")]
    MissingLambdaStar(String),
    #[error("unknown strategy tag `{0}`")]
    UnknownStrategy(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
