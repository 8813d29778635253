use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector failed validation (component range or total mass).
    #[error("invalid error distribution: {0}")]
    InvalidDistribution(String),

    /// A parameter was outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A residual error was requested for a pair the parity check discards.
    #[error("joint error {0} does not pass the parity check; it has no residual")]
    NonSurviving(String),

    /// Rate estimation was asked to run on an empty check set.
    #[error("no check bits available for {0}")]
    EmptyCheckSet(&'static str),

    /// Feasibility was not monotone along a channel ray, so a bisection
    /// certificate would be unsound.
    #[error(
        "feasibility is not monotone on {family}: scale {feasible_above} is feasible \
         while smaller scale {infeasible_below} is not"
    )]
    NonMonotone {
        family: String,
        infeasible_below: f64,
        feasible_above: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
