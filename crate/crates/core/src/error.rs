use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transition row (s={state}, a={action}) sums to {sum} (excess {excess:+e})")]
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
        /// `sum - 1`
        excess: f64,
    },
    #[error("transition row (s={state}, a={action}) references state {index} but n_states = {n_states}")]
    Index {
        state: usize,
        action: usize,
        index: usize,
        n_states: usize,
    },
    #[error("transition row (s={state}, a={action}) has invalid probability {value}")]
    Probability { state: usize, action: usize, value: f64 },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("policy assigns action {action} at state {state} but n_actions = {n_actions}")]
    InvalidPolicy {
        state: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("invalid target set: {0}")]
    InvalidTargets(String),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("policy never covers the remaining targets from state {state} (remaining mask {remaining:#b})")]
    InfiniteCoverTime { state: usize, remaining: u64 },
    #[error("no stationary policy induces an irreducible chain")]
    AssumptionViolated,
    #[error("{what} is {size}, above the cap of {cap}")]
    CapExceeded { what: &'static str, size: usize, cap: usize },
    #[error("value iteration did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("rollout did not cover the targets within {steps} steps")]
    StepCapExceeded { steps: u64 },
    #[error("empty part")]
    EmptyPart,
    #[error("cannot transfer out of a singleton part")]
    SingletonTransfer,
    #[error("{agents} agents for {targets} targets")]
    TooManyAgents { agents: usize, targets: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("instance construction failed: {0}")]
    ConstructionFailed(String),
    #[error("model is not a deterministic graph")]
    NotDeterministic,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
