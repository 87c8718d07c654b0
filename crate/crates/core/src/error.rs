use thiserror::Error;

/// Why a value-function solve was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveFailure {
    #[error("linear system (I - M) z = b is singular")]
    Singular,
    #[error("non-positive or non-finite value z({state}) = {value}")]
    InvalidValue { state: usize, value: f64 },
    #[error("value iteration diverged after {iterations} iterations (max component {max:e})")]
    Diverged { iterations: usize, max: f64 },
    #[error("value iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("network contains a cycle; {0} is undefined")]
    Cyclic(&'static str),
    #[error("({from}, {to}) is not an edge of the network")]
    NotAnEdge { from: usize, to: usize },
    #[error("observation does not end at the destination {destination}")]
    NotTerminated { destination: usize },
    #[error("path enumeration exceeded the limit of {limit} paths")]
    PathOverflow { limit: usize },
    #[error("restrict_total requires nonnegative costs; use restrict_stepwise")]
    NegativeCost,
    #[error("choice set is empty: no feasible route")]
    EmptyChoiceSet,
    #[error("extended state space exceeds {cap} states ({detail})")]
    StateCap { cap: usize, detail: String },
    #[error("value function solve failed: {0}")]
    Solve(#[from] SolveFailure),
    #[error("observations infeasible under the constraint: {indices:?}")]
    InfeasibleObservations { indices: Vec<usize> },
    #[error("rejection sampling acceptance rate {rate:e} is below 1e-4; constraint too tight for RL generation")]
    RejectionRate { rate: f64 },
    #[error("walk exceeded {max_hops} hops without reaching the destination")]
    HopCap { max_hops: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
