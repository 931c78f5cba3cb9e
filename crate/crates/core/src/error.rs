use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("unknown foot id {0}")]
    UnknownFoot(usize),
    #[error("task Jacobian is rank deficient (smallest singular value {sigma_min:e})")]
    SingularTask { sigma_min: f64 },
    #[error("contact Jacobian is rank deficient (smallest singular value {sigma_min:e})")]
    SingularContact { sigma_min: f64 },
    #[error("ill-posed decomposition: {0}")]
    IllPosedDecomposition(String),
    #[error("non-finite input to force channel {channel}")]
    NonFiniteInput { channel: usize },
    #[error("uncertainty bound at DC is {lbar0}, must be below 1")]
    TheoremHypothesis { lbar0: f64 },
    #[error("invalid uncertainty specification: {0}")]
    InvalidUncertainty(String),
    #[error("eta_f tuning infeasible: {0}")]
    InfeasibleTuning(String),
    #[error("force distribution requested with no active contacts")]
    NoContact,
    #[error("force distribution failed: {reason}")]
    InfeasibleDistribution { reason: String, last_iterate: Vec<f64> },
    #[error("QP solver did not converge within {iterations} iterations")]
    SolverFailure { iterations: usize },
    #[error("QP problem is infeasible")]
    InfeasibleQp,
    #[error("invalid QP problem: {0}")]
    InvalidQp(String),
    #[error("simulation diverged at t = {time} s")]
    SimulationDiverged { time: f64 },
    #[error("unknown gait '{0}'")]
    UnknownGait(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration error: {0}")]
    Config(String),
}
