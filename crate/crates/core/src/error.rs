use thiserror::Error;

/// Errors raised by the toolkit. Every message names the violated precondition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precision error: digit index {index} exceeds the precision cap {cap} for beta = {beta}")]
    Precision { index: usize, cap: usize, beta: f64 },

    #[error("invalid approximant order N = {n}: {reason}")]
    InvalidApproximant { n: usize, reason: String },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("budget exceeded: {what} needs {predicted} items but the budget is {budget} (Renyi upper bound {renyi_bound:.3e})")]
    BudgetExceeded {
        what: String,
        predicted: f64,
        budget: f64,
        renyi_bound: f64,
    },

    #[error("word {0} is not admissible")]
    Inadmissible(String),

    #[error("length mismatch: interval length {actual} is not beta^-{order} = {expected}")]
    LengthMismatch {
        actual: f64,
        expected: f64,
        order: usize,
    },

    #[error("no full cylinder found: {0}")]
    NoFullCylinder(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("root not bracketed: {0}")]
    NonBracketing(String),

    #[error("normalization failure: {0}")]
    Normalization(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, Error::Hypothesis(_))
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
