use thiserror::Error;

/// Errors raised by model construction, operator evaluation and the solvers.
#[derive(Debug, Error)]
pub enum AdpError {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("policy is infeasible at state {state}: action {action} is not in the feasible set")]
    InfeasiblePolicy { state: usize, action: usize },

    #[error("non-finite value {value} at state {state}{}", action.map(|a| format!(", action {a}")).unwrap_or_default())]
    NumericalDomain {
        state: usize,
        action: Option<usize>,
        value: f64,
    },

    #[error("value {value} at index {index} lies outside the value space [{lower}, {upper}]")]
    OutsideValueSpace {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("iteration diverged after {iterations} iterations{}", policy.as_ref().map(|p| format!(" (policy {p:?})")).unwrap_or_default())]
    Divergence {
        iterations: usize,
        policy: Option<Vec<usize>>,
    },

    #[error("stability assumption failed: {0}")]
    Stability(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("unexpected policy structure: {0}")]
    Structure(String),

    #[error("policy enumeration would produce {count} policies, above the limit of {limit}")]
    TooManyPolicies { count: u128, limit: u128 },

    #[error("linear system is singular")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AdpError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        AdpError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = AdpError> = std::result::Result<T, E>;
