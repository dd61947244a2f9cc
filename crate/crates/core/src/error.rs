use thiserror::Error;

/// Errors raised by the linear algebra and scalar optimization primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("empty gain list")]
    EmptyGains,
    #[error("gain {index} is {value}, gains must be positive and finite")]
    BadGain { index: usize, value: f64 },
    #[error("budget must be finite and nonnegative, got {0}")]
    BadBudget(f64),
    #[error("interval [{lo}, {hi}] is invalid")]
    BadInterval { lo: f64, hi: f64 },
    #[error("objective is not finite at x = {x}")]
    NonFiniteObjective { x: f64 },
}

/// Channel instance validation failures. `field` names the offending input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{field} has zero norm")]
    Degenerate { field: String },
    #[error("unknown channel tag `{0}` (expected ortho, mid or parallel)")]
    UnknownTag(String),
}

impl ChannelError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        ChannelError::Invalid { field: field.to_string(), message: message.into() }
    }
}

/// Top-level error for rate computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid parameter {name}: {message}")]
    Parameter { name: String, message: String },
    #[error("relay {relay} gain {gain} exceeds its peak {peak}")]
    PeakViolation { relay: usize, gain: f64, peak: f64 },
    #[error("relay powers must be positive: {0}")]
    ZeroRelayPower(String),
    #[error("no feasible operating point found: {0}")]
    Infeasible(String),
    #[error("linear program failed: {0}")]
    Lp(String),
}

impl RelayError {
    pub(crate) fn parameter(name: &str, message: impl Into<String>) -> Self {
        RelayError::Parameter { name: name.to_string(), message: message.into() }
    }

    /// True when the failure comes from bad input rather than a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        match self {
            RelayError::Channel(_) | RelayError::Parameter { .. } | RelayError::PeakViolation { .. } => true,
            RelayError::Numerics(e) => matches!(
                e,
                NumericsError::NotHermitian { .. }
                    | NumericsError::NotSquare { .. }
                    | NumericsError::EmptyGains
                    | NumericsError::BadGain { .. }
                    | NumericsError::BadBudget(_)
                    | NumericsError::BadInterval { .. }
            ),
            _ => false,
        }
    }
}

pub type Result<T, E = RelayError> = std::result::Result<T, E>;
