use thiserror::Error;

/// Errors raised while building designs, evaluating variances or running studies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid treatment sequence: {0}")]
    InvalidSequence(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate mean response: mu*(1-mu) = {variance:e} at period {period}")]
    DegenerateMean { period: usize, variance: f64 },

    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),

    #[error("target contrast is not estimable ({context})")]
    NotEstimable { context: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(
        "optimizer budget of {iterations} iterations exhausted (relative KKT gap {kkt_gap:e})"
    )]
    BudgetExhausted {
        iterations: usize,
        kkt_gap: f64,
        best: Box<crate::optimize::OptimizationResult>,
    },

    #[error("grid lattice of {points} points exceeds the limit of {limit}")]
    ComplexityGuard { points: u128, limit: u128 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl DesignError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DesignError::DegenerateMean { .. }
                | DesignError::NotEstimable { .. }
                | DesignError::NumericalFailure(_)
                | DesignError::BudgetExhausted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, DesignError>;
