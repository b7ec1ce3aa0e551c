use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A physical parameter violates its domain.
    #[error("{field} {constraint}")]
    InvalidParameter {
        field: &'static str,
        constraint: String,
    },

    #[error("n_trials must be at least 2 for a standard error (got {0})")]
    TooFewTrials(u64),

    /// Background subtraction was handed runs that were not taken under the
    /// same conditions.
    #[error("background runs are not comparable: {0}")]
    MismatchedRuns(String),

    #[error("visibility undefined: max + min = 0")]
    ZeroVisibilityDenominator,

    #[error("visibility requires max >= min >= 0 and max > 0 (got max={max}, min={min})")]
    InvalidExtrema { max: f64, min: f64 },

    #[error(
        "CHSH correlation {index} at (theta_a={theta_a}, theta_b={theta_b}) has a zero denominator"
    )]
    ZeroChshDenominator {
        index: usize,
        theta_a: f64,
        theta_b: f64,
    },

    #[error("regime assumption violated: {0}")]
    RegimeViolation(String),

    #[error(transparent)]
    Fit(#[from] crate::fit::FitError),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            constraint: constraint.into(),
        }
    }
}
