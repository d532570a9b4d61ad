use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlimError {
    #[error("invalid spline specification: {0}")]
    InvalidSpline(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all index weights are zero; at least one modifier must stay included")]
    AllWeightsZero,

    /// The coefficient precision matrix could not be factorized.
    #[error("posterior precision is not positive definite (condition number estimate {condition:.3e})")]
    SingularPrecision { condition: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<DlimError>,
    },

    #[error("chain {chain}: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<DlimError>,
    },

    #[error("no posterior draws available")]
    EmptyDraws,

    #[error("{0}")]
    Simulation(String),
}

impl DlimError {
    pub fn mismatch(context: &'static str, expected: usize, found: usize) -> Self {
        DlimError::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// True when the error stems from linear algebra or other numerical failure
    /// rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            DlimError::SingularPrecision { .. } | DlimError::AllWeightsZero => true,
            DlimError::AtIteration { source, .. } | DlimError::Chain { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DlimError>;
