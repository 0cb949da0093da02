use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The log link requires a strictly negative linear predictor.
    #[error("linear predictor {value} is outside the domain of the {link} link")]
    Domain { link: &'static str, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("prior predictions do not align with the person-period table: {0}")]
    Alignment(String),

    #[error("prior covariates not present in the local schema: {}", .0.join(", "))]
    UnknownCovariate(Vec<String>),

    #[error("prior covers {prior_tau} periods but the data needs {data_tau}")]
    TauMismatch { prior_tau: usize, data_tau: usize },

    #[error("dataset contains no events")]
    NoEvents,

    #[error("information matrix is singular in parameter {index} ({name})")]
    SingularHessian { index: usize, name: String },

    #[error("training portion of fold {0} contains no events")]
    DegenerateFold(usize),

    #[error("period {0} has no subjects at risk; its baseline is not estimable")]
    UnestimablePeriod(usize),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
