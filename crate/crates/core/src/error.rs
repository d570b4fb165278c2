use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: follow-up time must be strictly positive and finite")]
    NonPositiveTime { line: u64 },
    #[error("line {line}: arm must be 0 or 1")]
    InvalidArm { line: u64 },
    #[error("line {line}: event indicator must be 0 or 1")]
    InvalidEvent { line: u64 },
    #[error("arm {arm} has {count} subjects; at least 2 are required")]
    ArmMissing { arm: u8, count: usize },
    #[error("cannot fit a survival curve to an empty arm")]
    EmptyArm,
    #[error("time {t} is beyond the maximum follow-up {max_follow_up}")]
    BeyondFollowUp { t: f64, max_follow_up: f64 },
    #[error("restriction time {l} exceeds the largest estimable time {max_estimable}")]
    NotEstimable { l: f64, max_estimable: f64 },
    #[error("risk set exhausted at t={t} with a nonzero variance contribution")]
    DegenerateRiskSet { t: f64 },
    #[error("criterion is not estimable anywhere on the search range")]
    NoEstimablePoint,
    #[error("at least 16 subjects are needed for a grid-size suggestion, got {n}")]
    TooFewSubjects { n: usize },
    #[error("fold {fold} has {count} subjects in arm {arm}; at least 2 are required")]
    FoldTooSmall { fold: usize, arm: u8, count: usize },
    #[error("{dropped} of {total} bootstrap resamples were not estimable (limit 5%)")]
    TooManyDegenerateResamples { dropped: usize, total: usize },
    #[error("dataset contains no events")]
    NoEvents,
    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },
    #[error("criterion maximizer is not unique (plateau of height {value})")]
    NonUniqueMaximizer { value: f64 },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("no records to summarize")]
    EmptyInput,
    #[error("{failed} of {total} replicates failed for {scenario}/n={n}/{method} (limit 2%); first: {first}")]
    TooManyFailures {
        scenario: String,
        n: usize,
        method: String,
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the input data or the user's flags, as opposed
    /// to numerical failures during estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::NonPositiveTime { .. }
                | Error::InvalidArm { .. }
                | Error::InvalidEvent { .. }
                | Error::ArmMissing { .. }
                | Error::EmptyArm
                | Error::UnknownScenario(_)
                | Error::InvalidConfig(_)
                | Error::Io(_)
                | Error::EmptyInput
                | Error::TooFewSubjects { .. }
                | Error::FoldTooSmall { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
