use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FppError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unverifiable-local-behavior: {0}")]
    UnverifiableLocalBehavior(String),
    #[error("outside-validity-interval: x = {x} exceeds eps0 = {eps0}")]
    OutsideValidityInterval { x: f64, eps0: f64 },
    #[error("log-singularity: |log x| = 0 at x = 1")]
    LogSingularity,
    #[error("unsupported-regime: {0}")]
    UnsupportedRegime(String),
    #[error("degenerate-caps: {0}")]
    DegenerateCaps(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration-too-large: estimated {estimated:.3e} exceeds budget {budget:.3e}")]
    EnumerationTooLarge { estimated: f64, budget: f64 },
    #[error("precondition-f-denominator: |log x| = {abs_log_x} <= C = {c}")]
    FDenominator { abs_log_x: f64, c: f64 },
    #[error("p = {0} < 2")]
    SmallP(i64),
    #[error("series-divergence: l*n^2/p = {0} >= 1")]
    SeriesDivergence(f64),
    #[error("y-out-of-range: y = {y} exceeds {limit}")]
    YOutOfRange { y: f64, limit: f64 },
    #[error("no-valid-certificate-at-d: {0}")]
    NoValidCertificate(u64),
    #[error("threshold not found up to d = {0}")]
    ThresholdNotFound(u64),
}

pub type Result<T> = std::result::Result<T, FppError>;
