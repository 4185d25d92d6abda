use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure category, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("NON_FINITE: {0}")]
    NonFinite(String),
    #[error("NO_PRINCIPAL_LOG: matrix has eigenvalue {0} on the closed negative real axis")]
    NoPrincipalLog(f64),
    #[error("NOT_STATIONARY: spectral radius {0} >= 1")]
    NotStationary(f64),
    #[error("EMPTY_SCHEDULE: {0}")]
    EmptySchedule(String),
    #[error("NEGATIVE_RATE: identity-link Poisson rate {rate} <= 0 at ping {ping} of channel {channel}")]
    NegativeRate { rate: f64, ping: usize, channel: usize },
    #[error("SCHEDULE_MODE_MISMATCH: {0}")]
    ScheduleModeMismatch(String),
    #[error("CALIBRATION_FAILED: {0}")]
    CalibrationFailed(String),
    #[error("SINGULAR_INNOVATION: innovation covariance condition number {cond:e} at ping {ping}")]
    SingularInnovation { ping: usize, cond: f64 },
    #[error("DEGENERATE_WEIGHTS: all particle weights vanished at ping {0}")]
    DegenerateWeights(usize),
    #[error("PARTICLES_TOO_FEW: {0} particles requested, at least 100 required")]
    ParticlesTooFew(usize),
    #[error("NO_FREE_PARAMS: parameter map leaves nothing to estimate")]
    NoFreeParams,
    #[error("NONFINITE_LIKELIHOOD: {0}")]
    NonfiniteLikelihood(String),
    #[error("LIKELIHOOD_MODE_MISMATCH: {0}")]
    LikelihoodModeMismatch(String),
    #[error("NON_GAUSSIAN_CHANNEL: channel {0} is not Gaussian; use the particle filter")]
    NonGaussianChannel(usize),
    #[error("INVALID_MODEL: {0}")]
    InvalidModel(String),
    #[error("INVALID_INPUT: {0}")]
    InvalidInput(String),
    #[error("PARSE_ERROR at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("NON_MONOTONE_TIME: participant {participant} at line {line}")]
    NonMonotoneTime { participant: String, line: usize },
    #[error("NA_IN_U: NA found in input column at line {0}")]
    NaInU(usize),
    #[error("MISSING_WAKE_TIMES: {0}")]
    MissingWakeTimes(String),
    #[error("UNKNOWN_FIGURE: {0}")]
    UnknownFigure(String),
    #[error("IO_ERROR: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "NON_FINITE",
            Error::NoPrincipalLog(_) => "NO_PRINCIPAL_LOG",
            Error::NotStationary(_) => "NOT_STATIONARY",
            Error::EmptySchedule(_) => "EMPTY_SCHEDULE",
            Error::NegativeRate { .. } => "NEGATIVE_RATE",
            Error::ScheduleModeMismatch(_) => "SCHEDULE_MODE_MISMATCH",
            Error::CalibrationFailed(_) => "CALIBRATION_FAILED",
            Error::SingularInnovation { .. } => "SINGULAR_INNOVATION",
            Error::DegenerateWeights(_) => "DEGENERATE_WEIGHTS",
            Error::ParticlesTooFew(_) => "PARTICLES_TOO_FEW",
            Error::NoFreeParams => "NO_FREE_PARAMS",
            Error::NonfiniteLikelihood(_) => "NONFINITE_LIKELIHOOD",
            Error::LikelihoodModeMismatch(_) => "LIKELIHOOD_MODE_MISMATCH",
            Error::NonGaussianChannel(_) => "NON_GAUSSIAN_CHANNEL",
            Error::InvalidModel(_) => "INVALID_MODEL",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::NonMonotoneTime { .. } => "NON_MONOTONE_TIME",
            Error::NaInU(_) => "NA_IN_U",
            Error::MissingWakeTimes(_) => "MISSING_WAKE_TIMES",
            Error::UnknownFigure(_) => "UNKNOWN_FIGURE",
            Error::Io(_) => "IO_ERROR",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_)
            | Error::NoPrincipalLog(_)
            | Error::NotStationary(_)
            | Error::NegativeRate { .. }
            | Error::CalibrationFailed(_)
            | Error::SingularInnovation { .. }
            | Error::DegenerateWeights(_)
            | Error::NonfiniteLikelihood(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
