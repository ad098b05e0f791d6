use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("only {days} complete days after alignment (need at least {required})")]
    EmptyPanel { days: usize, required: usize },
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("period {period} out of range (panel has {periods} periods per day)")]
    PeriodOutOfRange { period: usize, periods: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("step {step} MW leaves only {bins} bins across the support (need 3)")]
    StepTooCoarse { step: f64, bins: usize },
    #[error("step mismatch: {left} MW vs {right} MW")]
    StepMismatch { left: f64, right: f64 },
    #[error("resource `{0}` has zero benefit per MWh")]
    ZeroBenefit(String),
    #[error("area sweep is empty")]
    EmptySweep,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
