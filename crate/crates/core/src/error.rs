use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("division hazard at index {index}: |denominator| = {magnitude:e}")]
    DivisionHazard { index: i64, magnitude: f64 },
    #[error("invalid support: c1 = {c1} must be below c2 = {c2}")]
    InvalidSupport { c1: f64, c2: f64 },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("config: {0}")]
    Config(String),
    #[error("mask inadmissible: mu = {mu:e} is not above the floor {floor:e}")]
    MaskInadmissible { mu: f64, floor: f64 },
    #[error("ill-conditioned W: sigma_min = {sigma_min:e}")]
    IllConditioned { sigma_min: f64 },
    #[error("normalization bug: calibration residual {residual:e} (scale {scale:e}, expected {expected:e})")]
    Normalization {
        residual: f64,
        scale: f64,
        expected: f64,
    },
    #[error("empty selection window above/below index {from}")]
    EmptyWindow { from: i64 },
    #[error("undefined argument on edge ({0}, {1})")]
    UndefinedArgument(i64, i64),
    #[error("undefined alignment: reference is identically zero")]
    ZeroReference,
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
