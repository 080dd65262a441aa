use thiserror::Error;

#[derive(Debug, Error)]
pub enum SteError {
    #[error("invalid band {lo}-{hi} Hz for sampling rate {fs} Hz")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },

    #[error("filter design failed: {0}")]
    DesignFailure(String),

    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("significance test failed: {failed} of {total} resample refits failed")]
    TestFailure { failed: usize, total: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<SteError>,
    },
}

impl SteError {
    pub fn at_stage(self, stage: &'static str) -> SteError {
        SteError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SteError>;
