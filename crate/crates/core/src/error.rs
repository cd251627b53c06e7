use thiserror::Error;

/// Errors raised across the simulator and analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("empty simulation: n_pulses must be at least 1")]
    EmptySimulation,

    #[error("input streams must be sorted by time (`{0}` is not)")]
    Unsorted(&'static str),

    #[error("no HE11 root found for diameter {diameter_nm} nm at {wavelength_nm} nm")]
    NoModeRoot { diameter_nm: f64, wavelength_nm: f64 },

    #[error("relative emission rate {value} is not positive at {wavelength_nm} nm")]
    NonPositiveRate { value: f64, wavelength_nm: f64 },

    #[error("side-peak window at {center_ps} ps is empty")]
    EmptySideWindow { center_ps: f64 },

    #[error("histogram does not cover {needed} side peaks per side (has {available})")]
    InsufficientSidePeaks { needed: usize, available: usize },

    #[error("observed peak spacing {observed_ps:.1} ps differs from repetition period {expected_ps:.1} ps by more than 5%")]
    PeriodMismatch { observed_ps: f64, expected_ps: f64 },

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("fit did not converge after {iterations} iterations (last parameters {last:?})")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(key: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(key: &str, value: f64) -> Result<()> {
    ensure_finite(key, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("must be > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(key: &str, value: f64) -> Result<()> {
    ensure_finite(key, value)?;
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("must be >= 0, got {value}")))
    }
}

pub(crate) fn ensure_fraction(key: &str, value: f64) -> Result<()> {
    ensure_finite(key, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("must lie in [0, 1], got {value}")))
    }
}
