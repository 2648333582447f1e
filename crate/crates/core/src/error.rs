use thiserror::Error;

/// Errors raised by the device models, fitters and file parsers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("josephson inductance diverges at flux {flux} (critical current fully suppressed)")]
    Divergence { flux: f64 },
    #[error("no resonance found between {f_lo} Hz and {f_hi} Hz")]
    NoResonance { f_lo: f64, f_hi: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unphysical environment: Re[Y_env] = {re_y} S at {freq} Hz")]
    UnphysicalEnvironment { freq: f64, re_y: f64 },
    #[error("pump strength {strength} rad/s at or above the oscillation threshold {threshold} rad/s")]
    OscillationThreshold { strength: f64, threshold: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("no decay in data: {0}")]
    NoDecay(String),
    #[error("coefficient of variation undefined: mean {mean} is indistinguishable from zero (std {std})")]
    UndefinedCv { mean: f64, std: f64 },
    #[error("config line {line}: `{key}`: {msg}")]
    Config { key: String, line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: frequency {freq} Hz does not increase")]
    Order { line: usize, freq: f64 },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// I/O failures map to a different CLI exit status than validation failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
