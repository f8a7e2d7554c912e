use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Discretization or run parameters are inconsistent (CFL, grids, levels).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The explicit sweep produced a non-finite value.
    #[error("numeric failure at step {step} (t = {t}): {detail}")]
    NumericFailure { step: usize, t: f64, detail: String },

    /// A generator returned a non-finite value.
    #[error("generator `{id}` failed at t = {t}, x = {x:?}, y = {y}, z = {z}")]
    Generator { id: String, t: f64, x: Vec<f64>, y: f64, z: f64 },

    /// A lookup left the tabulated region.
    #[error("range error: {0}")]
    Range(String),

    /// Series lengths do not match.
    #[error("shape error: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// Expression source could not be parsed.
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Error raised inside a cascade interval, tagged with its index.
    #[error("interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    /// A functional or construction failed on one simulated path.
    #[error("scenario `{control}`, path {path}: {detail}")]
    Scenario { control: String, path: u64, detail: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub(crate) fn in_interval(self, interval: usize) -> Self {
        Error::Interval { interval, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
