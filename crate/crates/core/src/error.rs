use thiserror::Error;

/// Crate-wide error type. Every variant carries the offending key, node or time.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("degenerate state: {what} = {value:e} at node {node}")]
    DegenerateState {
        what: &'static str,
        node: usize,
        value: f64,
    },
    #[error("gajewski regularization delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("kernel width {width} is not below the period 2*pi")]
    WidthTooLarge { width: f64 },
    #[error("invalid mollifier: {0}")]
    InvalidMollifier(String),
    #[error("mode cutoff K = {k} needs at least {needed} points per axis, grid has {have}")]
    CutoffTooLarge { k: usize, needed: usize, have: usize },
    #[error("step size underflow at t = {t}: dt = {dt:e}")]
    StepsizeUnderflow { t: f64, dt: f64 },
    #[error("mass matrix lost positive definiteness at t = {t}")]
    FactorizationFailure { t: f64 },
    #[error("blow-up detected at t = {t}: max |f| = {max_abs:e}")]
    BlowupDetected { t: f64, max_abs: f64 },
    #[error("fixed-point iteration failed to contract after {passes} passes (last ratio {ratio})")]
    NoContraction { passes: usize, ratio: f64 },
    #[error("trajectories are not comparable: {0}")]
    MismatchedTrajectories(String),
    #[error("source trajectory has {got} samples, the run needs {expected}")]
    TrajectoryLengthMismatch { expected: usize, got: usize },
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },
    #[error("postcondition violated: {0}")]
    Postcondition(String),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepsizeUnderflow { .. }
                | Error::FactorizationFailure { .. }
                | Error::BlowupDetected { .. }
                | Error::NoContraction { .. }
        )
    }
}
