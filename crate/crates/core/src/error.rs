use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series truncation could not reach the requested accuracy.
    #[error("accuracy error: requested {requested:e}, achieved bound {achieved:e}")]
    Accuracy { requested: f64, achieved: f64 },

    /// A discretisation is too coarse (or ill-conditioned) for the solver.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A precondition of the operation is violated.
    #[error("precondition error: {0}")]
    Precondition(String),

    /// The rate-fit window does not contain usable data.
    #[error("window error: {0}")]
    Window(String),

    /// A simulated path produced a non-finite value.
    #[error("blow-up at t = {time}")]
    BlowUp { time: f64 },

    /// A moment solution left the floating-point range; `partial` holds the
    /// trajectory computed up to that point.
    #[error("overflow at t = {time}")]
    Overflow {
        time: f64,
        partial: Box<crate::moment::VolterraSolution>,
    },

    /// No sign change of the Lyapunov rate could be found.
    #[error("no threshold: {0}")]
    NoThreshold(String),

    /// Input data (accumulators, trajectories) is missing or empty.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration.
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
