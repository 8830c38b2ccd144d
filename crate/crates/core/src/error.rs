use thiserror::Error;

/// Errors raised anywhere in the twin, the data pipeline or the controller.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An integration step drove the state somewhere unphysical.
    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("invalid power grid: {0}")]
    InvalidGrid(String),

    #[error("camera rate {fps} Hz exceeds the simulation rate {max_fps} Hz")]
    Oversampling { fps: f64, max_fps: f64 },

    #[error("trajectory does not align with schedule: {0}")]
    Misalignment(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("ensemble member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("setup failed: {0}")]
    Setup(String),

    #[error("at t = {time_s} s: {source}")]
    AtTime {
        time_s: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("schedule {schedule}, segment {segment}: {source}")]
    Segment {
        schedule: usize,
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by reading or decoding files rather than by
    /// invalid values.
    pub fn is_io_or_parse(&self) -> bool {
        match self {
            Error::Io(_) | Error::Parse(_) => true,
            Error::Member { source, .. }
            | Error::AtTime { source, .. }
            | Error::Segment { source, .. } => source.is_io_or_parse(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, err: impl FnOnce() -> Error) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(err())
    }
}
