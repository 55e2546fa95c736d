use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported network: {0}")]
    UnsupportedNetwork(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("no steady state: {0}")]
    NoSteadyState(String),

    #[error("unphysical state: D_b = {d_param} is below 1")]
    UnphysicalState { d_param: f64 },

    #[error("unphysical evolution at t = {time}: {reason}")]
    UnphysicalEvolution { time: f64, reason: String },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(&'static str),

    #[error("singular point: {0}")]
    SingularPoint(String),

    #[error("Fock cutoff did not converge: change {change:e} at cutoff {cutoff} (max {max_cutoff})")]
    CutoffNotConverged {
        cutoff: usize,
        max_cutoff: usize,
        change: f64,
    },
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn ensure_nonnegative(name: &str, value: f64) -> Result<()> {
    ensure_finite(name, value)?;
    if value < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{name} must be nonnegative, got {value}"
        )));
    }
    Ok(())
}
