use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {what} = {value} ({reason})")]
    Domain {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("argument {x} outside supported range |x| <= {limit}")]
    Range { x: f64, limit: f64 },

    #[error("time step {dt} ns exceeds the stability limit {max} ns")]
    StepTooLarge { dt: f64, max: f64 },

    #[error("non-finite state at t = {t} ns (step {step}): {detail}")]
    NonFinite { t: f64, step: usize, detail: String },

    #[error("Fock truncation violated: n_max = {n_max}, {detail}")]
    Truncation { n_max: usize, detail: String },

    #[error("rest time too short: excited population {residual:.3e} away from the CW level at the next pulse")]
    RestTooShort { residual: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub(crate) fn require(cond: bool, what: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value, reason })
    }
}
