use thiserror::Error;

use crate::model::Diagnostic;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model document could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid model: {}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),

    /// A simulated step left the positive orthant of the constraint lattice.
    #[error("constraint variable left Z_+ at event {event}: S = {state:?}")]
    StatePositivity { event: u64, state: Vec<i64> },

    #[error("fertility matrix is not subcritical (spectral radius {0})")]
    NotSubcritical(f64),

    #[error("inter-arrival inversion did not converge (a={a}, b={b}, beta={beta}, e={e})")]
    NonConvergence { a: f64, b: f64, beta: f64, e: f64 },

    #[error("constraint index {index} out of range for q = {q}")]
    InvalidIndex { index: usize, q: usize },

    #[error("time {t} outside the simulated range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("event log has no state snapshots")]
    SnapshotsDisabled,

    #[error("event log is empty")]
    EmptyLog,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}
