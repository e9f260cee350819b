use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("quadrature did not converge on [{lower}, {upper}] (estimate {estimate}, error {error_estimate}, {} partial sums)", partial_sums.len())]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error_estimate: f64,
        partial_sums: Vec<f64>,
    },

    #[error("transport problem has {atoms} atoms, solver cap is {cap}")]
    SizeCap { atoms: usize, cap: usize },

    #[error("brute-force oracle: {0}")]
    Oracle(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("simulation diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("missing data: {0}")]
    Missing(String),

    #[error(
        "Picard iteration is not contracting: ratio >= 1 for {consecutive} consecutive iterates \
         (last {last_ratio:.4}); increase lambda above {lambda}"
    )]
    NonContraction {
        consecutive: usize,
        last_ratio: f64,
        lambda: f64,
    },

    #[error("invalid function value: {0}")]
    InvalidFunction(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
