use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid model: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// `1 + (k_a/D) G(h, sigma) <= 0`: the mesh is so far below the critical
    /// size that no local rate correction exists.
    #[error("non-positive rate denominator {denominator:.6e} at h = {h:.6e} (h* = {h_star:.6e})")]
    NonPositiveDenominator { denominator: f64, h: f64, h_star: f64 },

    #[error(
        "reaction {reaction} is under-resolved (W = {w:.4e}) but its reactants have no correlated dissociation source"
    )]
    UnresolvableReaction { reaction: String, w: f64 },

    #[error("radial solver failed resolution check: max |S(n) - S(2n)| = {deviation:.3e} > {tolerance:.1e}")]
    GridResolution { deviation: f64, tolerance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnresolvableReaction { .. } => 2,
            Error::NonPositiveDenominator { .. } | Error::GridResolution { .. } => 3,
            _ => 1,
        }
    }
}
