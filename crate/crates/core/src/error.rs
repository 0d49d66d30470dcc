use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("component mismatch: expected {expected}, found {found}")]
    Components { expected: usize, found: usize },

    #[error("field is not divergence-free (defect {defect:.3e})")]
    NotDivergenceFree { defect: f64 },

    #[error("mollifier under-resolved: eps = {eps} is below {min_spacings} grid spacings ({min_eps})")]
    MollifierUnderResolved { eps: f64, min_spacings: f64, min_eps: f64 },

    #[error("unresolved scale: eps = {eps} is below one grid spacing ({spacing})")]
    UnresolvedScale { eps: f64, spacing: f64 },

    #[error("CETI decomposition mismatch: relative difference {rel:.3e}")]
    CetiMismatch { rel: f64 },

    #[error("unachievable planted sequence at j = {j}: {reason}")]
    Unachievable { j: i32, reason: String },

    #[error("CFL violation at step {step}: dt = {dt} exceeds bound {bound}; suggested dt = {suggested}")]
    Cfl { step: usize, dt: f64, bound: f64, suggested: f64 },

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("too few scales: {0}")]
    TooFewScales(String),

    #[error("exponent {name} = {value} is outside [1, inf]")]
    Exponent { name: &'static str, value: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
