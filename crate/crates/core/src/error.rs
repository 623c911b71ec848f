use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("SINGULAR: {0}")]
    Singular(String),
    #[error("point is not on the boundary (|rho| = {0:e})")]
    OffBoundary(f64),
    #[error("point is not inside the domain (rho = {0:e})")]
    OutsideDomain(f64),
    #[error("kernel pole: source and target coincide")]
    Pole,
    #[error("FAILED-COERCIVITY: inf ratio {kappa:e} at w = {w}, z = {z}")]
    FailedCoercivity { kappa: f64, w: String, z: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("carrier mismatch: {0}")]
    CarrierMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
