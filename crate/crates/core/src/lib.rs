//! Numerical laboratory for Cauchy–Fantappiè and Kerzman–Stein constructions
//! on model strongly pseudoconvex domains.
//!
//! Everything is generic over the real scalar ([`scalar::Real`]); the aliases
//! at the crate root fix `f64`, which is what the experiments use.

pub mod error;
pub mod fit;
pub mod geometry;
pub mod kerzman_stein;
pub mod linalg;
pub mod metric;
pub mod operators;
pub mod quadrature;
pub mod report;
pub mod experiments;
pub mod validate;
pub mod scalar;
pub mod weights;

pub use error::{Error, Result};
pub use geometry::{ChiMode, DomainKind};

pub type Domain = geometry::DomainModel<f64>;
pub type Frame = geometry::SpecialFrame<f64>;
pub type Point = scalar::Pt<f64>;
pub type C64 = num_complex::Complex<f64>;
pub type Matrix = linalg::CMatrix<f64>;
