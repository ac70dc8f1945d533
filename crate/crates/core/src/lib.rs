pub(crate) mod binio;
pub mod cap;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hrtf;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod scalar;
pub mod sh;
pub mod sphere;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision geometry and signal types.
pub type Mat = linalg::Matrix<f64>;
pub type ShBasisF64 = sh::ShBasis<f64>;
pub type ShCoeffs = sh::ShCoefficients<f64>;
pub type CapBasisF64 = cap::CapBasis<f64>;
pub type SchCoeffs = cap::SchCoefficients<f64>;

/// Single-precision network parameters, as trained and stored.
pub type ModelParams = neural::tensor::Params<f32>;
