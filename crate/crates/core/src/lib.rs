//! Hamilton-Jacobi equations on the cone of monotone `S^D_+`-valued paths.
//!
//! The core types are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix `f64`.

pub mod cone;
pub mod conjugate_lab;
pub mod error;
pub mod limit;
pub mod linalg;
pub mod nonlinearity;
pub mod optim;
pub mod scalar;
pub mod solvers;
pub mod spin_glass;
pub mod viscosity;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use scalar::Real;

pub type SymMatrix = linalg::SymMatrix<f64>;
pub type Partition = cone::Partition<f64>;
pub type ConePoint = cone::ConePoint<f64>;
pub type StepPath = cone::StepPath<f64>;
pub type DiscreteMeasure = cone::DiscreteMeasure<f64>;
pub type CovarianceModel = nonlinearity::CovarianceModel<f64>;
pub type Regularization = nonlinearity::Regularization<f64>;
pub type ConjugateModel = nonlinearity::ConjugateModel<f64>;
