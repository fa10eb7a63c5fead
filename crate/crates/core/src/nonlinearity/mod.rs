//! Covariance models `ξ`, the regularization `ξ̄`, monotone conjugates and the
//! Hamiltonian `H`.

mod conjugate;
mod hamiltonian;
mod model;
mod regularize;

pub use conjugate::{ConjugateModel, ConjugatePoint};
pub use hamiltonian::{h_eval, HMethod, HValue};
pub use model::{bold_xi, CovarianceModel, Form, MatrixFunction, ModelSpec, ScalarProfile};
pub use regularize::Regularization;
