//! Hopf-Lax and Hopf representations of `f_j`, the one-dimensional reduction
//! and tabulated solution surfaces.

mod hopf;
mod hopf_lax;
pub mod initial;
mod search;
mod surface;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub use hopf::{hopf, hopf_with};
pub use hopf_lax::{hopf_lax, hopf_lax_1d, hopf_lax_1d_with, hopf_lax_with};
pub use initial::{
    sampled_dual_increasing_scan, ComposedConcave, InitialCondition, LevelFunction, Linear, MaxAffine,
    PiecewiseLinearMean, SeparableConvex, SlopeProfile, Table,
};
pub use surface::{solve_surface, Method, SolutionSurface};

/// Which representation produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    HopfLax,
    Hopf,
    HopfLax1d,
    FdOracle,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::HopfLax => "hopf_lax",
            Provenance::Hopf => "hopf",
            Provenance::HopfLax1d => "hopf_lax_1d",
            Provenance::FdOracle => "fd_oracle",
        }
    }
}

/// How the supremum was located.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    TimeZero,
    ClosedForm,
    /// Accelerated projected ascent (concave objective).
    Ascent,
    /// Dense scan plus golden section (`|j| = 1`).
    Scan,
    /// Lattice, zoom and pattern search (`|j| <= 4`).
    Lattice,
    Multistart,
    /// `D > 1`, ascent around an inner ascent.
    Nested,
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct Estimate<T> {
    pub value: T,
    pub route: Route,
    pub iterations: usize,
    /// Optimizer certificate: gradient-mapping norm, final pattern step or
    /// multistart spread depending on the route.
    pub residual: T,
    /// False when the optimizer stopped on its budget; `value` is then a lower bound.
    pub converged: bool,
    /// Maximizing `y`, `ν` or `z` when a search ran.
    #[serde(skip)]
    pub argmax: Option<Vec<T>>,
}

impl<T: Real> Estimate<T> {
    pub(crate) fn exact(value: T, route: Route) -> Self {
        Estimate { value, route, iterations: 0, residual: T::zero(), converged: true, argmax: None }
    }

    pub(crate) fn from_found(f: search::Found<T>, floor: T) -> Self {
        Estimate {
            value: f.value.max(floor),
            route: f.route,
            iterations: f.evals,
            residual: f.residual,
            converged: f.converged,
            argmax: Some(f.y),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub multistart: usize,
    pub seed: u64,
    /// Skip closed forms (used to cross-check the numeric routes).
    pub force_numeric: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { multistart: 16, seed: 0x5eed_c0de, force_numeric: false }
    }
}
