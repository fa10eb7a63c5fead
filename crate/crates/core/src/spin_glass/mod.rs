//! Enriched SK free energy by exact spin enumeration with Poisson-Dirichlet
//! cascade fields, the one-spin initial condition and the finite-`N` bound check.

mod bound;
mod cascade;
mod one_spin;
mod quadrature;
mod sk;

pub use bound::{bound_check, BoundReport, BoundRow};
pub use cascade::{pd_second_moment, sample_cascade, CascadeSpec};
pub use one_spin::{one_spin_value, SkOneSpin};
pub use quadrature::{gauss_hermite, log_cosh, log_sum_exp};
pub use sk::{free_energy, free_energy_at_times, moment_check, FreeEnergyEstimate, SkInstance, MAX_SPINS};

/// Sample mean and standard error of the mean.
pub(crate) fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
