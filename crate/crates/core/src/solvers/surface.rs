use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::initial::InitialCondition;
use super::{hopf_lax_1d_with, hopf_lax_with, hopf_with, Estimate, Provenance, SolverOptions};
use crate::cone::{ConePoint, Partition};
use crate::error::{Error, Result};
use crate::nonlinearity::{ConjugateModel, Regularization};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HopfLax,
    Hopf,
    HopfLax1d,
}

/// Values `f_j(t, x)` on a time grid times a sample set.
#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct SolutionSurface<T> {
    pub partition: Partition<T>,
    pub times: Vec<T>,
    pub samples: Vec<ConePoint<T>>,
    /// `values[i][s]` at `times[i]` and `samples[s]`.
    pub values: Vec<Vec<T>>,
    pub provenance: Provenance,
    /// Per-value optimizer statistics, same layout as `values` (empty for the FD oracle).
    #[serde(skip)]
    pub stats: Vec<Vec<Estimate<T>>>,
}

impl<T: Real> SolutionSurface<T> {
    pub fn value(&self, ti: usize, s: usize) -> T {
        self.values[ti][s]
    }

    /// The surface restricted to the samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |row: &Vec<T>| idx.iter().map(|&s| row[s]).collect();
        let stats = self
            .stats
            .iter()
            .map(|r| if r.is_empty() { Vec::new() } else { idx.iter().map(|&s| r[s].clone()).collect() })
            .collect();
        SolutionSurface {
            partition: self.partition.clone(),
            times: self.times.clone(),
            samples: idx.iter().map(|&s| self.samples[s].clone()).collect(),
            values: self.values.iter().map(pick).collect(),
            provenance: self.provenance,
            stats,
        }
    }

    /// CSV with columns `t,sample_id,value,method,iterations,residual`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,sample_id,value,method,iterations,residual")?;
        for (i, &t) in self.times.iter().enumerate() {
            for s in 0..self.samples.len() {
                let (it, res) = self
                    .stats
                    .get(i)
                    .and_then(|r| r.get(s))
                    .map_or((0, 0.0), |e| (e.iterations, e.residual.to_f64_lossy()));
                writeln!(
                    out,
                    "{:.16e},{},{:.16e},{},{},{:.16e}",
                    t.to_f64_lossy(),
                    s,
                    self.values[i][s].to_f64_lossy(),
                    self.provenance.as_str(),
                    it,
                    res
                )?;
            }
        }
        Ok(())
    }
}

/// Tabulates `f_j` by the chosen representation. Each `(t, x)` is independent;
/// results are collected by index so the output does not depend on scheduling.
pub fn solve_surface<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    times: &[T],
    samples: &[ConePoint<T>],
    method: Method,
    opts: &SolverOptions,
) -> Result<SolutionSurface<T>> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("no samples".into()));
    };
    let j = first.partition().clone();
    if samples.iter().any(|x| x.partition() != &j) {
        return Err(Error::InvalidInput("samples must share one partition".into()));
    }
    let conj = (method == Method::HopfLax1d).then(|| ConjugateModel::of_regularization(reg.clone()));
    let jobs: Vec<(usize, usize)> = (0..times.len()).flat_map(|i| (0..samples.len()).map(move |s| (i, s))).collect();
    let results: Vec<Result<Estimate<T>>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let (t, x) = (times[i], &samples[s]);
            match method {
                Method::HopfLax => hopf_lax_with(psi, reg, t, x, opts),
                Method::Hopf => hopf_with(psi, reg.model(), t, x, opts),
                Method::HopfLax1d => hopf_lax_1d_with(psi, conj.as_ref().expect("built above"), t, x, opts),
            }
        })
        .collect();
    let mut stats: Vec<Vec<Estimate<T>>> = vec![Vec::with_capacity(samples.len()); times.len()];
    for ((i, _), r) in jobs.iter().zip(results) {
        stats[*i].push(r?);
    }
    let values: Vec<Vec<T>> = stats.iter().map(|row| row.iter().map(|e| e.value).collect()).collect();
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence("non-finite value in surface".into()));
    }
    let provenance = match method {
        Method::HopfLax => Provenance::HopfLax,
        Method::Hopf => Provenance::Hopf,
        Method::HopfLax1d => Provenance::HopfLax1d,
    };
    Ok(SolutionSurface { partition: j, times: times.to_vec(), samples: samples.to_vec(), values, provenance, stats })
}
