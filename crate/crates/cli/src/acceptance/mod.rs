//! The thirteen acceptance criteria, each a self-contained experiment with a
//! pass/fail verdict and a wall-clock budget.

mod cone;
mod determinism;
mod fm;
pub(crate) mod gen;
mod nonlinearity;
mod pde;
mod rates;
mod solvers;
mod spin;

use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use conehj::limit::{lipschitz_audit, LipschitzBounds};
use conehj::solvers::SolutionSurface;
use serde::Serialize;

/// Shared state between criteria.
pub struct Ctx {
    pub seed: u64,
    /// Multiplies the tolerances that the suite is allowed to scale (FM gap,
    /// PDE gap, comparison margin); 1 reproduces the stated criteria.
    pub tol_scale: f64,
    /// Where CSV artifacts go, if anywhere.
    pub out: Option<PathBuf>,
    /// Surfaces solved by earlier criteria, audited by criterion 11.
    pub surfaces: Vec<(String, SolutionSurface<f64>, LipschitzBounds<f64>)>,
}

impl Ctx {
    pub fn new(seed: u64) -> Self {
        Ctx { seed, tol_scale: 1.0, out: None, surfaces: Vec::new() }
    }

    pub(crate) fn keep(&mut self, name: impl Into<String>, s: SolutionSurface<f64>, b: LipschitzBounds<f64>) {
        self.surfaces.push((name.into(), s, b));
    }

    pub(crate) fn artifact(&self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) {
        let Some(dir) = &self.out else { return };
        let mut buf = Vec::new();
        let res = write(&mut buf).and_then(|_| {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), &buf)
        });
        if let Err(e) = res {
            log::warn!("could not write {name}: {e}");
        }
    }
}

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    /// Verdict of the checks alone.
    pub checks_pass: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.1} s of {:.0} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds,
            self.budget_seconds
        )
    }
}

type Check = fn(&mut Ctx) -> Outcome;

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub budget: Duration,
    check: Check,
}

const fn c(id: u8, title: &'static str, secs: u64, check: Check) -> Criterion {
    Criterion { id, title, budget: Duration::from_secs(secs), check }
}

/// All criteria in order. Criterion 11 audits what 5 to 9 solved, so running it
/// alone audits nothing.
pub const CRITERIA: [Criterion; 13] = [
    c(1, "cone algebra", 10, cone::cone_algebra),
    c(2, "rearrangement", 5, cone::rearrangement),
    c(3, "regularization", 5, nonlinearity::regularization),
    c(4, "H properties", 120, nonlinearity::hamiltonian),
    c(5, "variational agreement", 300, solvers::variational_agreement),
    c(6, "1D reduction", 180, solvers::one_dimensional_reduction),
    c(7, "PDE oracle", 120, pde::oracle_cross_check),
    c(8, "quantified comparison", 60, pde::quantified_comparison),
    c(9, "convergence rate", 600, rates::convergence_rate),
    c(10, "Fenchel-Moreau", 300, fm::fenchel_moreau),
    c(11, "Lipschitz audits", 60, lipschitz_audits),
    c(12, "spin glass", 1800, spin::spin_glass),
    c(13, "determinism", 600, determinism::determinism),
];

pub fn run_one(ctx: &mut Ctx, cr: &Criterion) -> CriterionReport {
    log::info!("criterion {} ({}) started", cr.id, cr.title);
    let start = Instant::now();
    let out = (cr.check)(ctx);
    let seconds = start.elapsed().as_secs_f64();
    let budget_seconds = cr.budget.as_secs_f64();
    CriterionReport {
        id: cr.id,
        title: cr.title,
        checks_pass: out.pass,
        seconds,
        budget_seconds,
        pass: out.pass && seconds <= budget_seconds,
        detail: out.detail,
    }
}

/// Runs the selected criteria (all when `only` is empty) in order.
pub fn run(ctx: &mut Ctx, only: &[u8], mut each: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .map(|c| {
            let r = run_one(ctx, c);
            each(&r);
            r
        })
        .collect()
}

fn lipschitz_audits(ctx: &mut Ctx) -> Outcome {
    if ctx.surfaces.is_empty() {
        return Outcome::new(false, "no solved surfaces to audit".into());
    }
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut failed = Vec::new();
    for (name, s, b) in &ctx.surfaces {
        let a = lipschitz_audit(&[s], b, 0.01);
        let ratio = |v: f64, bound: f64| {
            if bound > 0.0 {
                v / bound
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        };
        worst.0 = worst.0.max(ratio(a.spatial, b.spatial));
        worst.1 = worst.1.max(ratio(a.l1, b.l1));
        worst.2 = worst.2.max(ratio(a.time, b.time));
        if !a.pass {
            failed.push(name.clone());
        }
    }
    Outcome::new(
        failed.is_empty(),
        format!(
            "{} surfaces, worst ratio to bound: spatial {:.3}, L1 {:.3}, time {:.3}{}",
            ctx.surfaces.len(),
            worst.0,
            worst.1,
            worst.2,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}
