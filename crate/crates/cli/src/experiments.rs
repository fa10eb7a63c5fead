//! One function per command. Each writes its CSV artifacts and returns a verdict
//! plus one summary line.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use conehj::cone::{ConePoint, Partition};
use conehj::conjugate_lab::{fm_verify, mono_conjugate_on, GridFunction};
use conehj::limit::{dyadic_chain, rate_study, seeded_test_points};
use conehj::nonlinearity::{MatrixFunction, Regularization};
use conehj::solvers::{hopf_lax, solve_surface, Method, SolverOptions};
use conehj::spin_glass::{bound_check, free_energy_at_times, CascadeSpec, SkInstance, SkOneSpin};
use conehj::viscosity::{comparison_check, fd_solve, ComparisonParams, FdGrid};
use serde_json::json;

use crate::acceptance::{self, Ctx};
use crate::config::{
    AcceptParams, CompareParams, ConvergeParams, Experiment, ExperimentConfig, FmParams, GridFormula, SolveParams,
    SpinglassParams,
};
use crate::output::{num, Artifacts};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides every seed in the config.
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out: PathBuf::from("out"), seed: None, tol_scale: 1.0 }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub pass: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn seed_of(cfg: &ExperimentConfig, opts: &RunOptions) -> u64 {
    let inner = match &cfg.experiment {
        Experiment::Spinglass(p) => p.seed,
        _ => None,
    };
    opts.seed.or(cfg.seed).or(inner).unwrap_or(DEFAULT_SEED)
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    if !(opts.tol_scale > 0.0) {
        bail!("--tol-scale must be positive");
    }
    let seed = seed_of(cfg, opts);
    let dir = cfg.out.clone().filter(|_| opts.out == RunOptions::default().out).unwrap_or_else(|| opts.out.clone());
    let mut art = Artifacts::new(&dir, cfg.command().as_str(), &cfg.hash, seed)?;
    let (pass, summary) = match &cfg.experiment {
        Experiment::Solve(p) => solve(p, seed, &mut art)?,
        Experiment::Converge(p) => converge(p, seed, &mut art)?,
        Experiment::FmVerify(p) => fm(p, opts.tol_scale, &mut art)?,
        Experiment::Compare(p) => compare(p, opts.tol_scale, &mut art)?,
        Experiment::Spinglass(p) => spinglass(p, seed, &mut art)?,
        Experiment::Accept(p) => accept(p, seed, opts.tol_scale, &mut art)?,
    };
    Ok(RunOutcome { pass, summary: format!("{}: {summary}", cfg.command().as_str()), files: art.files })
}

fn solver_opts(base: &SolverOptions, seed: u64) -> SolverOptions {
    SolverOptions { seed, ..base.clone() }
}

fn solve(p: &SolveParams, seed: u64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let psi = p.psi.build()?;
    let reg = Regularization::new(p.xi.clone())?;
    let samples = p
        .samples
        .iter()
        .map(|row| ConePoint::new(p.partition.clone(), row.clone()))
        .collect::<conehj::Result<Vec<_>>>()?;
    let s = solve_surface(psi.as_ref(), &reg, &p.times, &samples, p.method, &solver_opts(&p.solver, seed))?;
    art.csv("solve", |w| s.write_csv(w))?;
    let unconverged = s.stats.iter().flatten().filter(|e| !e.converged).count();
    Ok((
        true,
        format!(
            "{} values of {} by {:?}, {unconverged} hit the optimizer budget",
            s.values.len() * samples.len(),
            psi.name(),
            p.method
        ),
    ))
}

fn converge(p: &ConvergeParams, seed: u64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let psi = p.psi.build()?;
    let reg = Regularization::new(p.xi.clone())?;
    let chain = dyadic_chain::<f64>(p.first, p.last)?;
    let pts = seeded_test_points(p.points, p.radius, p.t_max, chain.last().expect("nonempty chain"), seed)?;
    let s = rate_study(psi.as_ref(), &reg, &chain, &pts, p.p, &solver_opts(&p.solver, seed))?;
    art.csv("converge", |w| s.write_csv(w))?;
    art.json(
        "converge_report",
        &json!({ "slope": s.slope, "theory": s.exponent, "constant": s.constant, "errors": s.errors,
                 "cauchy_decay": s.cauchy_decay, "pass": s.pass }),
    )?;
    let slope = s.slope.map_or("none (errors vanish)".to_string(), |v| format!("{v:.3}"));
    Ok((s.pass, format!("fitted slope {slope} (theory -{:.3}), pass {}", s.exponent, s.pass)))
}

fn grid_function(p: &FmParams) -> anyhow::Result<GridFunction<f64>> {
    let w = p.partition.widths();
    Ok(match &p.function {
        GridFormula::Values(v) => GridFunction::from_values(
            p.partition.clone(),
            p.x_max,
            p.steps,
            v.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect(),
        )?,
        GridFormula::Separable { h, a } => {
            GridFunction::tabulate(p.partition.clone(), p.x_max, p.steps, |x: &[f64]| {
                (0..x.len()).map(|k| w[k] * (h[k] * x[k] + a[k] * x[k] * x[k])).sum()
            })?
        }
        GridFormula::MaxAffine { pieces } => {
            GridFunction::tabulate(p.partition.clone(), p.x_max, p.steps, |x: &[f64]| {
                pieces
                    .iter()
                    .map(|(h, c)| (0..x.len()).map(|k| w[k] * h[k] * x[k]).sum::<f64>() + c)
                    .fold(f64::NEG_INFINITY, f64::max)
            })?
        }
    })
}

fn fm(p: &FmParams, tol_scale: f64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let g = grid_function(p)?;
    let base = fm_verify(&g, p.tol)?;
    let r = if tol_scale != 1.0 { fm_verify(&g, Some(base.tol * tol_scale))? } else { base };
    // the same dual lattice as fm_verify, tabulated for the CSV
    let dual = mono_conjugate_on(&g, (g.slope_bound() * 1.05).max(g.step()), g.steps())?;
    let bi = mono_conjugate_on(&dual, g.x_max(), g.steps())?;
    let n = g.partition().len();
    art.csv("fm_verify", |w| {
        let xs: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        writeln!(w, "node,{},g,biconjugate,gap", xs.join(","))?;
        for i in 0..g.len() {
            let c: Vec<String> = g.coords(i).iter().map(|&v| num(v)).collect();
            let (a, b) = (g.values()[i], bi.values()[i]);
            writeln!(w, "{i},{},{},{},{}", c.join(","), num(a), num(b), num(a - b))?;
        }
        Ok(())
    })?;
    art.json("fm_verify_report", &r)?;
    let witness = r.witness.flat().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        r.pass,
        format!(
            "pass {}, max gap {:.3e} (tol {:.3e}) at ({witness}){}",
            r.pass,
            r.max_gap,
            r.tol,
            r.diagnostic.as_ref().map_or(String::new(), |d| format!("; {d}"))
        ),
    ))
}

fn compare(p: &CompareParams, tol_scale: f64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let psi = p.psi.build()?;
    if psi.dim() != 1 {
        bail!("compare needs a scalar datum");
    }
    let reg = Regularization::new(p.xi.clone())?;
    if MatrixFunction::dim(&reg) != 1 {
        bail!("compare needs a scalar nonlinearity");
    }
    let cap = psi.lip_l1();
    let grid = FdGrid::for_horizon(&reg, cap, p.r, p.horizon, p.dx)?;
    let times: Vec<f64> = (0..=p.time_steps).map(|i| p.horizon * i as f64 / p.time_steps as f64).collect();
    let fd = fd_solve(psi.as_ref(), &reg, &grid, &times)?;
    let idx: Vec<usize> = (0..grid.nodes()).step_by(p.stride).take_while(|&i| grid.x(i) <= p.r + 0.5).collect();
    let fd_s = fd.surface.select(&idx);
    let hl = solve_surface(psi.as_ref(), &reg, &times, &fd_s.samples, Method::HopfLax, &SolverOptions::default())?;
    let gap =
        hl.values.iter().flatten().zip(fd_s.values.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let tol = p.tol.unwrap_or(10.0 * p.dx * (1.0 + p.horizon)) * tol_scale;
    let params = ComparisonParams { lip: cap, m: None, r: p.r, tol };
    let rep = comparison_check(&hl, &fd_s, &reg, &params)?;
    // the control runs on four short steps, so that the localization
    // M(|x| + V t - R)_+ vanishes near x = 0 at the first one
    let neg = match p.negative_control {
        Some(c) => {
            let dt = (p.r / (2.0 * rep.v)).min(p.horizon / 4.0);
            let fine: Vec<f64> = (0..=4).map(|i| i as f64 * dt).collect();
            let u =
                solve_surface(psi.as_ref(), &reg, &fine, &fd_s.samples, Method::HopfLax, &SolverOptions::default())?;
            let mut v = u.clone();
            for (row, &t) in v.values.iter_mut().zip(&v.times) {
                row.iter_mut().for_each(|x| *x -= c * t);
            }
            Some(comparison_check(&u, &v, &reg, &params)?)
        }
        None => None,
    };
    art.csv("compare_fd", |w| fd_s.write_csv(w))?;
    art.csv("compare_hopf_lax", |w| hl.write_csv(w))?;
    art.json(
        "compare_report",
        &json!({ "max_gap": gap, "tol": tol, "fd_steps": fd.steps, "monotone_violation": fd.monotone_violation,
                 "comparison": rep, "negative_control": neg }),
    )?;
    let neg_ok = neg.as_ref().map_or(true, |n| !n.pass);
    let pass = gap <= tol && rep.pass && neg_ok;
    Ok((
        pass,
        format!(
            "max |fd - hopf_lax| {gap:.3e} (tol {tol:.3e}), margin {:.3e} at t={}{}",
            rep.margin,
            rep.t_star,
            neg.map_or(String::new(), |n| format!(", negative control margin {:.3e} pass {}", n.margin, n.pass))
        ),
    ))
}

fn spinglass(p: &SpinglassParams, seed: u64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let levels = p.measure.levels();
    let implied = &levels[1..levels.len() - 1];
    let spec = match &p.cascade {
        Some(c) => {
            if c.zetas.len() != implied.len() || c.zetas.iter().zip(implied).any(|(a, b)| (a - b).abs() > 1e-12) {
                bail!("cascade ratios {:?} do not match the measure levels {:?}", c.zetas, implied);
            }
            CascadeSpec { zetas: c.zetas.clone(), m: c.m.unwrap_or(CascadeSpec::default_truncation(c.k)), seed }
        }
        None => CascadeSpec::for_measure(&p.measure, seed),
    };
    let mut rows = Vec::new();
    for &n in &p.n_list {
        let inst = SkInstance { n, beta: p.beta, t: 0.0, measure: p.measure.clone(), seed };
        rows.extend(free_energy_at_times(&inst, &p.t_list, &spec, p.replicas)?);
    }
    art.csv("spinglass", |w| {
        writeln!(w, "N,t,mean,se,replicas")?;
        for e in &rows {
            writeln!(w, "{},{},{},{},{}", e.n, num(e.t), num(e.mean), num(e.se), e.samples)?;
        }
        Ok(())
    })?;
    if !p.bound {
        return Ok((true, format!("{} estimates over N = {:?}, t = {:?}", rows.len(), p.n_list, p.t_list)));
    }
    let reg = Regularization::new(conehj::nonlinearity::CovarianceModel::quadratic(p.beta)?)?;
    let j = Partition::from_breaks(levels[1..].to_vec())?;
    let atoms: Vec<f64> = p.measure.atoms().iter().map(|a| a.get(0, 0)).collect();
    let mu = ConePoint::from_scalars(j, &atoms)?;
    let mut reports = Vec::new();
    for &t in &p.t_list {
        let f = hopf_lax(&SkOneSpin::default(), &reg, t, &mu).context("Hopf-Lax value of the one-spin datum")?.value;
        let at_t: Vec<_> = rows.iter().filter(|e| e.t == t).cloned().collect();
        reports.push(bound_check(&at_t, f)?);
    }
    art.csv("spinglass_bound", |w| {
        writeln!(w, "N,t,mean,se,f,gap,allowance,pass")?;
        for r in &reports {
            for row in &r.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    row.n,
                    num(r.t),
                    num(row.mean),
                    num(row.se),
                    num(r.f),
                    num(row.gap),
                    num(row.allowance),
                    row.pass
                )?;
            }
        }
        Ok(())
    })?;
    art.json("spinglass_bound_report", &reports)?;
    let pass = reports.iter().all(|r| r.pass && r.trend);
    let per_t: Vec<String> = reports.iter().map(|r| format!("t={}: bound {} trend {}", r.t, r.pass, r.trend)).collect();
    Ok((pass, per_t.join(", ")))
}

fn accept(p: &AcceptParams, seed: u64, tol_scale: f64, art: &mut Artifacts) -> anyhow::Result<(bool, String)> {
    let mut ctx = Ctx::new(seed);
    ctx.tol_scale = tol_scale;
    ctx.out = Some(art.dir.join("acceptance"));
    let reports = acceptance::run(&mut ctx, &p.only, |r| println!("{r}"));
    art.csv("acceptance", |w| {
        writeln!(w, "id,title,pass")?;
        for r in &reports {
            writeln!(w, "{},{},{}", r.id, r.title, r.pass)?;
        }
        Ok(())
    })?;
    art.json("acceptance_report", &reports)?;
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok((passed == reports.len(), format!("{passed}/{} criteria passed", reports.len())))
}
