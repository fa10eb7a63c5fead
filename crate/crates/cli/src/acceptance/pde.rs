use conehj::cone::{ConePoint, Partition};
use conehj::limit::LipschitzBounds;
use conehj::nonlinearity::{CovarianceModel, Regularization};
use conehj::solvers::{
    hopf_lax, solve_surface, ComposedConcave, InitialCondition, Method, PiecewiseLinearMean, SlopeProfile,
    SolutionSurface, SolverOptions,
};
use conehj::viscosity::{comparison_check, fd_solve, ComparisonParams, FdGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen, Ctx, Outcome};

const DX: f64 = 1.0 / 400.0;
const HORIZON: f64 = 1.0;
const R: f64 = 2.0;
const TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn scheme_tol(dx: f64) -> f64 {
    10.0 * dx * (1.0 + HORIZON)
}

struct Pair {
    psi: PiecewiseLinearMean<f64>,
    reg: Regularization<f64>,
    hl: SolutionSurface<f64>,
    fd: SolutionSurface<f64>,
}

/// Random nondecreasing piecewise-linear `φ` with slopes in `[0, 1]`, solved both
/// ways on every eighth node of `[0, R + 1/2]`.
fn pair(rng: &mut ChaCha8Rng) -> Pair {
    let reg = Regularization::new(CovarianceModel::quadratic(rng.gen_range(0.5..1.5)).unwrap()).unwrap();
    let m = rng.gen_range(1..=3);
    let breaks = gen::sorted(rng, m, 0.1, 2.0);
    let slopes: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let psi = PiecewiseLinearMean::new(rng.gen_range(-0.5..0.5), breaks, slopes).unwrap();
    let grid = FdGrid::for_horizon(&reg, 1.0, R, HORIZON, DX).unwrap();
    let fd = fd_solve(&psi, &reg, &grid, &TIMES).unwrap();
    let idx: Vec<usize> = (0..grid.nodes()).step_by(8).take_while(|&i| grid.x(i) <= R + 0.5).collect();
    let fd = fd.surface.select(&idx);
    let hl = solve_surface(&psi, &reg, &TIMES, &fd.samples, Method::HopfLax, &SolverOptions::default()).unwrap();
    Pair { psi, reg, hl, fd }
}

fn max_gap(a: &SolutionSurface<f64>, b: &SolutionSurface<f64>) -> f64 {
    a.values.iter().flatten().zip(b.values.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Sup-norm gap at `t = 1` on `[0, 1]` for a smooth concave datum.
fn smooth_gap(reg: &Regularization<f64>, dx: f64) -> f64 {
    let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
    let g = FdGrid::for_horizon(reg, 1.0, 1.0, HORIZON, dx).unwrap();
    let s = fd_solve(&psi, reg, &g, &[HORIZON]).unwrap();
    let j = Partition::uniform(1).unwrap();
    (0..g.nodes())
        .take_while(|&i| g.x(i) <= 1.0)
        .map(|i| {
            let x = ConePoint::from_scalars(j.clone(), &[g.x(i)]).unwrap();
            (s.surface.values[0][i] - hopf_lax(&psi, reg, HORIZON, &x).unwrap().value).abs()
        })
        .fold(0.0, f64::max)
}

pub fn oracle_cross_check(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x77);
    let tol = scheme_tol(DX) * ctx.tol_scale;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let p = pair(&mut rng);
        worst = worst.max(max_gap(&p.hl, &p.fd));
        if i < 3 {
            ctx.artifact(&format!("c07_fd_{i}.csv"), |w| p.fd.write_csv(w));
            ctx.artifact(&format!("c07_hopf_lax_{i}.csv"), |w| p.hl.write_csv(w));
        }
        let b = LipschitzBounds::for_problem(&p.psi, &p.reg);
        ctx.keep(format!("c7 hopf_lax #{i}"), p.hl, b.clone());
        ctx.keep(format!("c7 fd #{i}"), p.fd, b);
    }
    let reg = Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap();
    let (coarse, fine) = (smooth_gap(&reg, 2.0 * DX), smooth_gap(&reg, DX));
    let ratio = coarse / fine;
    Outcome::new(
        worst <= tol && (1.5..=3.0).contains(&ratio),
        format!("10 piecewise-linear ψ: max |fd - hopf_lax| {worst:.2e} (tol {tol:.2e}); Richardson ratio {ratio:.2} ({coarse:.2e} / {fine:.2e})"),
    )
}

pub fn quantified_comparison(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x88);
    let tol = scheme_tol(DX) * ctx.tol_scale;
    let (mut ok, mut worst_margin) = (0, 0.0f64);
    let (mut caught, mut weakest) = (0, f64::INFINITY);
    let c = 1.0;
    for _ in 0..5 {
        let p = pair(&mut rng);
        let params = ComparisonParams { lip: p.psi.lip_l1(), m: None, r: R, tol };
        let rep = comparison_check(&p.hl, &p.fd, &p.reg, &params).unwrap();
        worst_margin = worst_margin.max(rep.margin);
        ok += (rep.pass && rep.t_star == 0.0) as usize;
        // negative control v = u - c t, on four time steps short enough that the
        // localization M(|x| + V t - R)_+ vanishes near x = 0 at the first one
        let dt = (R / (2.0 * rep.v)).min(HORIZON / 4.0);
        let times: Vec<f64> = (0..=4).map(|i| i as f64 * dt).collect();
        let u =
            solve_surface(&p.psi, &p.reg, &times, &p.hl.samples, Method::HopfLax, &SolverOptions::default()).unwrap();
        let mut v = u.clone();
        for (row, &t) in v.values.iter_mut().zip(&v.times) {
            row.iter_mut().for_each(|x| *x -= c * t);
        }
        let neg = comparison_check(&u, &v, &p.reg, &params).unwrap();
        weakest = weakest.min(neg.margin / tol);
        caught += (!neg.pass && neg.margin > tol && neg.t_star > 0.0) as usize;
    }
    Outcome::new(
        ok == 5 && caught == 5,
        format!(
            "(hopf_lax, fd) pairs passing with argmax at t=0: {ok}/5, max margin {worst_margin:.2e} (tol {tol:.2e}); \
             negative control u - {c}t failed {caught}/5 (smallest margin/tol {weakest:.2})"
        ),
    )
}
