use conehj::cone::Partition;
use conehj::limit::{dyadic_chain, rate_study, seeded_test_points, LipschitzBounds};
use conehj::nonlinearity::{CovarianceModel, Regularization};
use conehj::solvers::initial::cone_step_path;
use conehj::solvers::{solve_surface, ComposedConcave, Method, SlopeProfile, SolverOptions};

use super::{Ctx, Outcome};

pub fn convergence_rate(ctx: &mut Ctx) -> Outcome {
    let reg = Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap();
    let opts = SolverOptions::default();

    // log(1 + ∫ s μ(s) ds) does not factor through any finite partition
    let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
    let chain = dyadic_chain(4, 64).unwrap();
    let pts = seeded_test_points(32, 4.0, 1.0, chain.last().unwrap(), ctx.seed ^ 0x99).unwrap();
    let s = rate_study(&psi, &reg, &chain, &pts, 1.0, &opts).unwrap();
    ctx.artifact("c09_rate.csv", |w| s.write_csv(w));
    let slope_ok = s.slope.is_some_and(|v| v <= -0.4);

    // a step profile on four cells: f_j is exact from |j| = 4 on
    let coarse = Partition::uniform(4).unwrap();
    let step =
        ComposedConcave::new(SlopeProfile::Step(cone_step_path(coarse, &[0.1, 0.4, 0.6, 1.0]).unwrap())).unwrap();
    let pts_f = seeded_test_points(8, 4.0, 1.0, chain.last().unwrap(), ctx.seed ^ 0x9a).unwrap();
    let f = rate_study(&step, &reg, &chain, &pts_f, 1.0, &opts).unwrap();
    let exact = f.errors.iter().all(|&e| e < 1e-12);

    // one surface per datum for the Lipschitz audit
    let j = &chain[1];
    let samples: Vec<_> = pts.iter().take(12).map(|p| conehj::cone::project_pj(&p.mu, j)).collect();
    for (name, p) in [("c9 composed", &psi), ("c9 step", &step)] {
        let surf = solve_surface(p, &reg, &[0.0, 0.5, 1.0], &samples, Method::HopfLax, &opts).unwrap();
        ctx.keep(name, surf, LipschitzBounds::for_problem(p, &reg));
    }

    let fmt_e = |e: &[f64]| e.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" ");
    Outcome::new(
        slope_ok && exact,
        format!(
            "slope {} over |j| = 4..64 (errors {}); factoring datum errors {}",
            s.slope.map_or("none".into(), |v| format!("{v:.3}")),
            fmt_e(&s.errors),
            fmt_e(&f.errors)
        ),
    )
}
