use conehj::cone::{ConePoint, Partition};
use conehj::limit::LipschitzBounds;
use conehj::nonlinearity::{bold_xi, ConjugateModel, CovarianceModel, Regularization};
use conehj::solvers::initial::cone_step_path;
use conehj::solvers::{
    hopf_lax_1d_with, hopf_lax_with, hopf_with, solve_surface, ComposedConcave, InitialCondition, Linear, MaxAffine,
    Method, PiecewiseLinearMean, SeparableConvex, SlopeProfile, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen, Ctx, Outcome};

const TIMES: [f64; 3] = [0.1, 0.5, 1.0];

fn numeric() -> SolverOptions {
    SolverOptions { force_numeric: true, ..SolverOptions::default() }
}

fn model(rng: &mut ChaCha8Rng) -> Regularization<f64> {
    let m = if rng.gen_bool(0.5) {
        CovarianceModel::quadratic(rng.gen_range(0.5..2.0))
    } else {
        CovarianceModel::poly(&[(2, rng.gen_range(0.3..1.0)), (3, rng.gen_range(0.0..0.5))])
    };
    Regularization::new(m.unwrap()).unwrap()
}

fn profile(rng: &mut ChaCha8Rng, top: f64) -> SlopeProfile<f64> {
    let n = rng.gen_range(1..=3);
    SlopeProfile::Step(cone_step_path(gen::partition(rng, n), &gen::sorted(rng, n, 0.0, top)).unwrap())
}

fn convex_psi(rng: &mut ChaCha8Rng) -> Box<dyn InitialCondition<f64>> {
    if rng.gen_bool(0.5) {
        // lip_l1 = sup h + sup a stays at most 1, where ξ̄ = ξ on the reachable slopes
        let a = SlopeProfile::Affine { a: rng.gen_range(0.0..0.2), b: rng.gen_range(0.0..0.2) };
        Box::new(SeparableConvex::new(profile(rng, 0.6), a).unwrap())
    } else {
        let pieces = (0..rng.gen_range(2..=3))
            .map(|_| {
                let SlopeProfile::Step(h) = profile(rng, 1.0) else { unreachable!() };
                (h, rng.gen_range(-0.3..0.3))
            })
            .collect();
        Box::new(MaxAffine::new(pieces).unwrap())
    }
}

fn any_psi(rng: &mut ChaCha8Rng) -> Box<dyn InitialCondition<f64>> {
    match rng.gen_range(0..4) {
        0 | 1 => convex_psi(rng),
        2 => Box::new(ComposedConcave::new(profile(rng, 1.0)).unwrap()),
        _ => {
            let breaks = gen::sorted(rng, 2, 0.1, 1.5);
            let slopes = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            Box::new(PiecewiseLinearMean::new(rng.gen_range(-0.5..0.5), breaks, slopes).unwrap())
        }
    }
}

fn point(rng: &mut ChaCha8Rng, j: &Partition<f64>) -> ConePoint<f64> {
    ConePoint::from_scalars(j.clone(), &gen::sorted(rng, j.len(), 0.0, 1.5)).unwrap()
}

pub fn variational_agreement(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x55);
    let opts = numeric();
    let (mut worst, mut unconverged) = (0.0f64, 0usize);
    for i in 0..100 {
        let reg = model(&mut rng);
        let psi = convex_psi(&mut rng);
        let j = {
            let n = rng.gen_range(1..=3);
            gen::partition(&mut rng, n)
        };
        let x = point(&mut rng, &j);
        for t in TIMES {
            let a = hopf_lax_with(psi.as_ref(), &reg, t, &x, &opts).unwrap();
            let b = hopf_with(psi.as_ref(), reg.model(), t, &x, &opts).unwrap();
            worst = worst.max((a.value - b.value).abs());
            unconverged += (!a.converged || !b.converged) as usize;
        }
        if i < 4 {
            let samples: Vec<_> = (0..6).map(|_| point(&mut rng, &j)).collect();
            let s = solve_surface(
                psi.as_ref(),
                &reg,
                &[0.0, 0.1, 0.5, 1.0],
                &samples,
                Method::HopfLax,
                &SolverOptions::default(),
            )
            .unwrap();
            let b = LipschitzBounds::for_problem(psi.as_ref(), &reg);
            ctx.artifact(&format!("c05_surface_{i}.csv"), |w| s.write_csv(w));
            ctx.keep(format!("c5 {} #{i}", psi.name()), s, b);
        }
    }
    // linear data against the closed form <h, x> + t bold ξ̄(h)
    let mut linear = 0.0f64;
    for _ in 0..20 {
        let reg = model(&mut rng);
        let j = {
            let n = rng.gen_range(1..=3);
            gen::partition(&mut rng, n)
        };
        let SlopeProfile::Step(h) = profile(&mut rng, 1.0) else { unreachable!() };
        let psi = Linear::new(h).unwrap();
        let x = point(&mut rng, &j);
        let hj = conehj::cone::project_pj(&psi.h, &j);
        for t in TIMES {
            let exact = hj.inner(&x).unwrap() + t * bold_xi(&hj, &reg).unwrap();
            for v in [
                hopf_lax_with(&psi, &reg, t, &x, &opts).unwrap().value,
                hopf_with(&psi, reg.model(), t, &x, &opts).unwrap().value,
            ] {
                linear = linear.max((v - exact).abs());
            }
        }
    }
    Outcome::new(
        worst <= 1e-4 && linear <= 1e-6,
        format!("hopf vs hopf_lax max diff {worst:.1e} over 300 solves ({unconverged} budget stops); linear closed form err {linear:.1e}"),
    )
}

pub fn one_dimensional_reduction(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x66);
    let opts = numeric();
    let mut worst = 0.0f64;
    let mut names = std::collections::BTreeMap::new();
    for _ in 0..100 {
        let reg = model(&mut rng);
        let conj = ConjugateModel::of_regularization(reg.clone());
        let psi = any_psi(&mut rng);
        let j = {
            let n = rng.gen_range(1..=3);
            gen::partition(&mut rng, n)
        };
        let x = point(&mut rng, &j);
        let t = TIMES[rng.gen_range(0..3)];
        let a = hopf_lax_1d_with(psi.as_ref(), &conj, t, &x, &opts).unwrap();
        let b = hopf_lax_with(psi.as_ref(), &reg, t, &x, &opts).unwrap();
        worst = worst.max((a.value - b.value).abs());
        *names.entry(psi.name()).or_insert(0) += 1;
    }
    Outcome::new(worst <= 1e-4, format!("100 instances {names:?}, max diff {worst:.1e}"))
}
