use conehj::cone::{lift_lj, project_pj, ConePoint, Partition};
use conehj::nonlinearity::{h_eval, CovarianceModel, HMethod, Regularization, ScalarProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen, Ctx, Outcome};

pub fn regularization(ctx: &mut Ctx) -> Outcome {
    let reg = Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x3e);
    let closed = |a: f64| if a <= 2.0 { (a * a).max(8.0 * (a - 1.0)) } else { 8.0 * (a - 1.0) };
    let mut form = 0.0f64;
    let mut inner = 0.0f64;
    for i in 0..1000 {
        let a = if i % 2 == 0 { i as f64 * 0.005 } else { rng.gen_range(0.0..20.0) };
        form = form.max((reg.at(a) - closed(a)).abs());
        let b = rng.gen_range(0.0..=1.0);
        inner = inner.max((reg.at(b) - b * b).abs());
    }
    let lip = reg.lipschitz_bound();
    let (mut lip_bad, mut cvx_bad) = (0usize, 0usize);
    for _ in 0..10_000 {
        let (a, b) = (rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
        let (fa, fb) = (reg.at(a), reg.at(b));
        if (fa - fb).abs() > lip * (a - b).abs() + 1e-12 * (1.0 + fa.abs().max(fb.abs())) {
            lip_bad += 1;
        }
        let l: f64 = rng.gen_range(0.0..=1.0);
        let mid = reg.at(l * a + (1.0 - l) * b);
        if mid > l * fa + (1.0 - l) * fb + 1e-12 * (1.0 + fa.abs().max(fb.abs())) {
            cvx_bad += 1;
        }
    }
    let pass = form == 0.0 && inner == 0.0 && lip_bad == 0 && cvx_bad == 0;
    Outcome::new(
        pass,
        format!(
            "closed form err {form:.1e}, ξ̄ = ξ on [0,1] err {inner:.1e}, Lipschitz (L = {lip}) violations {lip_bad}, convexity violations {cvx_bad}"
        ),
    )
}

fn coarser(rng: &mut ChaCha8Rng, j: &Partition<f64>) -> Partition<f64> {
    let inner = &j.breaks()[..j.len() - 1];
    let mut keep: Vec<f64> = inner.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    keep.push(1.0);
    Partition::from_breaks(keep).unwrap()
}

pub fn hamiltonian(ctx: &mut Ctx) -> Outcome {
    let models = [CovarianceModel::quadratic(1.0).unwrap(), CovarianceModel::poly(&[(2, 0.5), (4, 0.25)]).unwrap()];
    let regs: Vec<Regularization<f64>> = models.into_iter().map(|m| Regularization::new(m).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x4f);
    let h = |k: &ConePoint<f64>, r: &Regularization<f64>, m: HMethod| h_eval(k, r, m).unwrap().value;
    let tol = |v: f64| 1e-9 * (1.0 + v.abs());
    let (mut mono, mut lower, mut cvx, mut coarse) = (0usize, 0usize, 0usize, 0usize);
    let (mut brute_n, mut brute_err) = (0usize, 0.0f64);
    for case in 0..1000 {
        let reg = &regs[case % 2];
        let n = rng.gen_range(1..=4);
        let j = gen::partition(&mut rng, n);
        let k =
            ConePoint::from_scalars(j.clone(), &(0..n).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<_>>()).unwrap();
        let k2 =
            ConePoint::from_scalars(j.clone(), &(0..n).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<_>>()).unwrap();
        let hk = h(&k, reg, HMethod::Auto);
        let up = k.add(&gen::dual_point(&mut rng, &j, 1)).unwrap();
        if h(&up, reg, HMethod::Auto) < hk - tol(hk) {
            mono += 1;
        }
        if hk < reg.at(0.0) - tol(hk) {
            lower += 1;
        }
        let hk2 = h(&k2, reg, HMethod::Auto);
        let mid = k.add(&k2).unwrap().scale(0.5);
        if h(&mid, reg, HMethod::Auto) > 0.5 * (hk + hk2) + tol(hk.max(hk2)) {
            cvx += 1;
        }
        let c = project_pj(&lift_lj(&k), &coarser(&mut rng, &j));
        if h(&c, reg, HMethod::Auto) > hk + tol(hk) {
            coarse += 1;
        }
        if n <= 2 {
            brute_n += 1;
            brute_err = brute_err.max((h(&k, reg, HMethod::BruteForce) - hk).abs());
        }
    }
    let pass = mono + lower + cvx + coarse == 0 && brute_err <= 1e-4;
    Outcome::new(
        pass,
        format!(
            "1000 cases: violations monotone {mono}, lower bound {lower}, convexity {cvx}, coarsening {coarse}; brute force max diff {brute_err:.1e} over {brute_n} cases"
        ),
    )
}
