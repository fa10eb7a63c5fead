use conehj::conjugate_lab::{fm_verify, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen, Ctx, Outcome};

fn steps(n: usize) -> usize {
    match n {
        1 => 40,
        2 => 16,
        _ => 10,
    }
}

/// `max(⟨h, x⟩ + Σ w a x², ⟨h', x⟩ + c)` with `h, h', a` nonnegative nondecreasing.
fn convex_monotone(rng: &mut ChaCha8Rng) -> GridFunction<f64> {
    let n = rng.gen_range(1..=3);
    let j = gen::partition(rng, n);
    let w = j.widths();
    let (h, h2, a) = (gen::sorted(rng, n, 0.0, 1.0), gen::sorted(rng, n, 0.0, 1.5), gen::sorted(rng, n, 0.0, 0.5));
    let c = rng.gen_range(-0.5..0.5);
    GridFunction::tabulate(j, 2.0, steps(n), move |x: &[f64]| {
        let q: f64 = (0..x.len()).map(|k| w[k] * (h[k] * x[k] + a[k] * x[k] * x[k])).sum();
        let l: f64 = (0..x.len()).map(|k| w[k] * h2[k] * x[k]).sum::<f64>() + c;
        q.max(l)
    })
    .unwrap()
}

/// Convex but decreasing along a dual direction: the last slope is negative.
fn non_monotone(rng: &mut ChaCha8Rng) -> GridFunction<f64> {
    let n = rng.gen_range(1..=3);
    let j = gen::partition(rng, n);
    let w = j.widths();
    let mut h = gen::sorted(rng, n, 0.0, 1.0);
    h[n - 1] = -rng.gen_range(0.3..1.0);
    let a = rng.gen_range(0.0..0.2);
    GridFunction::tabulate(j, 2.0, steps(n), move |x: &[f64]| {
        (0..x.len()).map(|k| w[k] * (h[k] * x[k] + a * x[k] * x[k])).sum()
    })
    .unwrap()
}

pub fn fenchel_moreau(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0xf3);
    let tol_scale = ctx.tol_scale;
    let mut good = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..20 {
        let g = convex_monotone(&mut rng);
        let r = fm_verify(&g, None).unwrap();
        let r = if tol_scale != 1.0 { fm_verify(&g, Some(r.tol * tol_scale)).unwrap() } else { r };
        worst_ratio = worst_ratio.max(r.max_gap / r.tol);
        good += r.pass as usize;
    }
    let mut caught = 0;
    let mut witnesses = Vec::new();
    for _ in 0..10 {
        let g = non_monotone(&mut rng);
        let r = fm_verify(&g, None).unwrap();
        if let (false, Some((a, b))) = (r.pass, &r.dual_increasing.counterexample) {
            caught += 1;
            if witnesses.len() < 2 {
                witnesses.push(format!("{:?} vs {:?}", a.flat(), b.flat()));
            }
        }
    }
    Outcome::new(
        good == 20 && caught == 10,
        format!(
            "convex monotone passed {good}/20 (max gap/tol {worst_ratio:.2}); non-monotone failed with witness {caught}/10, e.g. {}",
            witnesses.first().map_or("-", String::as_str)
        ),
    )
}
