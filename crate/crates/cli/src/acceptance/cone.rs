use conehj::cone::{coarsen, lift_lj, project_pj, ConePoint, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen, Ctx, Outcome};

const CASES: usize = 10_000;

/// Largest relative error per property over one dimension.
#[derive(Default)]
struct Worst {
    adjoint: f64,
    isometry: f64,
    contraction: f64,
    projective: f64,
    left_inverse: f64,
    cone: f64,
    dual: f64,
}

impl Worst {
    fn max(&self) -> f64 {
        [self.adjoint, self.isometry, self.contraction, self.projective, self.left_inverse, self.cone, self.dual]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

fn dist(a: &ConePoint<f64>, b: &ConePoint<f64>) -> f64 {
    a.sub(b).unwrap().norm()
}

fn dimension(d: usize, seed: u64) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Worst::default();
    for _ in 0..CASES {
        let n = rng.gen_range(1..=16);
        let j = gen::partition(&mut rng, n);
        let extra = rng.gen_range(1..=8);
        let fine = j.merge(&gen::partition(&mut rng, extra));
        let g = {
            let n = rng.gen_range(1..=16);
            gen::partition(&mut rng, n)
        };
        let iota = gen::path(&mut rng, &g, d);
        let (x, y) = (gen::point(&mut rng, &j, d), gen::point(&mut rng, &j, d));
        let (ni, nx, ny) = (iota.norm(), x.norm(), y.norm());

        let px = project_pj(&iota, &j);
        w.adjoint = w.adjoint.max(rel(px.inner(&x).unwrap(), iota.inner(&lift_lj(&x)).unwrap(), ni * nx));
        let (lx, ly) = (lift_lj(&x), lift_lj(&y));
        w.isometry = w.isometry.max(rel(lx.inner(&ly).unwrap(), x.inner(&y).unwrap(), nx * ny));
        w.isometry = w.isometry.max(rel(lx.norm(), nx, nx));
        w.contraction = w.contraction.max((px.norm() - ni).max(0.0) / ni);
        let via_fine = project_pj(&coarsen(&iota, &fine), &j);
        w.projective = w.projective.max(dist(&via_fine, &px) / ni);
        w.left_inverse = w.left_inverse.max(dist(&project_pj(&lx, &j), &x) / nx);

        // p_j(C) ⊂ C^j, and every point of C^j is the projection of its lift
        let mono = gen::cone_point(&mut rng, &g, d);
        let pm = project_pj(&lift_lj(&mono), &j);
        w.cone = w.cone.max((-gen::min_eig_rel(&pm.increments(), 1.0 + mono.linf_norm())).max(0.0));
        let c = gen::cone_point(&mut rng, &j, d);
        w.left_inverse = w.left_inverse.max(dist(&project_pj(&lift_lj(&c), &j), &c) / c.norm().max(1e-300));

        // p_j(C*) ⊂ (C^j)*: a step certificate on g has PSD tail integrals everywhere
        let cert = gen::dual_point(&mut rng, &g, d);
        let scale = 1.0 + cert.tail_sums().iter().map(|m| m.spectral_norm()).fold(0.0, f64::max);
        let pc = project_pj(&lift_lj(&cert), &j);
        w.dual = w.dual.max((-gen::min_eig_rel(&pc.tail_sums(), scale)).max(0.0));
    }
    w
}

pub fn cone_algebra(ctx: &mut Ctx) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for d in 1..=3 {
        let w = dimension(d, ctx.seed ^ (0xc0 + d as u64));
        worst = worst.max(w.max());
        parts.push(format!("D={d} {:.1e}", w.max()));
        if d == 3 {
            parts.push(format!(
                "(adj {:.1e}, iso {:.1e}, contr {:.1e}, proj {:.1e}, pl {:.1e}, cone {:.1e}, dual {:.1e})",
                w.adjoint, w.isometry, w.contraction, w.projective, w.left_inverse, w.cone, w.dual
            ));
        }
    }
    Outcome::new(worst <= 1e-10, format!("{CASES} cases per D, max rel err {worst:.2e} [{}]", parts.join(", ")))
}

pub fn rearrangement(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5a);
    let (mut dual, mut stat, mut idem) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..CASES {
        let n = rng.gen_range(1..=16);
        let j = Partition::uniform(n).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = ConePoint::from_scalars(j, &v).unwrap();
        let s = x.rearrange_sharp().unwrap();
        let tails = s.sub(&x).unwrap().tail_sums();
        dual = dual.max(tails.iter().map(|m| -m.get(0, 0)).fold(0.0, f64::max));
        let (a, b) = (x.flat(), s.flat());
        for h in [|r: f64| r * r, |r: f64| r.abs().powi(3), f64::exp] {
            let (ha, hb): (f64, f64) = (a.iter().map(|&r| h(r)).sum(), b.iter().map(|&r| h(r)).sum());
            stat = stat.max((ha - hb).abs() / ha.abs().max(1.0));
        }
        if s.rearrange_sharp().unwrap() != s || b.windows(2).any(|p| p[1] < p[0]) {
            idem += 1;
        }
    }
    let pass = dual <= 1e-12 && stat <= 1e-12 && idem == 0;
    Outcome::new(
        pass,
        format!("{CASES} cases: dual-cone excess {dual:.1e}, statistic drift {stat:.1e}, idempotence failures {idem}"),
    )
}
