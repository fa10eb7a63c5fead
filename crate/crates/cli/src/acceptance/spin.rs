use conehj::cone::{ConePoint, DiscreteMeasure, Partition};
use conehj::nonlinearity::{CovarianceModel, Regularization};
use conehj::solvers::hopf_lax;
use conehj::spin_glass::{
    bound_check, free_energy_at_times, moment_check, one_spin_value, pd_second_moment, CascadeSpec, SkInstance,
    SkOneSpin,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Ctx, Outcome};

pub const BETA: f64 = 0.5;
pub const SIZES: [usize; 4] = [6, 8, 10, 12];
pub const TIMES: [f64; 2] = [0.25, 0.5];
/// Replicas for the gap-trend run; at 10³ the one-SE comparisons are noise dominated.
pub const TREND_REPLICAS: usize = 8000;

/// `(atoms, levels)` of `δ_0` and `½δ_0 + ½δ_{0.3}`.
pub fn measures() -> [(Vec<f64>, Vec<f64>); 2] {
    [(vec![0.0], vec![0.0, 1.0]), (vec![0.0, 0.3], vec![0.0, 0.5, 1.0])]
}

/// `f(t, ϱ)` by Hopf-Lax on the coarsest partition carrying the quantile path of `ϱ`.
pub fn hj_value(atoms: &[f64], levels: &[f64], t: f64) -> f64 {
    let reg = Regularization::new(CovarianceModel::quadratic(BETA).unwrap()).unwrap();
    let j = Partition::from_breaks(levels[1..].to_vec()).unwrap();
    let mu = ConePoint::from_scalars(j, atoms).unwrap();
    hopf_lax(&SkOneSpin::default(), &reg, t, &mu).unwrap().value
}

pub fn spin_glass(ctx: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x12);
    let mut notes = Vec::new();

    // (a) E exp(√(2t) H_N(σ) - N t ξ(σσᵀ/N)) = 1
    let mut a_ok = true;
    let mut a_worst = 0.0f64;
    for n in 1..=4 {
        for t in TIMES {
            let sigma: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let (m, se) = moment_check(n, BETA, t, &sigma, 10_000, rng.gen()).unwrap();
            a_worst = a_worst.max((m - 1.0).abs() / se);
            a_ok &= (m - 1.0).abs() <= 3.0 * se;
        }
    }
    notes.push(format!("(a) {} max |m-1|/SE {a_worst:.2}", verdict(a_ok)));

    // (b) F̄_N(0, ϱ) = ψ(ϱ)
    let mut b_ok = true;
    let mut b_worst = 0.0f64;
    for (atoms, levels) in measures() {
        let m = DiscreteMeasure::from_scalars(&atoms, levels.clone()).unwrap();
        let psi = one_spin_value(&atoms, &levels);
        for n in [1, 6] {
            let inst = SkInstance { n, beta: BETA, t: 0.0, measure: m.clone(), seed: rng.gen() };
            let e =
                free_energy_at_times(&inst, &[0.0], &CascadeSpec::for_measure(&m, rng.gen()), 1000).unwrap().remove(0);
            let z = if e.se > 0.0 {
                (e.mean - psi).abs() / e.se
            } else if (e.mean - psi).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            b_worst = b_worst.max(z);
            b_ok &= z <= 3.0;
        }
    }
    notes.push(format!("(b) {} max |F-ψ|/SE {b_worst:.2}", verdict(b_ok)));

    // (c) E Σ ν² = 1 - ζ
    let mut c_ok = true;
    let mut c_worst = 0.0f64;
    for zeta in [0.3, 0.5, 0.7] {
        let (m, se) = pd_second_moment(&CascadeSpec { zetas: vec![zeta], m: 256, seed: rng.gen() }, 2000).unwrap();
        c_worst = c_worst.max((m - (1.0 - zeta)).abs() / se);
        c_ok &= (m - (1.0 - zeta)).abs() <= 3.0 * se;
    }
    notes.push(format!("(c) {} max dev/SE {c_worst:.2}", verdict(c_ok)));

    // (d) bound check at 10³ replicas and (e) gap trend on an independent run at
    // TREND_REPLICAS, per (ϱ, t)
    let (mut d_ok, mut e_ok) = (true, true);
    let mut csv = String::from("check,measure,N,t,mean,se,replicas,f,gap,allowance,pass\n");
    for (mi, (atoms, levels)) in measures().into_iter().enumerate() {
        let m = DiscreteMeasure::from_scalars(&atoms, levels.clone()).unwrap();
        let runs = [("bound", 1000, 0x13, 0x14), ("trend", TREND_REPLICAS, 0x15, 0x16)];
        let mut by_run = Vec::new();
        for (_, replicas, cs, ds) in runs {
            let spec = CascadeSpec::for_measure(&m, ctx.seed ^ cs);
            let mut by_t: Vec<Vec<_>> = vec![Vec::new(); TIMES.len()];
            for n in SIZES {
                let inst = SkInstance { n, beta: BETA, t: 0.0, measure: m.clone(), seed: ctx.seed ^ ds };
                for (i, e) in free_energy_at_times(&inst, &TIMES, &spec, replicas).unwrap().into_iter().enumerate() {
                    by_t[i].push(e);
                }
            }
            by_run.push(by_t);
        }
        for (i, &t) in TIMES.iter().enumerate() {
            let f = hj_value(&atoms, &levels, t);
            let d = bound_check(&by_run[0][i], f).unwrap();
            let e = bound_check(&by_run[1][i], f).unwrap();
            for ((name, replicas, _, _), r) in runs.iter().zip([&d, &e]) {
                for row in &r.rows {
                    csv.push_str(&format!(
                        "{name},{mi},{},{:.16e},{:.16e},{:.16e},{replicas},{:.16e},{:.16e},{:.16e},{}\n",
                        row.n, t, row.mean, row.se, f, row.gap, row.allowance, row.pass
                    ));
                }
            }
            let rows_ok = d.rows.iter().filter(|r| r.pass).count();
            let gaps = |r: &conehj::spin_glass::BoundReport| {
                r.rows.iter().map(|r| format!("{:.4}", r.gap)).collect::<Vec<_>>().join(" ")
            };
            notes.push(format!(
                "ϱ{mi} t={t}: (d) {rows_ok}/{} rows, f {f:.4}, gaps {}; (e) {}, gaps {}",
                d.rows.len(),
                gaps(&d),
                verdict(e.trend),
                gaps(&e)
            ));
            d_ok &= d.pass;
            e_ok &= e.trend;
        }
    }
    ctx.artifact("c12_bound.csv", |w| {
        w.extend_from_slice(csv.as_bytes());
        Ok(())
    });
    Outcome::new(a_ok && b_ok && c_ok && d_ok && e_ok, notes.join("; "))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}
