//! Refinement studies along dyadic chains, projective consistency and
//! Lipschitz audits of tabulated solutions.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{project_pj, restrict_point, ConePoint, Partition, PathRole, StepPath};
use crate::error::{Error, Result};
use crate::nonlinearity::{MatrixFunction, Regularization};
use crate::scalar::{lit, Real};
use crate::solvers::{hopf_lax_with, InitialCondition, SolutionSurface, SolverOptions};

/// `f_{j→j'}(t, x) = f_j(t, p_j l_{j'} x)` for `x ∈ C^{j'}` and `j ⊂ j'`.
pub fn lift_restrict<T: Real>(
    f_j: impl Fn(&ConePoint<T>) -> Result<T>,
    j: &Partition<T>,
    x: &ConePoint<T>,
) -> Result<T> {
    f_j(&restrict_point(x, j)?)
}

/// `f_j^↑(t, μ) = f_j(t, p_j μ)`.
pub fn lift_up<T: Real>(f_j: impl Fn(&ConePoint<T>) -> Result<T>, j: &Partition<T>, mu: &StepPath<T>) -> Result<T> {
    f_j(&project_pj(mu, j))
}

/// `j_1 ⊂ j_2 ⊂ ...` with `|j_n| = first 2^n`.
pub fn dyadic_chain<T: Real>(first: usize, last: usize) -> Result<Vec<Partition<T>>> {
    if first == 0 || last < first {
        return Err(Error::InvalidInput("need 1 <= first <= last".into()));
    }
    let mut out = Vec::new();
    let mut n = first;
    while n <= last {
        out.push(Partition::uniform(n)?);
        n *= 2;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestPoint<T> {
    pub t: T,
    pub mu: StepPath<T>,
}

/// Random nondecreasing scalar step paths on `fine` with values in `[0, radius]`
/// and times in `(0, t_max]`.
pub fn seeded_test_points<T: Real>(
    count: usize,
    radius: T,
    t_max: T,
    fine: &Partition<T>,
    seed: u64,
) -> Result<Vec<TestPoint<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<T> = (0..fine.len()).map(|_| radius * T::lit(rng.gen::<f64>())).collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let t = t_max * T::lit(rng.gen_range(0.05..=1.0));
            Ok(TestPoint { t, mu: StepPath::with_role(ConePoint::from_scalars(fine.clone(), &v)?, PathRole::Cone)? })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct RefinementStudy<T> {
    /// `|j_n|`.
    pub levels: Vec<usize>,
    /// `values[n][i] = f_{j_n}^↑(t_i, μ_i)`.
    pub values: Vec<Vec<T>>,
    /// `e_n = max_i |f_{j_n→j_{n+1}} - f_{j_{n+1}}| / (t + |x|)` at `x = p_{j_{n+1}} μ_i`.
    pub errors: Vec<T>,
    /// Least-squares slope of `log e_n` on `log |j_n|` over the last three
    /// differences; `None` when they vanish.
    pub slope: Option<T>,
    /// `max_n e_n |j_n|^{(2-p)/(2p)}`.
    pub constant: T,
    /// `(2 - p) / (2p)`.
    pub exponent: T,
    /// `e_{n+1} <= 2 e_n` throughout.
    pub cauchy_decay: bool,
    pub pass: bool,
}

impl<T: Real> RefinementStudy<T> {
    /// CSV `level,n_cells,test_id,value,error`, the error taken against the finest level.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "level,n_cells,test_id,value,error")?;
        let finest = self.values.last().expect("at least three levels");
        for (n, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let e = (*v - finest[i]).abs();
                writeln!(out, "{},{},{},{:.16e},{:.16e}", n, self.levels[n], i, v.to_f64_lossy(), e.to_f64_lossy())?;
            }
        }
        Ok(())
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Successive-level errors of the Hopf-Lax solution along `chain`, fitted
/// against `|j|^{-(2-p)/(2p)}`. Passes when the slope is at most `0.8` times
/// the theoretical one, or when the errors vanish.
pub fn rate_study<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    chain: &[Partition<T>],
    points: &[TestPoint<T>],
    p: T,
    opts: &SolverOptions,
) -> Result<RefinementStudy<T>> {
    if chain.len() < 3 {
        return Err(Error::InvalidInput("a rate study needs at least three levels".into()));
    }
    if !(p >= T::one() && p < lit(2.0)) {
        return Err(Error::InvalidInput("p must lie in [1, 2)".into()));
    }
    for w in chain.windows(2) {
        w[1].check_refines(&w[0])?;
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no test points".into()));
    }
    let solve = |t: T, x: &ConePoint<T>| hopf_lax_with(psi, reg, t, x, opts).map(|e| e.value);
    let jobs: Vec<(usize, usize)> = (0..chain.len()).flat_map(|n| (0..points.len()).map(move |i| (n, i))).collect();
    // per job: f_{j_n}^↑ and, for n > 0, f_{j_{n-1}→j_n} at p_{j_n} μ
    let out: Vec<Result<(T, T)>> = jobs
        .par_iter()
        .map(|&(n, i)| {
            let TestPoint { t, mu } = &points[i];
            let x = project_pj(mu, &chain[n]);
            let up = solve(*t, &x)?;
            let lifted = if n > 0 { lift_restrict(|y| solve(*t, y), &chain[n - 1], &x)? } else { up };
            Ok((up, lifted))
        })
        .collect();
    let mut values = vec![Vec::with_capacity(points.len()); chain.len()];
    let mut lifted = vec![Vec::with_capacity(points.len()); chain.len()];
    for (&(n, _), r) in jobs.iter().zip(out) {
        let (a, b) = r?;
        values[n].push(a);
        lifted[n].push(b);
    }
    let errors: Vec<T> = (1..chain.len())
        .map(|n| {
            (0..points.len())
                .map(|i| {
                    let x = project_pj(&points[i].mu, &chain[n]);
                    (lifted[n][i] - values[n][i]).abs() / (points[i].t + x.norm())
                })
                .fold(T::zero(), T::max)
        })
        .collect();
    let levels: Vec<usize> = chain.iter().map(|j| j.len()).collect();
    let exponent = (lit::<T>(2.0) - p) / (lit::<T>(2.0) * p);
    let k = errors.len().min(3);
    let tail = &errors[errors.len() - k..];
    let scale = values.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    let vanish = T::epsilon() * lit::<T>(1e3) * (T::one() + scale);
    let slope = if tail.iter().all(|&e| e <= vanish) {
        None
    } else {
        let xs: Vec<T> =
            levels[levels.len() - 1 - k..levels.len() - 1].iter().map(|&n| T::from_usize_lossy(n).ln()).collect();
        let ys: Vec<T> = tail.iter().map(|&e| e.max(vanish).ln()).collect();
        Some(ls_slope(&xs, &ys))
    };
    let constant =
        errors.iter().zip(&levels).map(|(&e, &n)| e * T::from_usize_lossy(n).powf(exponent)).fold(T::zero(), T::max);
    let cauchy_decay = errors.windows(2).all(|w| w[1] <= lit::<T>(2.0) * w[0] + vanish);
    let pass = slope.map_or(true, |s| s <= -lit::<T>(0.8) * exponent);
    Ok(RefinementStudy { levels, values, errors, slope, constant, exponent, cauchy_decay, pass })
}

/// Constants the audit compares against.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LipschitzBounds<T> {
    /// `‖ψ‖_Lip` in `H`.
    pub spatial: T,
    /// `L¹` constant of `ψ`.
    pub l1: T,
    /// `sup |H|` over gradients whose densities are bounded by the `L¹` constant.
    pub time: T,
}

impl<T: Real> LipschitzBounds<T> {
    /// Gradient densities of `f(t, ·)` are bounded by `lip_l1` entrywise, so
    /// `|∂_t f| <= max(|ξ̄(0)|, ξ̄(lip_l1 I))` because `ξ̄` is increasing.
    pub fn for_problem(psi: &dyn InitialCondition<T>, reg: &Regularization<T>) -> Self {
        let d = MatrixFunction::dim(reg);
        let at = |s: T| {
            let a: Vec<T> = (0..d * d).map(|e| if e % (d + 1) == 0 { s } else { T::zero() }).collect();
            reg.value_flat(&a)
        };
        LipschitzBounds { spatial: psi.lip_h(), l1: psi.lip_l1(), time: at(T::zero()).abs().max(at(psi.lip_l1())) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LipschitzAudit<T> {
    pub spatial: T,
    pub l1: T,
    pub time: T,
    pub bounds: LipschitzBounds<T>,
    pub slack: T,
    pub pass: bool,
}

/// Largest difference quotients over all sample pairs at each time (spatial,
/// in `H^j` and `L¹`) and over consecutive times at each sample.
pub fn lipschitz_audit<T: Real>(
    surfaces: &[&SolutionSurface<T>],
    bounds: &LipschitzBounds<T>,
    slack: T,
) -> LipschitzAudit<T> {
    let per: Vec<(T, T, T)> = surfaces
        .par_iter()
        .map(|s| {
            let (mut sp, mut l1, mut tm) = (T::zero(), T::zero(), T::zero());
            let n = s.samples.len();
            for a in 0..n {
                for b in a + 1..n {
                    let d = s.samples[a].sub(&s.samples[b]).expect("shared partition");
                    let (dh, d1) = (d.norm(), d.l1_norm());
                    if dh <= T::zero() {
                        continue;
                    }
                    for row in &s.values {
                        let df = (row[a] - row[b]).abs();
                        sp = sp.max(df / dh);
                        l1 = l1.max(df / d1);
                    }
                }
            }
            for (i, w) in s.values.windows(2).enumerate() {
                let dt = s.times[i + 1] - s.times[i];
                if dt <= T::zero() {
                    continue;
                }
                for (x, y) in w[0].iter().zip(&w[1]) {
                    tm = tm.max((*y - *x).abs() / dt);
                }
            }
            (sp, l1, tm)
        })
        .collect();
    let (spatial, l1, time) =
        per.iter().fold((T::zero(), T::zero(), T::zero()), |m, v| (m.0.max(v.0), m.1.max(v.1), m.2.max(v.2)));
    let ok = |q: T, b: T| q <= b * (T::one() + slack) + T::tol(b) * lit(1e-3);
    let pass = ok(spatial, bounds.spatial) && ok(l1, bounds.l1) && ok(time, bounds.time);
    LipschitzAudit { spatial, l1, time, bounds: bounds.clone(), slack, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::CovarianceModel;
    use crate::solvers::initial::cone_step_path as step;
    use crate::solvers::{hopf_lax, solve_surface, ComposedConcave, Linear, Method, SlopeProfile};

    fn sq(beta: f64) -> Regularization<f64> {
        Regularization::new(CovarianceModel::quadratic(beta).unwrap()).unwrap()
    }

    #[test]
    fn identity_and_constants() {
        let reg = sq(1.0);
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.2, b: 0.8 }).unwrap();
        let j = Partition::uniform(4).unwrap();
        let x = ConePoint::from_scalars(j.clone(), &[0.1, 0.3, 0.3, 0.9]).unwrap();
        let f = |y: &ConePoint<f64>| hopf_lax(&psi, &reg, 0.4, y).map(|e| e.value);
        assert_eq!(lift_restrict(f, &j, &x).unwrap(), f(&x).unwrap());
        let fine = Partition::uniform(16).unwrap();
        let c = ConePoint::from_scalars(fine, &[0.7; 16]).unwrap();
        let jc = ConePoint::from_scalars(j.clone(), &[0.7; 4]).unwrap();
        assert!((lift_restrict(f, &j, &c).unwrap() - f(&jc).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn non_nested_partitions_rejected() {
        let j = Partition::uniform(3).unwrap();
        let x = ConePoint::from_scalars(Partition::uniform(4).unwrap(), &[0.0, 0.1, 0.2, 0.3]).unwrap();
        assert!(lift_restrict(|_| Ok(0.0), &j, &x).is_err());
    }

    #[test]
    fn projectivity_on_random_paths() {
        let reg = sq(1.0);
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let fine = Partition::uniform(32).unwrap();
        let (j, jp) = (Partition::uniform(4).unwrap(), Partition::uniform(8).unwrap());
        for tp in seeded_test_points(8, 4.0, 1.0, &fine, 3).unwrap() {
            let f = |y: &ConePoint<f64>| hopf_lax(&psi, &reg, tp.t, y).map(|e| e.value);
            let up = lift_up(f, &j, &tp.mu).unwrap();
            let via = lift_restrict(f, &j, &project_pj(&tp.mu, &jp)).unwrap();
            assert!((up - via).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_on_lipschitz_datum() {
        let reg = sq(1.0);
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let chain = dyadic_chain(4, 64).unwrap();
        let pts = seeded_test_points(32, 4.0, 1.0, chain.last().unwrap(), 11).unwrap();
        let s = rate_study(&psi, &reg, &chain, &pts, 1.0, &SolverOptions::default()).unwrap();
        assert!(s.pass && s.slope.unwrap() <= -0.4, "{:?} {:?}", s.slope, s.errors);
    }

    #[test]
    fn factoring_datum_is_exact() {
        let reg = sq(1.0);
        let coarse = Partition::uniform(4).unwrap();
        let psi = ComposedConcave::new(SlopeProfile::Step(step(coarse, &[0.1, 0.4, 0.6, 1.0]).unwrap())).unwrap();
        let chain = dyadic_chain(4, 32).unwrap();
        let pts = seeded_test_points(8, 4.0, 1.0, chain.last().unwrap(), 5).unwrap();
        let s = rate_study(&psi, &reg, &chain, &pts, 1.0, &SolverOptions::default()).unwrap();
        assert!(s.errors.iter().all(|&e| e < 1e-12), "{:?}", s.errors);
        assert!(s.slope.is_none() && s.pass);
    }

    #[test]
    fn too_few_levels() {
        let reg = sq(1.0);
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let chain = dyadic_chain(4, 8).unwrap();
        let pts = seeded_test_points(2, 1.0, 1.0, &chain[1], 1).unwrap();
        assert!(matches!(
            rate_study(&psi, &reg, &chain, &pts, 1.0, &SolverOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn linear_audit_matches_h() {
        let reg = sq(1.0);
        let j = Partition::uniform(2).unwrap();
        let psi = Linear::new(step(j.clone(), &[0.3, 0.4]).unwrap()).unwrap();
        let samples: Vec<_> = [[0.0, 0.0], [0.3, 0.4], [0.6, 0.8], [0.1, 0.5]]
            .iter()
            .map(|v| ConePoint::from_scalars(j.clone(), v).unwrap())
            .collect();
        let s =
            solve_surface(&psi, &reg, &[0.0, 0.5, 1.0], &samples, Method::HopfLax, &SolverOptions::default()).unwrap();
        let b = LipschitzBounds::for_problem(&psi, &reg);
        let a = lipschitz_audit(&[&s], &b, 0.01);
        assert!(a.pass);
        // the pair (0, 0) -> (0.3, 0.4) is parallel to h
        assert!((a.spatial - 0.125f64.sqrt()).abs() < 1e-12, "{}", a.spatial);
    }
}
