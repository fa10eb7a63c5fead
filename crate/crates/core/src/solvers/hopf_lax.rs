use super::initial::InitialCondition;
use super::search::{maximize, Problem};
use super::{Estimate, Route, SolverOptions};
use crate::cone::ConePoint;
use crate::error::{Error, Result};
use crate::nonlinearity::{ConjugateModel, MatrixFunction, Regularization, ScalarProfile};
use crate::optim::{maximize_on_cone, AscentOptions};
use crate::scalar::{lit, Real};

pub(crate) fn check_point<T: Real>(psi: &dyn InitialCondition<T>, dim: usize, t: T, x: &ConePoint<T>) -> Result<()> {
    if psi.dim() != dim || x.dim() != dim {
        return Err(Error::DimensionMismatch("ψ, the model and x must share D".into()));
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidInput("t must be finite and nonnegative".into()));
    }
    if !x.is_in_cone(None) {
        return Err(Error::InvalidInput("x must lie in C^j".into()));
    }
    Ok(())
}

/// `f_j(t, x) = sup_{y ∈ C^j} ψ^j(x + y) - t (bold ξ̄^j)*(y / t)`.
pub fn hopf_lax<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    t: T,
    x: &ConePoint<T>,
) -> Result<Estimate<T>> {
    hopf_lax_with(psi, reg, t, x, &SolverOptions::default())
}

pub fn hopf_lax_with<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    t: T,
    x: &ConePoint<T>,
    opts: &SolverOptions,
) -> Result<Estimate<T>> {
    check_point(psi, MatrixFunction::dim(reg), t, x)?;
    if !reg.model().is_convex() {
        return Err(Error::Precondition("Hopf-Lax needs a convex nonlinearity".into()));
    }
    if t == T::zero() {
        return Ok(Estimate::exact(psi.eval(x), Route::TimeZero));
    }
    if !opts.force_numeric {
        if let Some(v) = psi.hopf_lax_closed(reg, t, x) {
            return Ok(Estimate::exact(v, Route::ClosedForm));
        }
    }
    if x.dim() == 1 {
        scalar(psi, reg, t, x, opts)
    } else {
        nested(psi, reg, t, x, opts)
    }
}

/// Search radius for `y / t`: twice the slope of `ξ̄` at the `ℓ∞` gradient bound,
/// capped by the domain of `ξ̄*`.
fn radius<T: Real>(slope_at_lip: T, cap: Option<T>) -> T {
    let r = lit::<T>(2.0) * slope_at_lip;
    cap.map_or(r, |c| r.min(c))
}

fn scalar<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    t: T,
    x: &ConePoint<T>,
    opts: &SolverOptions,
) -> Result<Estimate<T>> {
    let j = x.partition();
    let w = j.widths();
    let conj = ConjugateModel::of_regularization(reg.clone());
    let dom = reg.max_slope().expect("regularized profiles are Lipschitz");
    let cap = t * radius(reg.slope(psi.lip_l1()), Some(dom));
    let level = psi.at_level(j);
    let x0 = x.flat();
    let value = |y: &[T]| -> T {
        let mut pen = T::zero();
        for k in 0..y.len() {
            let r = y[k] / t;
            if r > dom {
                return T::neg_infinity();
            }
            pen = pen + w[k] * conj.eval(r);
        }
        let z: Vec<T> = x0.iter().zip(y).map(|(&a, &b)| a + b).collect();
        level.value(&z) - t * pen
    };
    let grad = |y: &[T]| -> Vec<T> {
        let z: Vec<T> = x0.iter().zip(y).map(|(&a, &b)| a + b).collect();
        let g = level.gradient(&z);
        (0..y.len()).map(|k| g[k] - w[k] * conj.derivative(y[k] / t)).collect()
    };
    let found = maximize(&Problem {
        j,
        value: &value,
        grad: Some(&grad),
        concave: psi.is_concave(),
        start: vec![T::zero(); j.len()],
        cap,
        multistart: opts.multistart,
        seed: opts.seed,
    });
    // y = 0 is always feasible
    let base = value(&vec![T::zero(); j.len()]);
    Ok(Estimate::from_found(found, base))
}

/// `D > 1`: the monotone conjugate of `bold ξ̄^j` is itself computed by ascent.
fn nested<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    t: T,
    x: &ConePoint<T>,
    opts: &SolverOptions,
) -> Result<Estimate<T>> {
    let j = x.partition().clone();
    let d = x.dim();
    let block = d * d;
    let n = j.len();
    let w = j.widths();
    // traces of the inner maximizer are kept below this bound
    let zcap = lit::<T>(4.0) * T::from_usize_lossy(d) * (T::one() + psi.lip_l1());
    let inner = |v: &[T]| -> (T, Vec<T>) {
        let r = maximize_on_cone(
            &j,
            d,
            &vec![T::zero(); n * block],
            |z: &[T]| {
                let tr: T = (0..d).map(|e| z[(n - 1) * block + e * (d + 1)]).sum();
                if tr > zcap {
                    return (T::neg_infinity(), vec![T::zero(); z.len()]);
                }
                let mut val = T::zero();
                let mut g = vec![T::zero(); z.len()];
                let mut tmp = vec![T::zero(); block];
                for k in 0..n {
                    let zk = &z[k * block..(k + 1) * block];
                    let vk = &v[k * block..(k + 1) * block];
                    val = val + w[k] * (zk.iter().zip(vk).map(|(&a, &b)| a * b).sum::<T>() - reg.value_flat(zk));
                    reg.grad_flat(zk, &mut tmp);
                    for e in 0..block {
                        g[k * block + e] = w[k] * (vk[e] - tmp[e]);
                    }
                }
                (val, g)
            },
            &AscentOptions { max_iter: 2000, rel_tol: lit(1e-12), cap: None },
        );
        (r.value, r.x)
    };
    let level = psi.at_level(&j);
    let x0 = x.flat().to_vec();
    let outer = |y: &[T]| -> (T, Vec<T>) {
        let v: Vec<T> = y.iter().map(|&a| a / t).collect();
        let (c, zstar) = inner(&v);
        let z: Vec<T> = x0.iter().zip(y).map(|(&a, &b)| a + b).collect();
        let g = level.gradient(&z);
        let val = level.value(&z) - t * c;
        (val, (0..y.len()).map(|i| g[i] - w[i / block] * zstar[i]).collect())
    };
    let mut best: Option<(T, usize, bool)> = None;
    let mut total = 0;
    let starts = if psi.is_concave() { 1 } else { opts.multistart.clamp(1, 4) };
    for s in 0..starts {
        let y0: Vec<T> = (0..n * block)
            .map(|i| {
                let k = i / block;
                let diag = (i % block) % (d + 1) == 0;
                if diag && s > 0 {
                    t * T::from_usize_lossy(s * (k + 1)) / T::from_usize_lossy(n * starts)
                } else {
                    T::zero()
                }
            })
            .collect();
        let r = maximize_on_cone(&j, d, &y0, &outer, &AscentOptions { max_iter: 400, rel_tol: lit(1e-10), cap: None });
        total += r.iterations;
        if best.map_or(true, |b| r.value > b.0) {
            best = Some((r.value, r.iterations, r.converged));
        }
    }
    let (value, _, converged) = best.expect("one start");
    let base = outer(&vec![T::zero(); n * block]).0;
    Ok(Estimate {
        value: value.max(base),
        route: Route::Nested,
        iterations: total,
        residual: T::nan(),
        converged,
        argmax: None,
    })
}

/// `sup_{ν ∈ C^j} ψ^j(ν) - t Σ_k w_k ξ*((ν_k - μ_k) / t)`, where `ν - μ` is free.
pub fn hopf_lax_1d<T: Real>(
    psi: &dyn InitialCondition<T>,
    conj: &ConjugateModel<T>,
    t: T,
    mu: &ConePoint<T>,
) -> Result<Estimate<T>> {
    hopf_lax_1d_with(psi, conj, t, mu, &SolverOptions::default())
}

pub fn hopf_lax_1d_with<T: Real>(
    psi: &dyn InitialCondition<T>,
    conj: &ConjugateModel<T>,
    t: T,
    mu: &ConePoint<T>,
    opts: &SolverOptions,
) -> Result<Estimate<T>> {
    check_point(psi, 1, t, mu)?;
    if t == T::zero() {
        return Ok(Estimate::exact(psi.eval(mu), Route::TimeZero));
    }
    let j = mu.partition();
    let w = j.widths();
    let m = mu.flat();
    let dom = conj.domain_cap();
    let reach = t * radius(conj.primal_slope(psi.lip_l1()), dom);
    let cap = m[m.len() - 1] + reach;
    let level = psi.at_level(j);
    let value = |nu: &[T]| -> T {
        let mut pen = T::zero();
        for k in 0..nu.len() {
            let r = (nu[k] - m[k]) / t;
            if dom.is_some_and(|c| r > c) {
                return T::neg_infinity();
            }
            pen = pen + w[k] * conj.eval(r);
        }
        level.value(nu) - t * pen
    };
    let grad = |nu: &[T]| -> Vec<T> {
        let g = level.gradient(nu);
        (0..nu.len()).map(|k| g[k] - w[k] * conj.derivative((nu[k] - m[k]) / t)).collect()
    };
    let found = maximize(&Problem {
        j,
        value: &value,
        grad: Some(&grad),
        concave: psi.is_concave(),
        start: m.to_vec(),
        cap,
        multistart: opts.multistart,
        seed: opts.seed,
    });
    // ν = μ is always feasible
    let base = value(m);
    Ok(Estimate::from_found(found, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Partition, StepPath};
    use crate::nonlinearity::CovarianceModel;
    use crate::solvers::initial::{cone_step_path, ComposedConcave, Linear, SeparableConvex, SlopeProfile};

    fn sq() -> Regularization<f64> {
        Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap()
    }

    fn numeric() -> SolverOptions {
        SolverOptions { force_numeric: true, ..Default::default() }
    }

    #[test]
    fn time_zero_is_psi() {
        let j = Partition::uniform(2).unwrap();
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.2, b: 1.0 }).unwrap();
        let x = ConePoint::from_scalars(j, &[0.3, 0.8]).unwrap();
        let e = hopf_lax(&psi, &sq(), 0.0, &x).unwrap();
        assert_eq!(e.value, psi.eval(&x));
    }

    #[test]
    fn identity_psi_one_cell() {
        let j = Partition::uniform(1).unwrap();
        let psi = Linear::new(cone_step_path(j.clone(), &[1.0]).unwrap()).unwrap();
        let x = ConePoint::from_scalars(j, &[0.0]).unwrap();
        assert_eq!(hopf_lax(&psi, &sq(), 1.0, &x).unwrap().value, 1.0);
        let e = hopf_lax_with(&psi, &sq(), 1.0, &x, &numeric()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn linear_numeric_matches_closed_form() {
        let j = Partition::from_breaks(vec![0.2, 0.6, 1.0]).unwrap();
        let psi = Linear::new(cone_step_path(j.clone(), &[0.1, 0.5, 0.9]).unwrap()).unwrap();
        let x = ConePoint::from_scalars(j, &[0.2, 0.2, 1.3]).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let a = hopf_lax(&psi, &sq(), t, &x).unwrap().value;
            let b = hopf_lax_with(&psi, &sq(), t, &x, &numeric()).unwrap().value;
            assert!((a - b).abs() < 1e-7, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn composed_numeric_matches_closed_form() {
        let reg = Regularization::new(CovarianceModel::quadratic(0.5).unwrap()).unwrap();
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let j = Partition::uniform(8).unwrap();
        let x = ConePoint::from_scalars(j, &[0.0, 0.1, 0.1, 0.5, 0.9, 1.0, 2.0, 3.5]).unwrap();
        let a = hopf_lax::<f64>(&psi, &reg, 0.6, &x).unwrap();
        let b = hopf_lax_with(&psi, &reg, 0.6, &x, &numeric()).unwrap();
        assert_eq!(a.route, Route::ClosedForm);
        assert!((a.value - b.value).abs() < 1e-9, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn one_dimensional_reduction_agrees() {
        let reg = sq();
        let conj = ConjugateModel::of_regularization(reg.clone());
        let j = Partition::from_breaks(vec![0.4, 1.0]).unwrap();
        let h = cone_step_path(j.clone(), &[0.2, 0.7]).unwrap();
        let sep = SeparableConvex::new(SlopeProfile::Step(h.clone()), SlopeProfile::Affine { a: 0.1, b: 0.3 }).unwrap();
        let cc = ComposedConcave::new(SlopeProfile::Step(h)).unwrap();
        let x = ConePoint::from_scalars(j, &[0.3, 0.6]).unwrap();
        for psi in [&sep as &dyn InitialCondition<f64>, &cc] {
            for t in [0.1, 0.5, 1.0] {
                let a = hopf_lax_with(psi, &reg, t, &x, &numeric()).unwrap().value;
                let b = hopf_lax_1d(psi, &conj, t, &x).unwrap().value;
                assert!((a - b).abs() < 1e-6, "{} t={t}: {a} vs {b}", psi.name());
            }
        }
    }

    #[test]
    fn feasible_point_lower_bound() {
        let reg = sq();
        let conj = ConjugateModel::of_regularization(reg.clone());
        let j = Partition::uniform(3).unwrap();
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.5, b: 0.5 }).unwrap();
        let mu = ConePoint::from_scalars(j, &[0.1, 0.4, 0.4]).unwrap();
        let e = hopf_lax_1d(&psi, &conj, 0.3, &mu).unwrap();
        assert!(e.value >= psi.eval(&mu) + 0.3 * reg.at(0.0));
    }

    #[test]
    fn matrix_linear_nested_matches_closed_form() {
        use crate::linalg::SymMatrix;
        let reg = Regularization::new(CovarianceModel::hadamard(2, &[(2, 1.0)]).unwrap()).unwrap();
        let j = Partition::uniform(2).unwrap();
        let h0 = SymMatrix::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.2]]).unwrap();
        let h1 = SymMatrix::from_rows(&[vec![0.6, 0.1], vec![0.1, 0.5]]).unwrap();
        let h = StepPath::new(j.clone(), vec![h0.clone(), h1.clone()]).unwrap();
        let psi = Linear::new(h).unwrap();
        let x = ConePoint::new(j, vec![h0 * 2.0, h1 * 2.0]).unwrap();
        let a: f64 = hopf_lax(&psi, &reg, 0.5, &x).unwrap().value;
        let b = hopf_lax_with(&psi, &reg, 0.5, &x, &numeric()).unwrap();
        assert_eq!(b.route, Route::Nested);
        assert!((a - b.value).abs() < 1e-4, "{a} vs {}", b.value);
    }
}
