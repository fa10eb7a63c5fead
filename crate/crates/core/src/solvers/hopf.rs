use super::hopf_lax::check_point;
use super::initial::{InitialCondition, LevelFunction};
use super::search::{maximize, Problem};
use super::{Estimate, SolverOptions};
use crate::cone::{project_monotone_box, ConePoint, Partition};
use crate::error::{Error, Result};
use crate::nonlinearity::{CovarianceModel, MatrixFunction};
use crate::optim::{maximize_on_cone, AscentOptions};
use crate::scalar::{lit, Real};

/// `f_j(t, x) = sup_{z ∈ C^j, |z|_∞ <= Lip_1(ψ)} ⟨x, z⟩ - ψ^{j*}(z) + t bold ξ^j(z)` (`D = 1`).
pub fn hopf<T: Real>(
    psi: &dyn InitialCondition<T>,
    model: &CovarianceModel<T>,
    t: T,
    x: &ConePoint<T>,
) -> Result<Estimate<T>> {
    hopf_with(psi, model, t, x, &SolverOptions::default())
}

/// Numeric monotone conjugate of a convex `ψ^j` on `C^j ∩ {x_n <= cap}`.
fn numeric_conjugate<T: Real>(level: &dyn LevelFunction<T>, j: &Partition<T>, z: &[T], cap: T) -> T {
    let w = j.widths();
    let r = maximize_on_cone(
        j,
        1,
        &vec![T::zero(); z.len()],
        |x: &[T]| {
            let g = level.gradient(x);
            let v = (0..x.len()).map(|k| w[k] * x[k] * z[k]).sum::<T>() - level.value(x);
            (v, (0..x.len()).map(|k| w[k] * z[k] - g[k]).collect())
        },
        &AscentOptions { max_iter: 3000, rel_tol: lit(1e-12), cap: Some(cap) },
    );
    r.value
}

pub fn hopf_with<T: Real>(
    psi: &dyn InitialCondition<T>,
    model: &CovarianceModel<T>,
    t: T,
    x: &ConePoint<T>,
    opts: &SolverOptions,
) -> Result<Estimate<T>> {
    check_point(psi, MatrixFunction::dim(model), t, x)?;
    if x.dim() != 1 {
        return Err(Error::Unsupported("the Hopf formula is implemented for D = 1".into()));
    }
    if !psi.is_convex() {
        return Err(Error::Precondition("the Hopf formula needs a convex ψ".into()));
    }
    let j = x.partition();
    let w = j.widths();
    let level = psi.at_level(j);
    let x0 = x.flat();
    let lip = psi.lip_l1();
    let inner_cap = lit::<T>(8.0) * (T::one() + x.linf_norm() + lip);
    let conj =
        |z: &[T]| level.monotone_conjugate(z).unwrap_or_else(|| numeric_conjugate(level.as_ref(), j, z, inner_cap));
    let value = |z: &[T]| -> T {
        let c = conj(z);
        if !c.is_finite() {
            return T::neg_infinity();
        }
        (0..z.len()).map(|k| w[k] * (x0[k] * z[k] + t * model.value_flat(&[z[k]]))).sum::<T>() - c
    };
    let mut found = maximize(&Problem {
        j,
        value: &value,
        grad: None,
        concave: false,
        start: vec![T::zero(); j.len()],
        cap: lip,
        multistart: opts.multistart,
        seed: opts.seed,
    });
    // The objective is convex minus the convex ψ^{j*}, so its maxima sit on kinks
    // of ψ^{j*} that a lattice or pattern search can wedge against. Each DC step
    // linearizes the convex part and jumps to a subgradient of ψ^j, never
    // decreasing the objective.
    let dc_step = |z: &[T]| -> Vec<T> {
        let mut d = [T::zero()];
        let p: Vec<T> = (0..z.len())
            .map(|k| {
                model.grad_flat(&[z[k]], &mut d);
                x0[k] + t * d[0]
            })
            .collect();
        let g = level.gradient(&p);
        let sub: Vec<T> = g.iter().zip(&w).map(|(&a, &wk)| a / wk).collect();
        project_monotone_box(&sub, &w, Some(lip))
    };
    let g0 = level.gradient(x0);
    let starts = [found.y.clone(), vec![T::zero(); j.len()], g0.iter().zip(&w).map(|(&a, &wk)| a / wk).collect()];
    for start in starts {
        let mut z = project_monotone_box(&start, &w, Some(lip));
        let mut v = value(&z);
        for _ in 0..200 {
            let next = dc_step(&z);
            let vn = value(&next);
            found.evals += 1;
            if !(vn > v) {
                break;
            }
            let done = vn - v <= T::epsilon() * (T::one() + vn.abs());
            z = next;
            v = vn;
            if done {
                break;
            }
        }
        if v > found.value {
            found.value = v;
            found.y = z;
        }
    }
    let base = value(&vec![T::zero(); j.len()]);
    Ok(Estimate::from_found(found, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Regularization;
    use crate::solvers::hopf_lax;
    use crate::solvers::initial::{cone_step_path, Linear, MaxAffine, SeparableConvex, SlopeProfile};

    #[test]
    fn time_zero_recovers_psi() {
        let j = Partition::uniform(2).unwrap();
        let h = cone_step_path(j.clone(), &[0.2, 0.5]).unwrap();
        let psi = SeparableConvex::new(SlopeProfile::Step(h), SlopeProfile::Affine { a: 0.2, b: 0.2 }).unwrap();
        let m = CovarianceModel::quadratic(1.0).unwrap();
        let x = ConePoint::from_scalars(j, &[0.5, 1.5]).unwrap();
        let e = hopf::<f64>(&psi, &m, 0.0, &x).unwrap();
        assert!((e.value - psi.eval(&x)).abs() < 1e-7, "{} vs {}", e.value, psi.eval(&x));
    }

    #[test]
    fn linear_closed_form() {
        let j = Partition::from_breaks(vec![0.3, 1.0]).unwrap();
        let h = cone_step_path(j.clone(), &[0.25, 0.8]).unwrap();
        let psi = Linear::new(h).unwrap();
        let m = CovarianceModel::quadratic(1.0).unwrap();
        let x = ConePoint::from_scalars(j, &[0.1, 0.7]).unwrap();
        let e = hopf(&psi, &m, 0.5, &x).unwrap();
        let exact: f64 = 0.3 * 0.25 * 0.1 + 0.7 * 0.8 * 0.7 + 0.5 * (0.3 * 0.0625 + 0.7 * 0.64);
        assert!((e.value - exact).abs() < 1e-8, "{} vs {exact}", e.value);
    }

    #[test]
    fn max_affine_optimum_on_the_cap() {
        // the maximizer is the first piece's projected slope, whose last coordinate
        // equals the cap; value from an independent vertex computation
        let h1 = cone_step_path(
            Partition::from_breaks(vec![0.25944054498583563, 0.5464094416947127, 1.0]).unwrap(),
            &[0.47368836530614833, 0.579447758837832, 0.8799856937871366],
        )
        .unwrap();
        let h2 = cone_step_path(Partition::uniform(1).unwrap(), &[0.6291678950892519]).unwrap();
        let psi = MaxAffine::new(vec![(h1, -0.06906334454055582), (h2, 0.06166811546723089)]).unwrap();
        let m = CovarianceModel::poly(&[(2, 0.6059193894176975), (3, 0.460969252899877)]).unwrap();
        let j = Partition::from_breaks(vec![0.8607759055104242, 1.0]).unwrap();
        let x = ConePoint::from_scalars(j, &[0.5166495139662381, 0.9929316705195251]).unwrap();
        let opts = SolverOptions { force_numeric: true, ..SolverOptions::default() };
        let e = hopf_with::<f64>(&psi, &m, 1.0, &x, &opts).unwrap();
        assert!((e.value - 0.7920294058255829).abs() < 1e-9, "{}", e.value);
    }

    #[test]
    fn agrees_with_hopf_lax_for_convex_data() {
        let j = Partition::uniform(3).unwrap();
        let h = cone_step_path(j.clone(), &[0.1, 0.3, 0.4]).unwrap();
        let a = cone_step_path(j.clone(), &[0.2, 0.2, 0.5]).unwrap();
        let psi = SeparableConvex::new(SlopeProfile::Step(h), SlopeProfile::Step(a)).unwrap();
        let m = CovarianceModel::quadratic(1.0).unwrap();
        let reg = Regularization::new(m.clone()).unwrap();
        let x = ConePoint::from_scalars(j, &[0.2, 0.9, 1.1]).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let a: f64 = hopf(&psi, &m, t, &x).unwrap().value;
            let b = hopf_lax(&psi, &reg, t, &x).unwrap().value;
            assert!((a - b).abs() < 1e-5, "t={t}: {a} vs {b}");
        }
    }
}
