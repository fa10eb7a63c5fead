use serde::{Deserialize, Serialize};

use super::model::{bold_xi, MatrixFunction};
use super::regularize::Regularization;
use crate::cone::{isotonic_regression, ConePoint};
use crate::error::{Error, Result};
use crate::optim::{cumulative, differences, lattice_increments, maximize_on_cone, zoom_max, AscentOptions};
use crate::scalar::{lit, Real};

/// How `H(κ)` is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HMethod {
    /// Isotonic formula for `D = 1`, penalty method otherwise.
    #[default]
    Auto,
    /// `D = 1`: `bold ξ̄(max(iso(κ), 0))`, exact for convex `ξ̄`.
    Isotonic,
    /// Quadratic penalty on the dual-cone constraint, projected gradient on increments.
    Penalty,
    /// Lattice search with zoom over increments plus enumeration of block
    /// structures, `D = 1` and `|j| <= 4`.
    BruteForce,
}

#[derive(Clone, Debug)]
pub struct HValue<T> {
    pub value: T,
    /// Certified interval `[lower, upper]` when the penalty method is used.
    pub bracket: Option<(T, T)>,
    pub minimizer: ConePoint<T>,
    pub method: HMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// `H(κ) = inf { bold ξ̄(x) : x ∈ C^j, x - κ ∈ (C^j)* }`.
pub fn h_eval<T: Real>(kappa: &ConePoint<T>, reg: &Regularization<T>, method: HMethod) -> Result<HValue<T>> {
    if kappa.dim() != MatrixFunction::dim(reg) {
        return Err(Error::DimensionMismatch("κ and the model have different D".into()));
    }
    if !kappa.is_finite() {
        return Err(Error::InvalidInput("κ must be finite".into()));
    }
    let method = match method {
        HMethod::Auto if kappa.dim() == 1 && reg.model().is_convex() => HMethod::Isotonic,
        HMethod::Auto => HMethod::Penalty,
        m => m,
    };
    match method {
        HMethod::Isotonic => isotonic(kappa, reg),
        HMethod::BruteForce => brute_force(kappa, reg),
        _ => penalty(kappa, reg),
    }
}

fn isotonic<T: Real>(kappa: &ConePoint<T>, reg: &Regularization<T>) -> Result<HValue<T>> {
    let Some(k) = kappa.scalars() else {
        return Err(Error::Unsupported("isotonic evaluation needs D = 1".into()));
    };
    if !reg.model().is_convex() {
        return Err(Error::Precondition("isotonic evaluation needs a convex model".into()));
    }
    let j = kappa.partition();
    let x: Vec<T> = isotonic_regression(k, &j.widths()).into_iter().map(|v| v.max(T::zero())).collect();
    let minimizer = ConePoint::from_scalars(j.clone(), &x)?;
    let value = bold_xi(&minimizer, reg)?;
    Ok(HValue { value, bracket: None, minimizer, method: HMethod::Isotonic, iterations: 1, converged: true })
}

fn feasible_1d<T: Real>(x: &[T], k: &[T], w: &[T]) -> bool {
    let mut tail = T::zero();
    let mut scale = T::zero();
    for i in (0..x.len()).rev() {
        tail = tail + w[i] * (x[i] - k[i]);
        scale = scale + w[i] * (x[i].abs() + k[i].abs());
        if tail < -T::epsilon() * lit::<T>(16.0) * (T::one() + scale) {
            return false;
        }
    }
    true
}

fn brute_force<T: Real>(kappa: &ConePoint<T>, reg: &Regularization<T>) -> Result<HValue<T>> {
    let Some(k) = kappa.scalars() else {
        return Err(Error::Unsupported("brute force needs D = 1".into()));
    };
    let n = k.len();
    if n > 4 {
        return Err(Error::Unsupported("brute force is limited to |j| <= 4".into()));
    }
    let j = kappa.partition();
    let w = j.widths();
    let top = k.iter().fold(T::zero(), |m, &v| m.max(v));
    let objective = |d: &[T]| -> T {
        let x = cumulative(d, 1);
        if !feasible_1d(&x, k, &w) {
            return T::neg_infinity();
        }
        -x.iter().zip(&w).map(|(&v, &wi)| wi * reg.value_flat(&[v])).sum::<T>()
    };
    // the constant path at max(κ) is always feasible
    let mut best = vec![T::zero(); n];
    best[0] = top;
    let mut fbest = objective(&best);
    let per_axis = match n {
        1 => 4000,
        2 => 120,
        3 => 40,
        _ => 20,
    };
    let cap = top.max(T::epsilon());
    for d in lattice_increments(n, per_axis, cap) {
        let v = objective(&d);
        if v > fbest {
            fbest = v;
            best = d;
        }
    }
    let h = cap / T::from_usize_lossy(per_axis);
    let m = if n <= 2 { 12 } else { 4 };
    let (d, v, evals) = zoom_max(&objective, &best, h * lit(2.0), m, T::epsilon() * (T::one() + cap));
    // grid search creeps slowly along tilted tail-sum constraints, so also try
    // every contiguous block structure with blockwise means clipped at zero
    let (mut x, mut v) = (cumulative(&d, 1), v);
    for mask in 0..(1usize << (n - 1)) {
        let mut cand = vec![T::zero(); n];
        let mut start = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let mass: T = w[start..end].iter().copied().sum();
                let mean = (start..end).map(|i| w[i] * k[i]).sum::<T>() / mass;
                for c in &mut cand[start..end] {
                    *c = mean.max(T::zero());
                }
                start = end;
            }
        }
        if cand.windows(2).any(|p| p[1] < p[0]) {
            continue;
        }
        let val = objective(&differences(&cand, 1));
        if val > v {
            v = val;
            x = cand;
        }
    }
    let minimizer = ConePoint::from_scalars(j.clone(), &x)?;
    Ok(HValue { value: -v, bracket: None, minimizer, method: HMethod::BruteForce, iterations: evals, converged: true })
}

fn penalty<T: Real>(kappa: &ConePoint<T>, reg: &Regularization<T>) -> Result<HValue<T>> {
    let j = kappa.partition().clone();
    let dim = kappa.dim();
    let block = dim * dim;
    let n = j.len();
    let w = j.widths();
    let kap = kappa.flat().to_vec();
    // feasible start: constant path c I with c large enough for every tail sum
    let tails = kappa.tail_sums();
    let mut c = T::zero();
    for (i, t) in tails.iter().enumerate() {
        let mass = T::one() - j.left(i);
        c = c.max(t.max_eigenvalue() / mass);
    }
    let mut x: Vec<T> =
        (0..n).flat_map(|_| (0..block).map(move |e| if e % (dim + 1) == 0 { c } else { T::zero() })).collect();
    let mut iterations = 0;
    let mut converged = true;
    let mut lower = T::neg_infinity();
    let mut rho = lit::<T>(10.0);
    for _ in 0..6 {
        let f = |x: &[T]| -> (T, Vec<T>) {
            let mut val = T::zero();
            let mut g = vec![T::zero(); x.len()];
            let mut tmp = vec![T::zero(); block];
            for i in 0..n {
                let xi = &x[i * block..(i + 1) * block];
                val = val + w[i] * reg.value_flat(xi);
                reg.grad_flat(xi, &mut tmp);
                for e in 0..block {
                    g[i * block + e] = w[i] * tmp[e];
                }
            }
            // tail sums T_k and the penalty rho |T_k^-|^2
            let mut acc = vec![T::zero(); block];
            let mut negs = vec![vec![T::zero(); block]; n];
            for k in (0..n).rev() {
                for e in 0..block {
                    acc[e] = acc[e] + w[k] * (x[k * block + e] - kap[k * block + e]);
                }
                let neg = if dim == 1 {
                    vec![acc[0].min(T::zero())]
                } else {
                    crate::linalg::SymMatrix::from_rows(&acc.chunks(dim).map(|r| r.to_vec()).collect::<Vec<_>>())
                        .expect("symmetric")
                        .neg_part()
                        .as_slice()
                        .to_vec()
                };
                val = val + rho * neg.iter().map(|v| *v * *v).sum::<T>();
                negs[k] = neg;
            }
            // d/dx_i of sum_k rho |T_k^-|^2 = sum_{k <= i} 2 rho w_i T_k^-
            let mut run = vec![T::zero(); block];
            for i in 0..n {
                for e in 0..block {
                    run[e] = run[e] + negs[i][e];
                    g[i * block + e] = g[i * block + e] + lit::<T>(2.0) * rho * w[i] * run[e];
                }
            }
            (-val, g.into_iter().map(|v| -v).collect())
        };
        let r = maximize_on_cone(&j, dim, &x, f, &AscentOptions { max_iter: 4000, rel_tol: lit(1e-11), cap: None });
        iterations += r.iterations;
        converged &= r.converged;
        x = r.x;
        lower = -r.value;
        rho = rho * lit(10.0);
    }
    // restore feasibility by shifting the whole path up by a multiple of the identity
    let point = ConePoint::from_flat(j.clone(), dim, x.clone());
    let diff = point.sub(kappa)?;
    let mut shift = T::zero();
    for (i, t) in diff.tail_sums().iter().enumerate() {
        let mass = T::one() - j.left(i);
        shift = shift.max(-t.min_eigenvalue() / mass);
    }
    for i in 0..n {
        for d in 0..dim {
            x[i * block + d * (dim + 1)] = x[i * block + d * (dim + 1)] + shift;
        }
    }
    let minimizer = ConePoint::from_flat(j, dim, x);
    let upper = bold_xi(&minimizer, reg)?;
    let lower = if converged && reg.model().is_convex() { lower.min(upper) } else { T::neg_infinity() };
    Ok(HValue {
        value: upper,
        bracket: Some((lower, upper)),
        minimizer,
        method: HMethod::Penalty,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::Partition;
    use crate::nonlinearity::CovarianceModel;

    fn reg() -> Regularization<f64> {
        Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap()
    }

    #[test]
    fn on_cone_equals_bold_xi() {
        let x = ConePoint::from_scalars(Partition::uniform(3).unwrap(), &[0.1, 0.4, 1.5]).unwrap();
        let h = h_eval(&x, &reg(), HMethod::Auto).unwrap();
        assert!((h.value - bold_xi(&x, &reg()).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn isotonic_agrees_with_brute_force() {
        let j = Partition::from_breaks(vec![0.3, 1.0]).unwrap();
        for k in [[1.0, 0.2], [-0.5, 0.7], [0.9, -0.3], [1.8, 1.2]] {
            let kappa = ConePoint::from_scalars(j.clone(), &k).unwrap();
            let a = h_eval(&kappa, &reg(), HMethod::Isotonic).unwrap().value;
            let b = h_eval(&kappa, &reg(), HMethod::BruteForce).unwrap().value;
            assert!((a - b).abs() < 1e-6, "{k:?}: {a} vs {b}");
        }
    }

    #[test]
    fn penalty_brackets_the_isotonic_value() {
        let j = Partition::uniform(3).unwrap();
        let kappa = ConePoint::from_scalars(j, &[1.0, -0.4, 0.6]).unwrap();
        let exact = h_eval(&kappa, &reg(), HMethod::Isotonic).unwrap().value;
        let p = h_eval(&kappa, &reg(), HMethod::Penalty).unwrap();
        let (lo, hi) = p.bracket.unwrap();
        assert!(lo <= exact + 1e-9 && exact <= hi + 1e-9, "{lo} {exact} {hi}");
        assert!(hi - exact < 1e-4, "{hi} vs {exact}");
    }
}
