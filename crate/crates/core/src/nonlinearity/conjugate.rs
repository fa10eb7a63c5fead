use super::model::{CovarianceModel, ScalarProfile};
use super::regularize::Regularization;
use crate::optim::scan_max_1d;
use crate::scalar::{lit, Real};

/// `φ*(r) = sup_{s >= 0} (r s - φ(s))` for a scalar profile `φ` (`D = 1`).
#[derive(Clone, Debug)]
pub struct ConjugateModel<T> {
    profile: Profile<T>,
}

#[derive(Clone, Debug)]
enum Profile<T> {
    Base(CovarianceModel<T>),
    Reg(Regularization<T>),
}

impl<T: Real> Profile<T> {
    fn get(&self) -> &dyn ScalarProfile<T> {
        match self {
            Profile::Base(m) => m,
            Profile::Reg(r) => r,
        }
    }
}

/// Value of the conjugate with the maximizing `s`, which is its derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugatePoint<T> {
    pub value: T,
    pub argmax: T,
}

impl<T: Real> ConjugateModel<T> {
    pub fn of_model(m: CovarianceModel<T>) -> Self {
        assert_eq!(crate::nonlinearity::MatrixFunction::dim(&m), 1, "conjugate models need D = 1");
        ConjugateModel { profile: Profile::Base(m) }
    }

    pub fn of_regularization(r: Regularization<T>) -> Self {
        assert_eq!(crate::nonlinearity::MatrixFunction::dim(&r), 1, "conjugate models need D = 1");
        ConjugateModel { profile: Profile::Reg(r) }
    }

    pub fn eval(&self, r: T) -> T {
        self.eval_with_argmax(r).value
    }

    /// `(φ*)'(r)`, the maximizing `s`.
    pub fn derivative(&self, r: T) -> T {
        self.eval_with_argmax(r).argmax
    }

    /// Right derivative of the underlying profile `φ`.
    pub fn primal_slope(&self, s: T) -> T {
        self.profile.get().slope(s)
    }

    /// Largest `r` with `φ*(r) < ∞`, if bounded.
    pub fn domain_cap(&self) -> Option<T> {
        self.profile.get().max_slope()
    }

    pub fn eval_with_argmax(&self, r: T) -> ConjugatePoint<T> {
        let p = self.profile.get();
        if let Profile::Base(m) = &self.profile {
            if let Some(c) = m.pure_quadratic() {
                let rp = r.max(T::zero());
                return ConjugatePoint { value: rp * rp / (lit::<T>(4.0) * c), argmax: rp / (lit::<T>(2.0) * c) };
            }
        }
        if !p.is_convex() {
            return self.scan(r);
        }
        if r <= p.slope(T::zero()) {
            return ConjugatePoint { value: -p.at(T::zero()), argmax: T::zero() };
        }
        let hi = match (p.max_slope(), p.affine_from()) {
            (Some(cap), _) if r > cap => return ConjugatePoint { value: T::infinity(), argmax: T::infinity() },
            (Some(cap), Some(s0)) if r == cap => {
                return ConjugatePoint { value: r * s0 - p.at(s0), argmax: s0 };
            }
            (_, Some(s0)) => s0,
            _ => {
                let mut hi = T::one();
                let mut n = 0;
                while p.slope(hi) < r {
                    hi = hi * lit(2.0);
                    n += 1;
                    if n > 2000 || !hi.is_finite() {
                        return ConjugatePoint { value: T::infinity(), argmax: T::infinity() };
                    }
                }
                hi
            }
        };
        // first s with slope(s) >= r
        let mut lo = T::zero();
        let mut hi = hi;
        if p.slope(hi) < r {
            // affine tail reached before the slope does; only for r at the cap
            return ConjugatePoint { value: r * hi - p.at(hi), argmax: hi };
        }
        for _ in 0..300 {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if p.slope(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let at = |s: T| r * s - p.at(s);
        let (s, v) = if at(lo) > at(hi) { (lo, at(lo)) } else { (hi, at(hi)) };
        ConjugatePoint { value: v, argmax: s }
    }

    fn scan(&self, r: T) -> ConjugatePoint<T> {
        let p = self.profile.get();
        let top = p.affine_from().map(|s| s * lit(2.0)).unwrap_or(lit(16.0));
        let f = |s: T| r * s - p.at(s);
        let (s, v) = scan_max_1d(&f, T::zero(), top, 4000, &[]);
        ConjugatePoint { value: v, argmax: s }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_conjugate() {
        let c = ConjugateModel::of_model(CovarianceModel::<f64>::quadratic(1.0).unwrap());
        assert_eq!(c.eval(3.0), 2.25);
        assert_eq!(c.eval(-1.0), 0.0);
    }

    #[test]
    fn regularized_conjugate_matches_brute_force() {
        let reg = Regularization::new(CovarianceModel::<f64>::poly(&[(2, 1.0), (4, 0.5)]).unwrap()).unwrap();
        let c = ConjugateModel::of_regularization(reg.clone());
        let cap = c.domain_cap().unwrap();
        for i in 0..60 {
            let r = -1.0 + i as f64 * (cap + 1.0) / 60.0;
            let brute = (0..=4_000_000).map(|k| k as f64 * 1e-6).map(|s| r * s - reg.at(s)).fold(f64::MIN, f64::max);
            assert!((c.eval(r) - brute).abs() < 1e-5, "r={r}: {} vs {brute}", c.eval(r));
        }
        assert!(c.eval(cap * 1.001).is_infinite());
    }
}
