use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{CovarianceModel, MatrixFunction, ScalarProfile};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{lit, Real};

/// `ξ̄`: agrees with `ξ` on the unit trace ball and grows linearly with slope `2L`
/// in the trace beyond it.
///
/// `ξ̄(a) = max(ξ(a), ξ(0) + 2L(tr a - D))` for `tr a <= 2D`, and
/// `ξ(0) + 2L(tr a - D)` otherwise, where `L = sup |∇ξ|_∞` over `tr a <= 2D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Regularization<T> {
    base: CovarianceModel<T>,
    lip: T,
    radius: T,
    /// `D = 1`: the point where the affine branch takes over.
    seam: Option<T>,
    xi0: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct RegRepr<T> {
    model: CovarianceModel<T>,
    #[serde(rename = "L")]
    lip: T,
    seam_radius: T,
}

impl<T: Real> Serialize for Regularization<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RegRepr { model: self.base.clone(), lip: self.lip, seam_radius: self.radius }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Regularization<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RegRepr::<T>::deserialize(d)?;
        let dim = MatrixFunction::dim(&r.model);
        if (r.seam_radius - T::from_usize_lossy(2 * dim)).abs() > T::tol(r.seam_radius) {
            return Err(serde::de::Error::custom("seam_radius must equal 2D"));
        }
        Regularization::with_lip(r.model, r.lip).map_err(serde::de::Error::custom)
    }
}

/// Number of random trace-ball samples used to estimate `L` when `D > 1`.
const LIP_SAMPLES: usize = 10_000;

fn sampled_lip<T: Real>(model: &CovarianceModel<T>) -> T {
    let d = MatrixFunction::dim(model);
    let r = T::from_usize_lossy(2 * d);
    let mut best = T::zero();
    let mut consider = |a: &SymMatrix<T>| {
        let g = model.grad(a);
        best = best.max(g.spectral_norm());
    };
    for i in 0..d {
        let mut e = SymMatrix::zeros(d);
        e.set(i, i, r);
        consider(&e);
    }
    consider(&SymMatrix::scaled_identity(d, lit(2.0)));
    consider(&SymMatrix::from_fn(d, |_, _| lit(2.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    for _ in 0..LIP_SAMPLES {
        let g: Vec<T> = (0..d * d).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let gm = SymMatrix::from_fn(d, |i, j| (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum());
        let tr = gm.trace();
        if tr <= T::zero() {
            continue;
        }
        let scale = r * T::lit(rng.gen_range(0.0..=1.0)) / tr;
        consider(&(gm * scale));
    }
    best
}

impl<T: Real> Regularization<T> {
    /// Builds `ξ̄` from a proper model.
    ///
    /// For `D = 1` the derivative is nondecreasing, so `L = ξ'(2)` exactly. For
    /// `D > 1`, `L` is the sampled maximum over the trace ball rounded up by 1%.
    pub fn new(model: CovarianceModel<T>) -> Result<Self> {
        if !model.is_proper() {
            return Err(Error::Precondition("regularization needs a proper model".into()));
        }
        let lip =
            if MatrixFunction::dim(&model) == 1 { model.slope(lit(2.0)) } else { sampled_lip(&model) * lit(1.01) };
        Self::with_lip(model, lip)
    }

    /// Uses a caller-supplied `L`, which must not be below the true supremum.
    pub fn with_lip(model: CovarianceModel<T>, lip: T) -> Result<Self> {
        if !lip.is_finite() || lip < T::zero() {
            return Err(Error::InvalidInput("L must be finite and nonnegative".into()));
        }
        let dim = MatrixFunction::dim(&model);
        let radius = T::from_usize_lossy(2 * dim);
        let xi0 = model.at_zero();
        let mut reg = Regularization { base: model, lip, radius, seam: None, xi0 };
        if dim == 1 {
            reg.seam = Some(reg.find_seam());
        }
        Ok(reg)
    }

    fn affine(&self, tr: T, dim: usize) -> T {
        self.xi0 + lit::<T>(2.0) * self.lip * (tr - T::from_usize_lossy(dim))
    }

    /// Root of `ξ(0) + 2L(s - 1) - ξ(s)` on `[0, 2]`.
    fn find_seam(&self) -> T {
        let g = |s: T| self.affine(s, 1) - self.base.at(s);
        let (mut lo, mut hi) = (T::zero(), self.radius);
        if g(hi) <= T::zero() {
            return hi;
        }
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if g(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        hi
    }

    pub fn model(&self) -> &CovarianceModel<T> {
        &self.base
    }

    /// `L`.
    pub fn lip(&self) -> T {
        self.lip
    }

    /// Trace radius `2D` of the region where the max formula applies.
    pub fn seam_radius(&self) -> T {
        self.radius
    }

    /// `D = 1` crossing point of the two branches.
    pub fn seam(&self) -> Option<T> {
        self.seam
    }

    /// Global Lipschitz bound `2L sqrt(D) + L sqrt(D)` in the Frobenius norm.
    pub fn lipschitz_bound(&self) -> T {
        let sd = T::from_usize_lossy(MatrixFunction::dim(&self.base)).sqrt();
        lit::<T>(3.0) * self.lip * sd
    }
}

impl<T: Real> MatrixFunction<T> for Regularization<T> {
    fn dim(&self) -> usize {
        MatrixFunction::dim(&self.base)
    }

    fn value_flat(&self, a: &[T]) -> T {
        let d = MatrixFunction::dim(self);
        let tr: T = (0..d).map(|i| a[i * d + i]).sum();
        let aff = self.affine(tr, d);
        if tr > self.radius {
            aff
        } else {
            aff.max(self.base.value_flat(a))
        }
    }

    fn grad_flat(&self, a: &[T], out: &mut [T]) {
        let d = MatrixFunction::dim(self);
        let tr: T = (0..d).map(|i| a[i * d + i]).sum();
        if tr <= self.radius && self.base.value_flat(a) >= self.affine(tr, d) {
            self.base.grad_flat(a, out);
        } else {
            for (k, o) in out.iter_mut().enumerate() {
                *o = if k % (d + 1) == 0 { lit::<T>(2.0) * self.lip } else { T::zero() };
            }
        }
    }
}

impl<T: Real> ScalarProfile<T> for Regularization<T> {
    fn at(&self, s: T) -> T {
        self.value_flat(&[s])
    }

    fn slope(&self, s: T) -> T {
        match self.seam {
            Some(seam) if s < seam => self.base.slope(s),
            _ => lit::<T>(2.0) * self.lip,
        }
    }

    fn max_slope(&self) -> Option<T> {
        Some(lit::<T>(2.0) * self.lip)
    }

    fn affine_from(&self) -> Option<T> {
        self.seam
    }

    fn is_convex(&self) -> bool {
        self.base.is_convex()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_closed_form() {
        let reg = Regularization::new(CovarianceModel::<f64>::quadratic(1.0).unwrap()).unwrap();
        assert_eq!(reg.lip(), 4.0);
        for i in 0..=400 {
            let a = i as f64 * 0.01;
            let expect = if a <= 2.0 { (a * a).max(8.0 * (a - 1.0)) } else { 8.0 * (a - 1.0) };
            assert_eq!(reg.at(a), expect);
        }
        let seam = reg.seam().unwrap();
        assert!((seam - (4.0 - 2.0 * 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn improper_model_rejected() {
        let m = CovarianceModel::<f64>::poly(&[(2, 1.0), (3, -1.0)]).unwrap();
        assert!(Regularization::new(m).is_err());
    }

    #[test]
    fn matrix_lip_bounds_gradient() {
        let m = CovarianceModel::<f64>::hadamard(2, &[(2, 1.0)]).unwrap();
        let reg = Regularization::new(m).unwrap();
        // sup of |2a|_op on tr a <= 4 is 8
        assert!(reg.lip() >= 8.0 && reg.lip() <= 8.0 * 1.0101);
    }

    #[test]
    fn json_carries_l_and_radius() {
        let reg = Regularization::new(CovarianceModel::<f64>::quadratic(0.5).unwrap()).unwrap();
        let s = serde_json::to_string(&reg).unwrap();
        assert!(s.contains("\"L\":2.0") && s.contains("\"seam_radius\":2.0"));
        let back: Regularization<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, reg);
    }
}
