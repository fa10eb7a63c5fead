use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{lit, Real};

/// A function on `S^D_+` with value and gradient, the shape shared by `ξ` and `ξ̄`.
pub trait MatrixFunction<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// Value at a flat `D * D` symmetric matrix.
    fn value_flat(&self, a: &[T]) -> T;

    /// Frobenius gradient written into `out`.
    fn grad_flat(&self, a: &[T], out: &mut [T]);

    fn value(&self, a: &SymMatrix<T>) -> T {
        self.value_flat(a.as_slice())
    }

    fn grad(&self, a: &SymMatrix<T>) -> SymMatrix<T> {
        let mut out = vec![T::zero(); a.as_slice().len()];
        self.grad_flat(a.as_slice(), &mut out);
        SymMatrix::from_fn(a.dim(), |i, j| out[i * a.dim() + j])
    }
}

/// Scalar profile on `[0, ∞)` used by the `D = 1` conjugate.
pub trait ScalarProfile<T: Real>: Send + Sync {
    fn at(&self, s: T) -> T;
    /// Right derivative.
    fn slope(&self, s: T) -> T;
    /// `lim_{s→∞} slope(s)` when finite.
    fn max_slope(&self) -> Option<T>;
    /// Abscissa beyond which the profile is affine, if any.
    fn affine_from(&self) -> Option<T>;
    fn is_convex(&self) -> bool;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Form<T> {
    /// `D = 1`: `ξ(r) = sum_p c_p r^p`.
    Poly(Vec<(u32, T)>),
    /// `D > 1`: `ξ(a) = sum_p c_p sum_{ik} a_ik^p`.
    Hadamard(Vec<(u32, T)>),
}

/// Covariance function `ξ` with its convexity and properness flags.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel<T> {
    dim: usize,
    form: Form<T>,
    convex: bool,
    proper: bool,
}

/// JSON form, e.g. `{"D": 1, "poly": {"2": 1.0, "4": 0.5}, "convex": true, "proper": true}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ModelSpec<T> {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<BTreeMap<u32, T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hadamard: Option<BTreeMap<u32, T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proper: Option<bool>,
}

impl<T: Real> Serialize for CovarianceModel<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = |v: &Vec<(u32, T)>| Some(v.iter().copied().collect::<BTreeMap<_, _>>());
        let (poly, hadamard) = match &self.form {
            Form::Poly(v) => (coeffs(v), None),
            Form::Hadamard(v) => (None, coeffs(v)),
        };
        ModelSpec { dim: self.dim, poly, hadamard, convex: Some(self.convex), proper: Some(self.proper) }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for CovarianceModel<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = ModelSpec::<T>::deserialize(d)?;
        CovarianceModel::from_spec(spec).map_err(serde::de::Error::custom)
    }
}

fn check_coeffs<T: Real>(c: &BTreeMap<u32, T>) -> Result<Vec<(u32, T)>> {
    if c.is_empty() {
        return invalid("polynomial needs at least one coefficient");
    }
    if c.keys().any(|&p| p > 32) {
        return invalid("polynomial degree above 32 is not supported");
    }
    if c.values().any(|v| !v.is_finite()) {
        return invalid("coefficients must be finite");
    }
    Ok(c.iter().filter(|(_, v)| **v != T::zero()).map(|(&p, &v)| (p, v)).collect())
}

impl<T: Real> CovarianceModel<T> {
    /// `ξ(r) = sum_p c_p r^p` for `D = 1`.
    pub fn poly(coeffs: &[(u32, T)]) -> Result<Self> {
        Self::from_spec(ModelSpec {
            dim: 1,
            poly: Some(coeffs.iter().copied().collect()),
            hadamard: None,
            convex: None,
            proper: None,
        })
    }

    /// `ξ(r) = β r^2`.
    pub fn quadratic(beta: T) -> Result<Self> {
        Self::poly(&[(2, beta)])
    }

    pub fn hadamard(dim: usize, coeffs: &[(u32, T)]) -> Result<Self> {
        Self::from_spec(ModelSpec {
            dim,
            poly: None,
            hadamard: Some(coeffs.iter().copied().collect()),
            convex: None,
            proper: None,
        })
    }

    pub fn from_spec(spec: ModelSpec<T>) -> Result<Self> {
        if spec.dim == 0 {
            return invalid("D must be positive");
        }
        let form = match (spec.poly, spec.hadamard) {
            (Some(p), None) => {
                if spec.dim != 1 {
                    return invalid("\"poly\" models need D = 1; use \"hadamard\" for D > 1");
                }
                Form::Poly(check_coeffs(&p)?)
            }
            (None, Some(h)) => Form::Hadamard(check_coeffs(&h)?),
            _ => return invalid("exactly one of \"poly\" or \"hadamard\" must be given"),
        };
        let mut m = CovarianceModel { dim: spec.dim, form, convex: false, proper: false };
        let (convex, proper) = m.detect_flags();
        for (name, claimed, found) in [("convex", spec.convex, convex), ("proper", spec.proper, proper)] {
            if claimed == Some(true) && !found {
                return Err(Error::InvalidInput(format!("model is flagged {name} but the check fails")));
            }
        }
        m.convex = spec.convex.unwrap_or(convex);
        m.proper = spec.proper.unwrap_or(proper);
        Ok(m)
    }

    /// Sampled checks of convexity and properness on `[0, 8D]`.
    fn detect_flags(&self) -> (bool, bool) {
        let coeffs = self.coeffs();
        let nonneg = coeffs.iter().all(|(p, c)| *p == 0 || *c >= T::zero());
        match self.form {
            Form::Poly(_) => {
                let n = 400;
                let top = lit::<T>(8.0);
                let mut convex = true;
                let mut proper = true;
                for i in 0..=n {
                    let s = top * T::from_usize_lossy(i) / T::from_usize_lossy(n);
                    let d1 = self.poly_deriv(s, 1);
                    let d2 = self.poly_deriv(s, 2);
                    let slack = T::tol(d1.abs() + d2.abs());
                    if d2 < -slack {
                        convex = false;
                        proper = false;
                    }
                    if d1 < -slack {
                        proper = false;
                    }
                }
                (convex, proper)
            }
            // Schur products keep the gradient PSD and monotone for nonnegative coefficients.
            Form::Hadamard(_) => {
                let even_or_one = coeffs.iter().all(|(p, _)| *p <= 2 || p % 2 == 0);
                (nonneg && even_or_one, nonneg)
            }
        }
    }

    pub fn coeffs(&self) -> &[(u32, T)] {
        match &self.form {
            Form::Poly(v) | Form::Hadamard(v) => v,
        }
    }

    pub fn form(&self) -> &Form<T> {
        &self.form
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn is_proper(&self) -> bool {
        self.proper
    }

    /// `ξ(0)`.
    pub fn at_zero(&self) -> T {
        self.value_flat(&vec![T::zero(); self.dim * self.dim])
    }

    /// `k`-th derivative of the scalar polynomial.
    pub fn poly_deriv(&self, s: T, k: u32) -> T {
        self.coeffs()
            .iter()
            .filter(|(p, _)| *p >= k)
            .map(|&(p, c)| {
                let fall: u32 = (0..k).map(|i| p - i).product();
                c * T::from_u32(fall).unwrap() * s.powi((p - k) as i32)
            })
            .sum()
    }

    /// Whether `ξ(r) = c r^2` exactly.
    pub fn pure_quadratic(&self) -> Option<T> {
        match self.coeffs() {
            [(2, c)] if self.dim == 1 && *c > T::zero() => Some(*c),
            _ => None,
        }
    }
}

impl<T: Real> MatrixFunction<T> for CovarianceModel<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_flat(&self, a: &[T]) -> T {
        match &self.form {
            Form::Poly(_) => self.poly_deriv(a[0], 0),
            Form::Hadamard(v) => v.iter().map(|&(p, c)| c * a.iter().map(|x| x.powi(p as i32)).sum::<T>()).sum(),
        }
    }

    fn grad_flat(&self, a: &[T], out: &mut [T]) {
        match &self.form {
            Form::Poly(_) => out[0] = self.poly_deriv(a[0], 1),
            Form::Hadamard(v) => {
                for (o, &x) in out.iter_mut().zip(a) {
                    *o = v
                        .iter()
                        .filter(|(p, _)| *p >= 1)
                        .map(|&(p, c)| c * T::from_u32(p).unwrap() * x.powi(p as i32 - 1))
                        .sum();
                }
            }
        }
    }
}

impl<T: Real> ScalarProfile<T> for CovarianceModel<T> {
    fn at(&self, s: T) -> T {
        self.poly_deriv(s, 0)
    }

    fn slope(&self, s: T) -> T {
        self.poly_deriv(s, 1)
    }

    fn max_slope(&self) -> Option<T> {
        let top = self.coeffs().iter().map(|(p, _)| *p).max().unwrap_or(0);
        if top <= 1 {
            Some(self.poly_deriv(T::zero(), 1))
        } else {
            None
        }
    }

    fn affine_from(&self) -> Option<T> {
        None
    }

    fn is_convex(&self) -> bool {
        self.convex
    }
}

/// `bold ξ(x) = sum_k (t_k - t_{k-1}) ξ(x_k)`.
pub fn bold_xi<T: Real>(x: &crate::cone::ConePoint<T>, f: &dyn MatrixFunction<T>) -> Result<T> {
    if x.dim() != f.dim() {
        return Err(Error::DimensionMismatch(format!("point has D = {} but the model has D = {}", x.dim(), f.dim())));
    }
    let block = x.dim() * x.dim();
    let j = x.partition();
    Ok(x.flat().chunks(block).enumerate().map(|(k, c)| j.width(k) * f.value_flat(c)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_flags() {
        let m: CovarianceModel<f64> =
            serde_json::from_str(r#"{"D":1,"poly":{"2":1.0,"4":0.5},"convex":true,"proper":true}"#).unwrap();
        assert!(m.is_convex() && m.is_proper());
        assert_eq!(m.value(&SymMatrix::scalar(2.0)), 4.0 + 8.0);
        assert_eq!(m.grad(&SymMatrix::scalar(1.0)).get(0, 0), 2.0 + 2.0);
        let bad = serde_json::from_str::<CovarianceModel<f64>>(r#"{"D":1,"poly":{"2":-1.0},"convex":true}"#);
        assert!(bad.is_err());
        let unflagged: CovarianceModel<f64> = serde_json::from_str(r#"{"D":1,"poly":{"2":1.0,"3":-0.1}}"#).unwrap();
        assert!(!unflagged.is_proper());
        assert!(serde_json::from_str::<CovarianceModel<f64>>(r#"{"D":2,"poly":{"2":1.0}}"#).is_err());
        assert!(serde_json::from_str::<CovarianceModel<f64>>(r#"{"D":1,"poly":{"2":1.0},"extra":1}"#).is_err());
    }

    #[test]
    fn hadamard_gradient_matches_differences() {
        let m = CovarianceModel::<f64>::hadamard(2, &[(2, 1.0), (4, 0.25)]).unwrap();
        let a = SymMatrix::from_rows(&[vec![0.7, 0.2], vec![0.2, 0.4]]).unwrap();
        let g = m.grad(&a);
        let h = 1e-6;
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let mut e = SymMatrix::zeros(2);
            e.set(i, j, 1.0);
            let fd = (m.value(&(&a + &(e.clone() * h))) - m.value(&(&a - &(e.clone() * h)))) / (2.0 * h);
            assert!((fd - g.dot(&e)).abs() < 1e-6);
        }
    }
}
