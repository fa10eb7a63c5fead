use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::scalar::{lit, Real};

/// Dense symmetric `D x D` matrix stored row-major in full.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    /// `vectors[k]` is the eigenvector for `values[k]`.
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        SymMatrix { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn scalar(x: T) -> Self {
        SymMatrix { dim: 1, data: vec![x] }
    }

    pub fn scaled_identity(dim: usize, x: T) -> Self {
        Self::identity(dim) * x
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Rows must form a square matrix that is symmetric up to `1e-12` relative slack.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return invalid("empty matrix");
        }
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("matrix rows must have equal length matching the row count");
        }
        let mut scale = T::zero();
        for r in rows {
            for &v in r {
                if !v.is_finite() {
                    return invalid("matrix entries must be finite");
                }
                scale = scale.max(v.abs());
            }
        }
        let slack = lit::<T>(1e-12).max(T::epsilon() * lit(16.0)) * (T::one() + scale);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (rows[i][j] - rows[j][i]).abs() > slack {
                    return invalid(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| (rows[i][j] + rows[j][i]) * lit(0.5)))
    }

    pub(crate) fn from_slice(dim: usize, data: &[T]) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        SymMatrix { dim, data: data.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// Frobenius inner product `tr(a b)`.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim, "matrix dimensions differ");
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn hadamard_pow(&self, p: i32) -> Self {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|v| v.powi(p)).collect() }
    }

    pub fn matmul(&self, other: &Self) -> Vec<T> {
        let d = self.dim;
        let mut out = vec![T::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                for j in 0..d {
                    out[i * d + j] = out[i * d + j] + a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Cyclic Jacobi rotations; adequate for the small `D` used here.
    pub fn eigen(&self) -> Eigen<T> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut v = vec![T::zero(); n * n];
        for i in 0..n {
            v[i * n + i] = T::one();
        }
        let scale = self.max_abs();
        if n > 1 && scale > T::zero() {
            for _sweep in 0..64 {
                let mut off = T::zero();
                for p in 0..n {
                    for q in (p + 1)..n {
                        off = off + a[p * n + q] * a[p * n + q];
                    }
                }
                if off.sqrt() <= T::epsilon() * scale {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = a[p * n + q];
                        if apq == T::zero() {
                            continue;
                        }
                        let app = a[p * n + p];
                        let aqq = a[q * n + q];
                        let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                        let c = T::one() / (t * t + T::one()).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a[k * n + p];
                            let akq = a[k * n + q];
                            a[k * n + p] = c * akp - s * akq;
                            a[k * n + q] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let apk = a[p * n + k];
                            let aqk = a[q * n + k];
                            a[p * n + k] = c * apk - s * aqk;
                            a[q * n + k] = s * apk + c * aqk;
                        }
                        for k in 0..n {
                            let vkp = v[k * n + p];
                            let vkq = v[k * n + q];
                            v[k * n + p] = c * vkp - s * vkq;
                            v[k * n + q] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap_or(std::cmp::Ordering::Equal));
        Eigen {
            values: order.iter().map(|&i| a[i * n + i]).collect(),
            vectors: order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        if self.dim == 1 {
            return vec![self.data[0]];
        }
        self.eigen().values
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        *self.eigenvalues().last().unwrap()
    }

    /// Operator norm `max |lambda|`.
    pub fn spectral_norm(&self) -> T {
        self.eigenvalues().iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// PSD test with slack `tol`, defaulting to `1e-9 (1 + |a|)`.
    pub fn is_psd(&self, tol: Option<T>) -> bool {
        let tol = tol.unwrap_or_else(|| T::tol(self.frobenius()));
        self.min_eigenvalue() >= -tol
    }

    fn rebuild(&self, f: impl Fn(T) -> T) -> Self {
        if self.dim == 1 {
            return Self::scalar(f(self.data[0]));
        }
        let e = self.eigen();
        let n = self.dim;
        Self::from_fn(n, |i, j| e.values.iter().zip(&e.vectors).map(|(&l, v)| f(l) * v[i] * v[j]).sum())
    }

    /// Nearest PSD matrix in Frobenius norm.
    pub fn psd_part(&self) -> Self {
        self.rebuild(|l| l.max(T::zero()))
    }

    /// `a - psd_part(a)`, the negative semidefinite remainder.
    pub fn neg_part(&self) -> Self {
        self.rebuild(|l| l.min(T::zero()))
    }

    pub fn cast<U: Real>(&self) -> SymMatrix<U> {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect() }
    }
}

impl<T: Real> Add for SymMatrix<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += &rhs;
        self
    }
}

impl<T: Real> Add<&SymMatrix<T>> for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn add(self, rhs: &SymMatrix<T>) -> SymMatrix<T> {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<T: Real> Sub for SymMatrix<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= &rhs;
        self
    }
}

impl<T: Real> Sub<&SymMatrix<T>> for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn sub(self, rhs: &SymMatrix<T>) -> SymMatrix<T> {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl<T: Real> AddAssign<&SymMatrix<T>> for SymMatrix<T> {
    fn add_assign(&mut self, rhs: &SymMatrix<T>) {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a + b;
        }
    }
}

impl<T: Real> SubAssign<&SymMatrix<T>> for SymMatrix<T> {
    fn sub_assign(&mut self, rhs: &SymMatrix<T>) {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions differ");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a - b;
        }
    }
}

impl<T: Real> Mul<T> for SymMatrix<T> {
    type Output = Self;
    fn mul(mut self, rhs: T) -> Self {
        for a in &mut self.data {
            *a = *a * rhs;
        }
        self
    }
}

impl<T: Real> Neg for SymMatrix<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self * (-T::one())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixRepr<T> {
    Scalar(T),
    Rows(Vec<Vec<T>>),
}

impl<T: Real> Serialize for SymMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for SymMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match MatrixRepr::<T>::deserialize(d)? {
            MatrixRepr::Scalar(x) => Ok(SymMatrix::scalar(x)),
            MatrixRepr::Rows(rows) => SymMatrix::from_rows(&rows).map_err(D::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two_eigs(a: f64, b: f64, c: f64) -> (f64, f64) {
        // roots of the characteristic polynomial
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (m - r, m + r)
    }

    #[test]
    fn jacobi_matches_characteristic_roots() {
        for &(a, b, c) in &[(1.0, 0.5, 2.0), (0.0, 1.0, 0.0), (3.0, -2.0, -1.0), (1e-8, 0.0, 5.0)] {
            let m = SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
            let ev = m.eigenvalues();
            let (lo, hi) = two_by_two_eigs(a, b, c);
            assert!((ev[0] - lo).abs() < 1e-12 && (ev[1] - hi).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn eigenvectors_reconstruct() {
        let m = SymMatrix::from_rows(&[vec![4.0, 1.0, -2.0], vec![1.0, 2.0, 0.5], vec![-2.0, 0.5, 3.0]]).unwrap();
        let e = m.eigen();
        let back = SymMatrix::from_fn(3, |i, j| e.values.iter().zip(&e.vectors).map(|(l, v)| l * v[i] * v[j]).sum());
        assert!((&back - &m).max_abs() < 1e-12);
        assert!((e.values.iter().sum::<f64>() - m.trace()).abs() < 1e-12);
    }

    #[test]
    fn psd_examples() {
        let a = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(a.is_psd(None));
        assert!(!b.is_psd(None));
        assert!(b.psd_part().is_psd(None));
        assert!((&(b.psd_part() + b.neg_part()) - &b).max_abs() < 1e-14);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(SymMatrix::<f64>::from_rows(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn json_forms() {
        let s: SymMatrix<f64> = serde_json::from_str("2.5").unwrap();
        assert_eq!(s, SymMatrix::scalar(2.5));
        let m: SymMatrix<f64> = serde_json::from_str("[[1,2],[2,3]]").unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1.0,2.0],[2.0,3.0]]");
    }
}
