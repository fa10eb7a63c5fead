use serde::{Deserialize, Serialize};

use super::partition::Partition;
use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Element of `H^j = (S^D)^{|j|}` with inner product `sum_k (t_k - t_{k-1}) tr(x_k y_k)`.
///
/// Coordinates are stored flat, `D * D` entries per cell.
#[derive(Clone, Debug)]
pub struct ConePoint<T> {
    partition: Partition<T>,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> PartialEq for ConePoint<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.partition == other.partition && self.data == other.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryClass {
    Interior,
    /// `x_k = x_{k-1}` at the reported zero-based cell, with `x_{-1} = 0`.
    Boundary {
        cell: usize,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct ConePointRepr<T> {
    partition: Partition<T>,
    coords: Vec<SymMatrix<T>>,
}

impl<T: Real> Serialize for ConePoint<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConePointRepr { partition: self.partition.clone(), coords: self.coords() }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for ConePoint<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ConePointRepr::<T>::deserialize(d)?;
        ConePoint::new(r.partition, r.coords).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> ConePoint<T> {
    pub fn new(partition: Partition<T>, coords: Vec<SymMatrix<T>>) -> Result<Self> {
        if coords.len() != partition.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for a partition with {} cells",
                coords.len(),
                partition.len()
            )));
        }
        let dim = coords[0].dim();
        if coords.iter().any(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch("coordinates have different matrix sizes".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("coordinates must be finite");
        }
        let data = coords.iter().flat_map(|c| c.as_slice().iter().copied()).collect();
        Ok(ConePoint { partition, dim, data })
    }

    pub fn from_scalars(partition: Partition<T>, values: &[T]) -> Result<Self> {
        Self::new(partition, values.iter().map(|&v| SymMatrix::scalar(v)).collect())
    }

    /// Flat layout, `D * D` entries per cell, assumed symmetric.
    pub fn from_flat(partition: Partition<T>, dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), partition.len() * dim * dim, "flat data has wrong length");
        ConePoint { partition, dim, data }
    }

    pub fn zeros(partition: Partition<T>, dim: usize) -> Self {
        let n = partition.len() * dim * dim;
        ConePoint { partition, dim, data: vec![T::zero(); n] }
    }

    pub fn constant(partition: Partition<T>, value: &SymMatrix<T>) -> Self {
        let coords = vec![value.clone(); partition.len()];
        Self::new(partition, coords).expect("constant point is well formed")
    }

    pub fn partition(&self) -> &Partition<T> {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    pub fn flat(&self) -> &[T] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<T> {
        self.data
    }

    /// The coordinates as plain numbers when `D = 1`.
    pub fn scalars(&self) -> Option<&[T]> {
        (self.dim == 1).then_some(&self.data[..])
    }

    pub fn coord(&self, k: usize) -> SymMatrix<T> {
        let s = self.dim * self.dim;
        SymMatrix::from_slice(self.dim, &self.data[k * s..(k + 1) * s])
    }

    pub fn coords(&self) -> Vec<SymMatrix<T>> {
        (0..self.len()).map(|k| self.coord(k)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.partition != other.partition || self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "points live on {} (D={}) and {} (D={})",
                self.partition.describe(),
                self.dim,
                other.partition.describe(),
                other.dim
            )));
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same_space(other)?;
        let s = self.dim * self.dim;
        Ok((0..self.len())
            .map(|k| {
                let a = &self.data[k * s..(k + 1) * s];
                let b = &other.data[k * s..(k + 1) * s];
                self.partition.width(k) * a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>()
            })
            .sum())
    }

    pub fn norm(&self) -> T {
        self.inner(self).expect("same space").sqrt()
    }

    fn cell_norms(&self) -> impl Iterator<Item = T> + '_ {
        self.data.chunks(self.dim * self.dim).map(|c| c.iter().map(|&v| v * v).sum::<T>().sqrt())
    }

    /// `sum_k w_k |x_k|` with the Frobenius norm on each cell.
    pub fn l1_norm(&self) -> T {
        self.cell_norms().enumerate().map(|(k, n)| self.partition.width(k) * n).sum()
    }

    pub fn linf_norm(&self) -> T {
        self.cell_norms().fold(T::zero(), |m, n| m.max(n))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, c: T) -> Self {
        ConePoint { partition: self.partition.clone(), dim: self.dim, data: self.data.iter().map(|&v| v * c).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        ConePoint {
            partition: self.partition.clone(),
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `x_k - x_{k-1}` with `x_{-1} = 0`.
    pub fn increments(&self) -> Vec<SymMatrix<T>> {
        let mut prev = SymMatrix::zeros(self.dim);
        (0..self.len())
            .map(|k| {
                let c = self.coord(k);
                let d = &c - &prev;
                prev = c;
                d
            })
            .collect()
    }

    /// `sum_{i >= k} w_i x_i` for each `k`.
    pub fn tail_sums(&self) -> Vec<SymMatrix<T>> {
        let mut acc = SymMatrix::zeros(self.dim);
        let mut out = vec![SymMatrix::zeros(self.dim); self.len()];
        for k in (0..self.len()).rev() {
            acc += &(self.coord(k) * self.partition.width(k));
            out[k] = acc.clone();
        }
        out
    }

    fn scale_for_tol(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Membership in `C^j`: `0 <= x_1 <= ... <= x_n` in the PSD order.
    pub fn is_in_cone(&self, tol: Option<T>) -> bool {
        let tol = tol.unwrap_or_else(|| T::tol(self.scale_for_tol()));
        if self.dim == 1 {
            let mut prev = T::zero();
            return self.data.iter().all(|&v| {
                let ok = v - prev >= -tol;
                prev = v;
                ok
            });
        }
        self.increments().iter().all(|d| d.is_psd(Some(tol)))
    }

    /// Membership in `(C^j)*`: every tail sum is PSD.
    pub fn is_in_dual(&self, tol: Option<T>) -> bool {
        let tol = tol.unwrap_or_else(|| T::tol(self.scale_for_tol()));
        self.tail_sums().iter().all(|s| s.is_psd(Some(tol)))
    }

    /// Interior/boundary classification of a point of `C^j`, `D = 1` only.
    pub fn boundary_class(&self, tol: Option<T>) -> Result<BoundaryClass> {
        let Some(x) = self.scalars() else {
            return Err(Error::Unsupported("boundary classification is only available for D = 1".into()));
        };
        let tol = tol.unwrap_or_else(|| T::tol(self.scale_for_tol()));
        if !self.is_in_cone(Some(tol)) {
            return Err(Error::Precondition("point is not in the cone".into()));
        }
        let mut prev = T::zero();
        for (k, &v) in x.iter().enumerate() {
            if (v - prev).abs() <= tol {
                return Ok(BoundaryClass::Boundary { cell: k });
            }
            prev = v;
        }
        Ok(BoundaryClass::Interior)
    }

    /// Nondecreasing rearrangement `x_♯`, `D = 1` on a uniform partition.
    pub fn rearrange_sharp(&self) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::Unsupported("rearrangement needs D = 1".into()));
        }
        if !self.partition.is_uniform() {
            return Err(Error::Precondition("rearrangement needs a uniform partition".into()));
        }
        let mut v = self.data.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(ConePoint { partition: self.partition.clone(), dim: 1, data: v })
    }

    pub fn cast<U: Real>(&self) -> ConePoint<U> {
        ConePoint {
            partition: self.partition.cast(),
            dim: self.dim,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize) -> Partition<f64> {
        Partition::uniform(n).unwrap()
    }

    #[test]
    fn cone_and_dual_examples() {
        let x = ConePoint::from_scalars(p(3), &[0.0, 1.0, 1.0]).unwrap();
        assert!(x.is_in_cone(None));
        assert_eq!(x.boundary_class(None).unwrap(), BoundaryClass::Boundary { cell: 0 });
        let y = ConePoint::from_scalars(p(3), &[0.1, 0.5, 1.0]).unwrap();
        assert_eq!(y.boundary_class(None).unwrap(), BoundaryClass::Interior);
        let z = ConePoint::from_scalars(p(3), &[1.0, -0.2, 0.5]).unwrap();
        assert!(!z.is_in_cone(None));
        assert!(z.is_in_dual(None));
        let w = ConePoint::from_scalars(p(2), &[1.0, -0.1]).unwrap();
        assert!(!w.is_in_dual(None));
    }

    #[test]
    fn matrix_cone_membership() {
        let a = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = SymMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let x = ConePoint::new(p(2), vec![a.clone(), b.clone()]).unwrap();
        assert!(x.is_in_cone(None));
        let y = ConePoint::new(p(2), vec![a, c]).unwrap();
        assert!(!y.is_in_cone(None));
        assert!(y.is_in_dual(None));
        assert!(y.boundary_class(None).is_err());
    }

    #[test]
    fn norms_and_inner() {
        let x = ConePoint::from_scalars(p(2), &[1.0, -3.0]).unwrap();
        assert_eq!(x.l1_norm(), 2.0);
        assert_eq!(x.linf_norm(), 3.0);
        assert!((x.norm() - 5.0f64.sqrt()).abs() < 1e-15);
        let y = ConePoint::from_scalars(p(3), &[1.0, 1.0, 1.0]).unwrap();
        assert!(x.inner(&y).is_err());
    }

    #[test]
    fn rearrangement() {
        let x = ConePoint::from_scalars(p(3), &[2.0, 0.0, 1.0]).unwrap();
        assert_eq!(x.rearrange_sharp().unwrap().scalars().unwrap(), &[0.0, 1.0, 2.0]);
        let q = ConePoint::from_scalars(Partition::from_breaks(vec![0.3, 1.0]).unwrap(), &[1.0, 0.0]).unwrap();
        assert!(q.rearrange_sharp().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let s = r#"{"partition":{"uniform":2},"coords":[[[0.5]],[[1.0]]]}"#;
        let x: ConePoint<f64> = serde_json::from_str(s).unwrap();
        assert_eq!(x.scalars().unwrap(), &[0.5, 1.0]);
        assert_eq!(serde_json::to_string(&x).unwrap(), s);
        let short: ConePoint<f64> = serde_json::from_str(r#"{"partition":{"uniform":2},"coords":[0.5,1]}"#).unwrap();
        assert_eq!(short, x);
        assert!(serde_json::from_str::<ConePoint<f64>>(r#"{"partition":{"uniform":3},"coords":[1]}"#).is_err());
    }
}
