use serde::{Deserialize, Serialize};

use super::partition::Partition;
use super::path::StepPath;
use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// `ϱ = sum_{k=0}^{K} (ζ_{k+1} - ζ_k) δ_{q_k}` with PSD atoms in nondecreasing PSD order.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure<T> {
    atoms: Vec<SymMatrix<T>>,
    levels: Vec<T>,
}

/// JSON form: `levels` lists `ζ_0 = 0, ..., ζ_{K+1} = 1`, one more entry than `atoms`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct MeasureRepr<T> {
    atoms: Vec<SymMatrix<T>>,
    levels: Vec<T>,
}

impl<T: Real> PartialEq for DiscreteMeasure<T> {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.levels == other.levels
    }
}

impl<T: Real> Serialize for DiscreteMeasure<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr { atoms: self.atoms.clone(), levels: self.levels.clone() }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for DiscreteMeasure<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MeasureRepr::<T>::deserialize(d)?;
        DiscreteMeasure::new(r.atoms, r.levels).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(atoms: Vec<SymMatrix<T>>, levels: Vec<T>) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("measure needs at least one atom");
        }
        if levels.len() != atoms.len() + 1 {
            return invalid("levels must have one more entry than atoms");
        }
        if levels[0] != T::zero() || (*levels.last().unwrap() - T::one()).abs() > T::epsilon() * T::lit(8.0) {
            return invalid("levels must start at 0 and end at 1");
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("levels must be strictly increasing");
        }
        let dim = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch("atoms have different matrix sizes".into()));
        }
        if !atoms[0].is_psd(None) {
            return invalid("atoms must be positive semidefinite");
        }
        for w in atoms.windows(2) {
            if !(&w[1] - &w[0]).is_psd(None) {
                return invalid("atoms must be nondecreasing in the PSD order");
            }
        }
        Ok(DiscreteMeasure { atoms, levels })
    }

    pub fn from_scalars(atoms: &[T], levels: Vec<T>) -> Result<Self> {
        Self::new(atoms.iter().map(|&a| SymMatrix::scalar(a)).collect(), levels)
    }

    /// `δ_q`.
    pub fn dirac(q: SymMatrix<T>) -> Result<Self> {
        Self::new(vec![q], vec![T::zero(), T::one()])
    }

    pub fn atoms(&self) -> &[SymMatrix<T>] {
        &self.atoms
    }

    /// `ζ_0, ..., ζ_{K+1}`.
    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn weights(&self) -> Vec<T> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }
}

/// The quantile path: value `q_k` on `[ζ_k, ζ_{k+1})`.
pub fn measure_to_quantile<T: Real>(m: &DiscreteMeasure<T>) -> StepPath<T> {
    let partition = Partition::from_breaks(m.levels[1..].to_vec()).expect("levels are a valid partition");
    StepPath::new(partition, m.atoms.clone()).expect("atoms match levels")
}

/// Inverse of [`measure_to_quantile`]; equal adjacent steps are merged.
pub fn quantile_to_measure<T: Real>(path: &StepPath<T>) -> Result<DiscreteMeasure<T>> {
    if !path.is_in_cone() {
        return Err(Error::Precondition("quantile path must be nondecreasing and PSD".into()));
    }
    let values = path.values();
    let j = path.partition();
    let mut atoms: Vec<SymMatrix<T>> = Vec::new();
    let mut levels = vec![T::zero()];
    for (k, v) in values.into_iter().enumerate() {
        match atoms.last() {
            Some(last) if *last == v => *levels.last_mut().unwrap() = j.right(k),
            _ => {
                atoms.push(v);
                levels.push(j.right(k));
            }
        }
    }
    DiscreteMeasure::new(atoms, levels)
}

/// `d_p(ϱ, ϱ')` as the `L^p` distance of the quantile paths.
pub fn wasserstein_p<T: Real>(a: &DiscreteMeasure<T>, b: &DiscreteMeasure<T>, p: T) -> Result<T> {
    measure_to_quantile(a).lp_distance(&measure_to_quantile(b), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_merge() {
        let m = DiscreteMeasure::from_scalars(&[0.0, 0.3], vec![0.0, 0.5, 1.0]).unwrap();
        let q = measure_to_quantile(&m);
        assert_eq!(quantile_to_measure(&q).unwrap(), m);
        let flat = StepPath::from_scalars(Partition::uniform(4).unwrap(), &[0.0, 0.0, 0.3, 0.3]).unwrap();
        assert_eq!(quantile_to_measure(&flat).unwrap(), m);
    }

    #[test]
    fn validation() {
        assert!(DiscreteMeasure::from_scalars(&[0.3, 0.1], vec![0.0, 0.5, 1.0]).is_err());
        assert!(DiscreteMeasure::from_scalars(&[-0.1], vec![0.0, 1.0]).is_err());
        assert!(DiscreteMeasure::from_scalars(&[0.1], vec![0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn wasserstein_of_diracs() {
        let a = DiscreteMeasure::<f64>::from_scalars(&[0.2], vec![0.0, 1.0]).unwrap();
        let b = DiscreteMeasure::from_scalars(&[0.7], vec![0.0, 1.0]).unwrap();
        assert!((wasserstein_p(&a, &b, 2.0).unwrap() - 0.5).abs() < 1e-15);
    }
}
