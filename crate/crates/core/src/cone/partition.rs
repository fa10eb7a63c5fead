use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Real};

/// Finite partition `0 = t_0 < t_1 < ... < t_n = 1` of the unit interval.
///
/// Only `t_1..t_n` are stored; `t_0 = 0` is implicit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PartitionSpec<T>", into = "PartitionSpec<T>")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Partition<T> {
    breaks: Vec<T>,
    kind: Kind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Uniform(usize),
    Dyadic(u32),
    Explicit,
}

/// JSON form: `{"uniform": n}`, `{"dyadic": k}` or `{"breaks": [t_1, ..., 1]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum PartitionSpec<T> {
    Uniform(usize),
    Dyadic(u32),
    Breaks(Vec<T>),
}

impl<T: Real> TryFrom<PartitionSpec<T>> for Partition<T> {
    type Error = Error;
    fn try_from(spec: PartitionSpec<T>) -> Result<Self> {
        match spec {
            PartitionSpec::Uniform(n) => Partition::uniform(n),
            PartitionSpec::Dyadic(k) => Partition::dyadic(k),
            PartitionSpec::Breaks(b) => Partition::from_breaks(b),
        }
    }
}

impl<T: Real> From<Partition<T>> for PartitionSpec<T> {
    fn from(p: Partition<T>) -> Self {
        match p.kind {
            Kind::Uniform(n) => PartitionSpec::Uniform(n),
            Kind::Dyadic(k) => PartitionSpec::Dyadic(k),
            Kind::Explicit => PartitionSpec::Breaks(p.breaks),
        }
    }
}

impl<T: Real> PartialEq for Partition<T> {
    fn eq(&self, other: &Self) -> bool {
        self.breaks.len() == other.breaks.len()
            && self.breaks.iter().zip(&other.breaks).all(|(&a, &b)| same_point(a, b))
    }
}

fn same_point<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::epsilon() * lit(8.0)
}

impl<T: Real> Partition<T> {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("uniform partition needs at least one cell");
        }
        let nn = T::from_usize_lossy(n);
        let mut breaks: Vec<T> = (1..=n).map(|k| T::from_usize_lossy(k) / nn).collect();
        breaks[n - 1] = T::one();
        Ok(Partition { breaks, kind: Kind::Uniform(n) })
    }

    pub fn dyadic(k: u32) -> Result<Self> {
        if k > 24 {
            return invalid("dyadic level above 24 is not supported");
        }
        let mut p = Self::uniform(1usize << k)?;
        p.kind = Kind::Dyadic(k);
        Ok(p)
    }

    /// Strictly increasing breakpoints in `(0, 1]` ending at 1.
    pub fn from_breaks(breaks: Vec<T>) -> Result<Self> {
        if breaks.is_empty() {
            return invalid("partition needs at least one breakpoint");
        }
        if breaks.iter().any(|b| !b.is_finite()) {
            return invalid("breakpoints must be finite");
        }
        if breaks[0] <= T::zero() {
            return invalid("breakpoints must be positive");
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if !same_point(*breaks.last().unwrap(), T::one()) {
            return invalid("last breakpoint must equal 1");
        }
        let mut breaks = breaks;
        *breaks.last_mut().unwrap() = T::one();
        Ok(Partition { breaks, kind: Kind::Explicit })
    }

    /// Number of cells `|j|`.
    pub fn len(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    /// `t_{k-1}` for the zero-based cell `k`.
    pub fn left(&self, k: usize) -> T {
        if k == 0 {
            T::zero()
        } else {
            self.breaks[k - 1]
        }
    }

    pub fn right(&self, k: usize) -> T {
        self.breaks[k]
    }

    pub fn width(&self, k: usize) -> T {
        self.right(k) - self.left(k)
    }

    pub fn widths(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.width(k)).collect()
    }

    pub fn is_uniform(&self) -> bool {
        match self.kind {
            Kind::Uniform(_) | Kind::Dyadic(_) => true,
            Kind::Explicit => {
                let n = T::from_usize_lossy(self.len());
                self.widths().iter().all(|&w| (w * n - T::one()).abs() <= T::epsilon() * lit(64.0))
            }
        }
    }

    pub fn contains_break(&self, t: T) -> bool {
        let i = self.breaks.partition_point(|&b| b < t - T::epsilon() * lit(8.0));
        i < self.breaks.len() && same_point(self.breaks[i], t)
    }

    /// Set inclusion `coarser ⊂ self`.
    pub fn refines(&self, coarser: &Partition<T>) -> bool {
        coarser.breaks.iter().all(|&t| self.contains_break(t))
    }

    pub fn check_refines(&self, coarser: &Partition<T>) -> Result<()> {
        if self.refines(coarser) {
            Ok(())
        } else {
            Err(Error::NotRefinement(self.describe(), coarser.describe()))
        }
    }

    /// Common refinement `self ∪ other`.
    pub fn merge(&self, other: &Partition<T>) -> Partition<T> {
        if self.refines(other) {
            return self.clone();
        }
        if other.refines(self) {
            return other.clone();
        }
        let mut all: Vec<T> = self.breaks.iter().chain(&other.breaks).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| same_point(*a, *b));
        Partition { breaks: all, kind: Kind::Explicit }
    }

    /// Cell containing `s ∈ [0, 1)`; `s = 1` maps to the last cell.
    pub fn cell_of(&self, s: T) -> usize {
        let i = self.breaks.partition_point(|&b| b <= s);
        i.min(self.len() - 1)
    }

    pub fn describe(&self) -> String {
        match self.kind {
            Kind::Uniform(n) => format!("uniform({n})"),
            Kind::Dyadic(k) => format!("dyadic({k})"),
            Kind::Explicit => format!("breaks({} cells)", self.len()),
        }
    }

    pub fn cast<U: Real>(&self) -> Partition<U> {
        Partition { breaks: self.breaks.iter().map(|b| U::lit(b.to_f64_lossy())).collect(), kind: self.kind }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors() {
        let u = Partition::<f64>::uniform(4).unwrap();
        assert_eq!(u.breaks(), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Partition::<f64>::dyadic(2).unwrap(), u);
        assert!(Partition::<f64>::uniform(0).is_err());
        assert!(Partition::from_breaks(vec![0.5, 0.4, 1.0]).is_err());
        assert!(Partition::from_breaks(vec![0.0, 1.0]).is_err());
        assert!(Partition::from_breaks(vec![0.3, 0.9]).is_err());
        assert!(Partition::from_breaks(vec![0.3, 1.0]).unwrap().widths()[0] == 0.3);
    }

    #[test]
    fn refinement_is_set_inclusion() {
        let a = Partition::<f64>::uniform(3).unwrap();
        let b = Partition::<f64>::uniform(6).unwrap();
        let c = Partition::<f64>::uniform(4).unwrap();
        assert!(b.refines(&a));
        assert!(!a.refines(&b));
        assert!(!c.refines(&a));
        let m = a.merge(&c);
        assert!(m.refines(&a) && m.refines(&c));
        assert_eq!(m.len(), 3 + 4 - 1);
    }

    #[test]
    fn json_roundtrip() {
        for s in [r#"{"uniform":3}"#, r#"{"dyadic":2}"#, r#"{"breaks":[0.1,0.7,1.0]}"#] {
            let p: Partition<f64> = serde_json::from_str(s).unwrap();
            assert_eq!(serde_json::to_string(&p).unwrap(), s);
        }
        assert!(serde_json::from_str::<Partition<f64>>(r#"{"uniform":0}"#).is_err());
        assert!(serde_json::from_str::<Partition<f64>>(r#"{"cells":3}"#).is_err());
    }

    #[test]
    fn cell_lookup() {
        let p = Partition::from_breaks(vec![0.2, 0.5, 1.0]).unwrap();
        assert_eq!(p.cell_of(0.0), 0);
        assert_eq!(p.cell_of(0.2), 1);
        assert_eq!(p.cell_of(0.99), 2);
        assert_eq!(p.cell_of(1.0), 2);
    }
}
