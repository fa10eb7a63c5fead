use serde::{Deserialize, Serialize};

use super::partition::Partition;
use super::point::ConePoint;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Declared membership of a path; checked when the path is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathRole {
    #[default]
    Free,
    Cone,
    Dual,
}

/// Right-continuous step function on `[0, 1)` with values in `S^D`.
#[derive(Clone, Debug)]
pub struct StepPath<T> {
    steps: ConePoint<T>,
    role: PathRole,
}

impl<T: Real> PartialEq for StepPath<T> {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps && self.role == other.role
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct StepPathRepr<T> {
    partition: Partition<T>,
    values: Vec<SymMatrix<T>>,
    #[serde(default)]
    role: PathRole,
}

impl<T: Real> Serialize for StepPath<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StepPathRepr { partition: self.partition().clone(), values: self.steps.coords(), role: self.role }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for StepPath<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = StepPathRepr::<T>::deserialize(d)?;
        let steps = ConePoint::new(r.partition, r.values).map_err(serde::de::Error::custom)?;
        StepPath::with_role(steps, r.role).map_err(serde::de::Error::custom)
    }
}

/// Segments `(length, cell in a, cell in b)` of the common refinement of two partitions.
pub(crate) fn overlaps<T: Real>(a: &Partition<T>, b: &Partition<T>) -> Vec<(T, usize, usize)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut k) = (0, 0);
    let mut left = T::zero();
    while i < a.len() && k < b.len() {
        let ra = a.right(i);
        let rb = b.right(k);
        let right = ra.min(rb);
        if right > left {
            out.push((right - left, i, k));
        }
        left = right;
        let tie = (ra - rb).abs() <= T::epsilon() * T::lit(8.0);
        if ra <= rb || tie {
            i += 1;
        }
        if rb <= ra || tie {
            k += 1;
        }
    }
    out
}

impl<T: Real> StepPath<T> {
    pub fn new(partition: Partition<T>, values: Vec<SymMatrix<T>>) -> Result<Self> {
        Ok(StepPath { steps: ConePoint::new(partition, values)?, role: PathRole::Free })
    }

    pub fn from_scalars(partition: Partition<T>, values: &[T]) -> Result<Self> {
        Ok(StepPath { steps: ConePoint::from_scalars(partition, values)?, role: PathRole::Free })
    }

    /// Attaches a role after checking membership in `C` or `C*`.
    pub fn with_role(steps: ConePoint<T>, role: PathRole) -> Result<Self> {
        let ok = match role {
            PathRole::Free => true,
            PathRole::Cone => steps.is_in_cone(None),
            PathRole::Dual => steps.is_in_dual(None),
        };
        if !ok {
            return Err(Error::Precondition(format!("path is not in the {:?} set", role).to_lowercase()));
        }
        Ok(StepPath { steps, role })
    }

    pub fn role(&self) -> PathRole {
        self.role
    }

    pub fn partition(&self) -> &Partition<T> {
        self.steps.partition()
    }

    pub fn dim(&self) -> usize {
        self.steps.dim()
    }

    pub fn steps(&self) -> &ConePoint<T> {
        &self.steps
    }

    pub fn value(&self, k: usize) -> SymMatrix<T> {
        self.steps.coord(k)
    }

    pub fn values(&self) -> Vec<SymMatrix<T>> {
        self.steps.coords()
    }

    pub fn at(&self, s: T) -> SymMatrix<T> {
        self.value(self.partition().cell_of(s))
    }

    pub fn is_in_cone(&self) -> bool {
        self.steps.is_in_cone(None)
    }

    pub fn is_in_dual(&self) -> bool {
        self.steps.is_in_dual(None)
    }

    /// `∫_0^1 f(μ(s), ν(s)) ds` over the common refinement.
    pub fn integrate_pair(&self, other: &Self, mut f: impl FnMut(&[T], &[T]) -> T) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("paths have different matrix sizes".into()));
        }
        let s = self.dim() * self.dim();
        let (a, b) = (self.steps.flat(), other.steps.flat());
        Ok(overlaps(self.partition(), other.partition())
            .into_iter()
            .map(|(len, i, k)| len * f(&a[i * s..(i + 1) * s], &b[k * s..(k + 1) * s]))
            .sum())
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        self.integrate_pair(other, |a, b| a.iter().zip(b).map(|(&x, &y)| x * y).sum())
    }

    pub fn norm(&self) -> T {
        self.steps.norm()
    }

    /// `L^p` distance with the Frobenius norm pointwise.
    pub fn lp_distance(&self, other: &Self, p: T) -> Result<T> {
        if p < T::one() {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        let frob = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt();
        if p.is_infinite() {
            let mut m = T::zero();
            self.integrate_pair(other, |a, b| {
                m = m.max(frob(a, b));
                T::zero()
            })?;
            return Ok(m);
        }
        Ok(self.integrate_pair(other, |a, b| frob(a, b).powf(p))?.powf(T::one() / p))
    }

    pub fn cast<U: Real>(&self) -> StepPath<U> {
        StepPath { steps: self.steps.cast(), role: self.role }
    }
}

/// `p_j`: cell averages of `μ` over the cells of `j`.
pub fn project_pj<T: Real>(mu: &StepPath<T>, j: &Partition<T>) -> ConePoint<T> {
    let d = mu.dim();
    let s = d * d;
    let src = mu.steps().flat();
    let mut data = vec![T::zero(); j.len() * s];
    for (len, i, k) in overlaps(mu.partition(), j) {
        for e in 0..s {
            data[k * s + e] = data[k * s + e] + len * src[i * s + e];
        }
    }
    for k in 0..j.len() {
        let w = j.width(k);
        for e in 0..s {
            data[k * s + e] = data[k * s + e] / w;
        }
    }
    ConePoint::from_flat(j.clone(), d, data)
}

/// `l_j`: the step function taking value `x_k` on `[t_{k-1}, t_k)`.
pub fn lift_lj<T: Real>(x: &ConePoint<T>) -> StepPath<T> {
    StepPath { steps: x.clone(), role: PathRole::Free }
}

/// `μ^(j) = l_j p_j μ`.
pub fn coarsen<T: Real>(mu: &StepPath<T>, j: &Partition<T>) -> StepPath<T> {
    lift_lj(&project_pj(mu, j))
}

/// Re-expresses `x ∈ H^j` on a refinement `j' ⊃ j` (the map `p_{j'} l_j`).
pub fn refine_point<T: Real>(x: &ConePoint<T>, fine: &Partition<T>) -> Result<ConePoint<T>> {
    fine.check_refines(x.partition())?;
    Ok(project_pj(&lift_lj(x), fine))
}

/// `p_j l_{j'} x` for `x ∈ H^{j'}` and `j ⊂ j'`.
pub fn restrict_point<T: Real>(x: &ConePoint<T>, coarse: &Partition<T>) -> Result<ConePoint<T>> {
    x.partition().check_refines(coarse)?;
    Ok(project_pj(&lift_lj(x), coarse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_of_known_path() {
        let mu = StepPath::from_scalars(Partition::from_breaks(vec![0.25, 1.0]).unwrap(), &[1.0, 3.0]).unwrap();
        let x = project_pj(&mu, &Partition::uniform(2).unwrap());
        assert_eq!(x.scalars().unwrap(), &[2.0, 3.0]);
        let back = project_pj(&lift_lj(&x), &Partition::uniform(2).unwrap());
        assert_eq!(back, x);
    }

    #[test]
    fn inner_product_on_merged_grid() {
        let a = StepPath::<f64>::from_scalars(Partition::from_breaks(vec![0.5, 1.0]).unwrap(), &[1.0, 2.0]).unwrap();
        let b = StepPath::from_scalars(Partition::from_breaks(vec![0.25, 1.0]).unwrap(), &[4.0, 1.0]).unwrap();
        // 0.25*4 + 0.25*1 + 0.5*2
        assert!((a.inner(&b).unwrap() - 2.25).abs() < 1e-15);
        assert!((a.lp_distance(&b, 1.0).unwrap() - (0.75 + 0.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn refine_and_restrict() {
        let c = Partition::<f64>::uniform(2).unwrap();
        let f = Partition::<f64>::uniform(4).unwrap();
        let x = ConePoint::from_scalars(f.clone(), &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert_eq!(restrict_point(&x, &c).unwrap().scalars().unwrap(), &[1.5, 4.0]);
        assert!(restrict_point(&x, &Partition::uniform(3).unwrap()).is_err());
        let y = ConePoint::from_scalars(c, &[1.0, 2.0]).unwrap();
        assert_eq!(refine_point(&y, &f).unwrap().scalars().unwrap(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn roles_are_checked() {
        let j = Partition::<f64>::uniform(2).unwrap();
        let x = ConePoint::from_scalars(j, &[2.0, 1.0]).unwrap();
        assert!(StepPath::with_role(x.clone(), PathRole::Cone).is_err());
        assert!(StepPath::with_role(x, PathRole::Dual).is_ok());
        let s = r#"{"partition":{"uniform":2},"values":[1.0,0.5],"role":"cone"}"#;
        assert!(serde_json::from_str::<StepPath<f64>>(s).is_err());
    }
}
