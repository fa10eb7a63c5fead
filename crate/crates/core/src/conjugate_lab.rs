//! Monotone conjugation on finite lattices in `C^j` and an empirical check of
//! the biconjugation identity `g** = g`.
//!
//! Grids are `D = 1`: nodes are the nondecreasing index tuples
//! `0 <= i_1 <= ... <= i_n <= m`, i.e. `x_k = i_k * x_max / m`, listed in
//! lexicographic order.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConePoint, Partition};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{lit, Real};

/// Upper bound on lattice size; every check below is quadratic in it.
pub const MAX_NODES: usize = 20_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFlags {
    pub convex: Option<bool>,
    /// Always true on a finite grid.
    pub lsc: bool,
    pub dual_increasing: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct GridFunction<T> {
    partition: Partition<T>,
    x_max: T,
    steps: usize,
    nodes: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
    values: Vec<T>,
    pub flags: GridFlags,
}

/// Number of nondecreasing tuples of length `n` over `0..=m`.
fn count_nodes(n: usize, m: usize) -> Option<usize> {
    // C(m + n, n)
    let mut c: u128 = 1;
    for i in 0..n {
        c = c * (m + n - i) as u128 / (i + 1) as u128;
        if c > MAX_NODES as u128 {
            return None;
        }
    }
    Some(c as usize)
}

fn monotone_tuples(n: usize, m: usize) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; n];
    fn rec(k: usize, lo: u16, m: u16, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in lo..=m {
            cur[k] = i;
            rec(k + 1, i, m, cur, out);
        }
    }
    rec(0, 0, m as u16, &mut cur, &mut out);
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct GridRepr<T> {
    partition: Partition<T>,
    x_max: T,
    steps: usize,
    /// `null` encodes `+∞`.
    values: Vec<Option<T>>,
}

impl<T: Real> Serialize for GridFunction<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridRepr {
            partition: self.partition.clone(),
            x_max: self.x_max,
            steps: self.steps,
            values: self.values.iter().map(|&v| if v.is_finite() { Some(v) } else { None }).collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for GridFunction<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GridRepr::<T>::deserialize(d)?;
        let values = r.values.into_iter().map(|v| v.unwrap_or(T::infinity())).collect();
        GridFunction::from_values(r.partition, r.x_max, r.steps, values).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> GridFunction<T> {
    pub fn from_values(partition: Partition<T>, x_max: T, steps: usize, values: Vec<T>) -> Result<Self> {
        if !(x_max > T::zero()) || !x_max.is_finite() {
            return Err(Error::InvalidInput("x_max must be positive".into()));
        }
        if steps == 0 || steps > u16::MAX as usize {
            return Err(Error::InvalidInput("steps must be in 1..=65535".into()));
        }
        let n = partition.len();
        let Some(count) = count_nodes(n, steps) else {
            return Err(Error::InvalidInput(format!("lattice larger than {MAX_NODES} nodes")));
        };
        if values.len() != count {
            return Err(Error::DimensionMismatch(format!("{} values for {count} nodes", values.len())));
        }
        if values.iter().any(|v| v.is_nan() || *v == T::neg_infinity()) {
            return Err(Error::InvalidInput("values must be real or +inf".into()));
        }
        let nodes = monotone_tuples(n, steps);
        let index = nodes.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(GridFunction {
            partition,
            x_max,
            steps,
            nodes,
            index,
            values,
            flags: GridFlags { lsc: true, ..Default::default() },
        })
    }

    /// Samples `f` on the lattice.
    pub fn tabulate(partition: Partition<T>, x_max: T, steps: usize, f: impl Fn(&[T]) -> T + Sync) -> Result<Self> {
        let n = partition.len();
        if count_nodes(n, steps).is_none() {
            return Err(Error::InvalidInput(format!("lattice larger than {MAX_NODES} nodes")));
        }
        let h = x_max / T::from_usize_lossy(steps.max(1));
        let values = monotone_tuples(n, steps)
            .par_iter()
            .map(|t| f(&t.iter().map(|&i| h * T::from_usize_lossy(i as usize)).collect::<Vec<_>>()))
            .collect();
        Self::from_values(partition, x_max, steps, values)
    }

    pub fn partition(&self) -> &Partition<T> {
        &self.partition
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> T {
        self.x_max / T::from_usize_lossy(self.steps)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn coords(&self, i: usize) -> Vec<T> {
        let h = self.step();
        self.nodes[i].iter().map(|&k| h * T::from_usize_lossy(k as usize)).collect()
    }

    pub fn node(&self, i: usize) -> ConePoint<T> {
        ConePoint::from_flat(self.partition.clone(), 1, self.coords(i))
    }

    /// Position of the node with the given lattice indices.
    pub fn find(&self, idx: &[u16]) -> Option<usize> {
        self.index.get(idx).copied()
    }

    fn pairing(&self, x: &[T], y: &[T]) -> T {
        (0..x.len()).map(|k| self.partition.width(k) * x[k] * y[k]).sum()
    }

    /// Midpoint convexity on lattice pairs whose midpoint is a node.
    pub fn convexity_check(&self) -> FlagCheck<T> {
        let hit = (0..self.len()).into_par_iter().find_map_first(|a| {
            let va = self.values[a];
            if !va.is_finite() {
                return None;
            }
            for b in a + 1..self.len() {
                let vb = self.values[b];
                if !vb.is_finite() {
                    continue;
                }
                let (na, nb) = (&self.nodes[a], &self.nodes[b]);
                if na.iter().zip(nb).any(|(p, q)| (p + q) % 2 != 0) {
                    continue;
                }
                let mid: Vec<u16> = na.iter().zip(nb).map(|(p, q)| (p + q) / 2).collect();
                let Some(c) = self.find(&mid) else { continue };
                let avg = (va + vb) * lit(0.5);
                if self.values[c] > avg + T::tol(avg) * lit(1e-3) {
                    return Some((a, b, self.values[c] - avg));
                }
            }
            None
        });
        match hit {
            None => FlagCheck { ok: true, counterexample: None, excess: T::zero() },
            Some((a, b, e)) => FlagCheck { ok: false, counterexample: Some((self.node(a), self.node(b))), excess: e },
        }
    }

    /// `g(x) >= g(x')` whenever `x - x' ∈ (C^j)*`; the counterexample is `(x, x')`.
    pub fn dual_increasing_check(&self) -> FlagCheck<T> {
        let w = self.partition.widths();
        let hit = (0..self.len()).into_par_iter().find_map_first(|a| {
            for b in 0..self.len() {
                if a == b {
                    continue;
                }
                let (na, nb) = (&self.nodes[a], &self.nodes[b]);
                let mut tail = T::zero();
                let mut ordered = true;
                for k in (0..na.len()).rev() {
                    tail = tail + w[k] * (T::from_usize_lossy(na[k] as usize) - T::from_usize_lossy(nb[k] as usize));
                    if tail < -T::tol(T::one()) * lit(1e-3) {
                        ordered = false;
                        break;
                    }
                }
                if !ordered {
                    continue;
                }
                let (va, vb) = (self.values[a], self.values[b]);
                let bad = if va == T::infinity() {
                    false
                } else if vb == T::infinity() {
                    true
                } else {
                    va < vb - T::tol(vb) * lit(1e-3)
                };
                if bad {
                    let gap = if vb.is_finite() { vb - va } else { T::infinity() };
                    return Some((a, b, gap));
                }
            }
            None
        });
        match hit {
            None => FlagCheck { ok: true, counterexample: None, excess: T::zero() },
            Some((a, b, e)) => FlagCheck { ok: false, counterexample: Some((self.node(a), self.node(b))), excess: e },
        }
    }

    /// Largest ℓ∞ density of a forward difference in the last coordinate, i.e. a
    /// bound for the monotone gradients that matter in the conjugate.
    pub fn slope_bound(&self) -> T {
        let n = self.partition.len();
        let wn = self.partition.width(n - 1);
        let h = self.step();
        let mut best = T::zero();
        for (i, t) in self.nodes.iter().enumerate() {
            if t[n - 1] as usize == self.steps || !self.values[i].is_finite() {
                continue;
            }
            let mut up = t.clone();
            up[n - 1] += 1;
            if let Some(k) = self.find(&up) {
                if self.values[k].is_finite() {
                    best = best.max((self.values[k] - self.values[i]).abs() / (h * wn));
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct FlagCheck<T> {
    pub ok: bool,
    pub counterexample: Option<(ConePoint<T>, ConePoint<T>)>,
    /// Size of the violation at the counterexample.
    pub excess: T,
}

/// `g*(y) = max_x ⟨x, y⟩ - g(x)` for `y` on the same lattice as `g`.
pub fn mono_conjugate<T: Real>(g: &GridFunction<T>) -> Result<GridFunction<T>> {
    mono_conjugate_on(g, g.x_max, g.steps)
}

/// Monotone conjugate evaluated on the lattice `C^j ∩ [0, y_max]` with `steps`.
pub fn mono_conjugate_on<T: Real>(g: &GridFunction<T>, y_max: T, steps: usize) -> Result<GridFunction<T>> {
    let dom: Vec<(Vec<T>, T)> =
        (0..g.len()).filter(|&i| g.values[i].is_finite()).map(|i| (g.coords(i), g.values[i])).collect();
    if dom.is_empty() {
        return Err(Error::InvalidInput("g is identically +inf".into()));
    }
    GridFunction::tabulate(g.partition.clone(), y_max, steps, |y| {
        dom.iter().map(|(x, v)| g.pairing(x, y) - *v).fold(T::neg_infinity(), T::max)
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct FmReport<T> {
    pub pass: bool,
    /// `max (g - g**)` over the effective domain.
    pub max_gap: T,
    /// Node where the gap is largest.
    pub witness: ConePoint<T>,
    /// `min (g - g**)`; never negative beyond rounding.
    pub min_gap: T,
    pub tol: T,
    pub convex: FlagCheck<T>,
    pub dual_increasing: FlagCheck<T>,
    /// Names the failed flag and where, if any.
    pub diagnostic: Option<String>,
}

/// Biconjugates `g` through a dual lattice `[0, Y]`, `Y` from the slope bound,
/// and compares with `g` on its effective domain.
///
/// The default tolerance is `5 h (Lip g + Lip g*)` with `h` the coarser of the
/// two lattice steps, `Lip g = Y` and `Lip g* = x_max`. A failed flag check makes
/// the report fail; the gap is still computed.
pub fn fm_verify<T: Real>(g: &GridFunction<T>, tol: Option<T>) -> Result<FmReport<T>> {
    fm_verify_with(g, tol, None)
}

/// As [`fm_verify`] with an explicit dual lattice `[0, y_max]` and step count.
pub fn fm_verify_with<T: Real>(
    g: &GridFunction<T>,
    tol: Option<T>,
    dual_box: Option<(T, usize)>,
) -> Result<FmReport<T>> {
    let convex = g.convexity_check();
    let dual_increasing = g.dual_increasing_check();
    let (y_max, y_steps) = dual_box.unwrap_or(((g.slope_bound() * lit(1.05)).max(g.step()), g.steps));
    let dual = mono_conjugate_on(g, y_max, y_steps)?;
    let bi = mono_conjugate_on(&dual, g.x_max, g.steps)?;
    let h = g.step().max(dual.step());
    let tol = tol.unwrap_or(lit::<T>(5.0) * h * (y_max + g.x_max));
    let mut max_gap = T::neg_infinity();
    let mut min_gap = T::infinity();
    let mut at = 0;
    for i in 0..g.len() {
        if !g.values[i].is_finite() {
            continue;
        }
        let gap = g.values[i] - bi.values[i];
        if gap > max_gap {
            max_gap = gap;
            at = i;
        }
        min_gap = min_gap.min(gap);
    }
    let diagnostic = match (&convex.counterexample, &dual_increasing.counterexample) {
        (Some((a, b)), _) => Some(format!(
            "convex flag failed: midpoint of {:?} and {:?} lies above the chord by {:?}",
            a.flat(),
            b.flat(),
            convex.excess
        )),
        (None, Some((a, b))) => Some(format!(
            "dual_increasing flag failed: x = {:?} dominates x' = {:?} but g(x) < g(x') by {:?}",
            a.flat(),
            b.flat(),
            dual_increasing.excess
        )),
        _ => None,
    };
    Ok(FmReport {
        pass: diagnostic.is_none() && max_gap <= tol,
        max_gap,
        witness: g.node(at),
        min_gap,
        tol,
        convex,
        dual_increasing,
        diagnostic,
    })
}

/// Box inside `C^j ∩ (x - (C^j)*)` built as in the full-rank argument.
#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct InteriorBox<T> {
    /// `y_k = k δ I`.
    pub center: ConePoint<T>,
    pub delta: T,
    /// Frobenius radius per cell.
    pub radius: T,
}

/// When the last coordinate of `x ∈ C^j` is full rank, returns a box
/// `{z : |z_k - y_k|_F <= r}` contained in `C^j ∩ (x - (C^j)*)`.
///
/// With `a = λ_min(x_n)` the choice is `r = δ/4` and
/// `δ (Σ_k k w_k + 1/4) = w_n a / 2`, which keeps every increment above
/// `(δ/2) I` and every weighted tail sum of `x - z` above `(w_n a / 2) I`.
pub fn full_rank_interior_box<T: Real>(x: &ConePoint<T>) -> Result<Option<InteriorBox<T>>> {
    if !x.is_in_cone(None) {
        return Err(Error::InvalidInput("x must lie in C^j".into()));
    }
    let j = x.partition();
    let n = j.len();
    let a = x.coord(n - 1).min_eigenvalue();
    if !(a > T::zero()) {
        return Ok(None);
    }
    let wn = j.width(n - 1);
    let moment: T = (0..n).map(|k| T::from_usize_lossy(k + 1) * j.width(k)).sum();
    let delta = wn * a / (lit::<T>(2.0) * (moment + lit(0.25)));
    let d = x.dim();
    let coords = (0..n).map(|k| SymMatrix::scaled_identity(d, delta * T::from_usize_lossy(k + 1))).collect();
    Ok(Some(InteriorBox { center: ConePoint::new(j.clone(), coords)?, delta, radius: delta * lit(0.25) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, m: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> GridFunction<f64> {
        GridFunction::tabulate(Partition::uniform(n).unwrap(), 2.0, m, f).unwrap()
    }

    #[test]
    fn node_counts() {
        assert_eq!(count_nodes(3, 20), Some(1771));
        assert_eq!(monotone_tuples(2, 2).len(), 6);
        assert!(count_nodes(6, 60).is_none());
    }

    #[test]
    fn zero_function_conjugate() {
        let g = grid(2, 4, |_| 0.0);
        let c = mono_conjugate(&g).unwrap();
        assert_eq!(c.values()[0], 0.0);
        // y = (0, 0.5): best x is the corner (2, 2), pairing 0.5 * 0.5 * 2
        let i = c.find(&[0, 1]).unwrap();
        assert_eq!(c.values()[i], 0.5);
    }

    #[test]
    fn linear_self_pairing() {
        let cvec = [0.5, 1.0];
        let g = grid(2, 4, |x| 0.5 * (cvec[0] * x[0] + cvec[1] * x[1]));
        let c = mono_conjugate(&g).unwrap();
        assert_eq!(c.values()[c.find(&[1, 2]).unwrap()], 0.0);
    }

    #[test]
    fn one_cell_square() {
        // g(x) = x^2 on [0, 2], g*(y) = y^2/4 on [0, 4]
        let g = GridFunction::tabulate(Partition::uniform(1).unwrap(), 2.0, 200, |x: &[f64]| x[0] * x[0]).unwrap();
        let c = mono_conjugate_on(&g, 4.0, 200).unwrap();
        for i in 0..c.len() {
            let y = c.coords(i)[0];
            assert!((c.values()[i] - y * y / 4.0).abs() <= 0.01 * 1.01, "{y}");
        }
    }

    #[test]
    fn biconjugate_of_convex_monotone() {
        let g = grid(3, 12, |x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 3.0);
        let r = fm_verify(&g, None).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.min_gap >= -1e-12);
        assert!(r.max_gap < 0.05, "{}", r.max_gap);
    }

    #[test]
    fn non_monotone_fails_with_gap() {
        let g = grid(2, 10, |x| -x[0]);
        let r = fm_verify(&g, None).unwrap();
        assert!(!r.pass && !r.dual_increasing.ok);
        assert!(r.max_gap > 0.1 && r.min_gap >= -1e-12);
        assert!(r.diagnostic.unwrap().contains("dual_increasing"));
    }

    #[test]
    fn dual_increasing_examples() {
        assert!(grid(3, 6, |x| x.iter().sum::<f64>() / 3.0).dual_increasing_check().ok);
        assert!(grid(3, 6, |_| 1.5).dual_increasing_check().ok);
        let bad = grid(3, 6, |x| -x[2]).dual_increasing_check();
        let (a, b) = bad.counterexample.unwrap();
        let diff = a.sub(&b).unwrap();
        assert!(diff.is_in_dual(None) && -a.flat()[2] < -b.flat()[2]);
    }

    #[test]
    fn linear_with_monotone_slope_is_exact() {
        let g = grid(2, 8, |x| 0.5 * (0.25 * x[0] + 1.0 * x[1]));
        // the slope (0.25, 1) is a node of the dual lattice
        let r = fm_verify_with(&g, None, Some((2.0, 8))).unwrap();
        assert!(r.pass && r.max_gap.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn interior_box_is_feasible() {
        let j = Partition::from_breaks(vec![0.2, 0.7, 1.0]).unwrap();
        let x = ConePoint::from_scalars(j.clone(), &[0.1, 0.4, 0.9]).unwrap();
        let b = full_rank_interior_box(&x).unwrap().unwrap();
        let c = b.center.scalars().unwrap().to_vec();
        for signs in 0..27 {
            let z: Vec<f64> =
                (0..3).map(|k| c[k] + b.radius * [-1.0, 0.0, 1.0][(signs / 3usize.pow(k as u32)) % 3]).collect();
            let z = ConePoint::from_scalars(j.clone(), &z).unwrap();
            assert!(z.is_in_cone(Some(0.0)));
            assert!(x.sub(&z).unwrap().is_in_dual(Some(0.0)));
        }
        let zero_last = ConePoint::from_scalars(j, &[0.0, 0.0, 0.0]).unwrap();
        assert!(full_rank_interior_box(&zero_last).unwrap().is_none());
    }
}
