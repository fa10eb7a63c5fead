use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{lift_lj, pava_by, project_pj, ConePoint, Partition, PathRole, StepPath};
use crate::error::{Error, Result};
use crate::nonlinearity::{bold_xi, Regularization, ScalarProfile};
use crate::scalar::{lit, Real};

/// `ψ^j` as a function of the flat coordinates of a point of `H^j`.
pub trait LevelFunction<T: Real>: Send + Sync {
    fn value(&self, x: &[T]) -> T;

    /// Euclidean gradient in flat coordinates (forward differences by default).
    fn gradient(&self, x: &[T]) -> Vec<T> {
        let f0 = self.value(x);
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                let h = lit::<T>(1e-7) * (T::one() + x[k].abs());
                y[k] = x[k] + h;
                let g = (self.value(&y) - f0) / h;
                y[k] = x[k];
                g
            })
            .collect()
    }

    /// `ψ^{j*}(z) = sup_{x ∈ C^j} ⟨x, z⟩ - ψ^j(x)` when known in closed form.
    fn monotone_conjugate(&self, _z: &[T]) -> Option<T> {
        None
    }
}

/// An initial condition `ψ` on step paths, `C*`-increasing by construction.
pub trait InitialCondition<T: Real>: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize {
        1
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T;

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a>;

    /// `ψ^j(x) = ψ(l_j x)`.
    fn eval(&self, x: &ConePoint<T>) -> T {
        self.at_level(x.partition()).value(x.flat())
    }

    /// Constant in `|ψ(μ) - ψ(ν)| <= c |μ - ν|_{L^1}`.
    fn lip_l1(&self) -> T;

    /// Constant in `|ψ(μ) - ψ(ν)| <= c |μ - ν|_{L^2}`.
    fn lip_h(&self) -> T;

    fn is_convex(&self) -> bool;

    fn is_concave(&self) -> bool;

    /// Hopf-Lax value in closed form, when the family has one.
    fn hopf_lax_closed(&self, _reg: &Regularization<T>, _t: T, _x: &ConePoint<T>) -> Option<T> {
        None
    }
}

fn weighted_dot<T: Real>(j: &Partition<T>, block: usize, a: &[T], b: &[T]) -> T {
    (0..j.len()).map(|k| j.width(k) * (0..block).map(|e| a[k * block + e] * b[k * block + e]).sum::<T>()).sum()
}

fn sup_frobenius<T: Real>(h: &StepPath<T>) -> T {
    h.values().iter().map(|m| m.frobenius()).fold(T::zero(), T::max)
}

fn cone_path<T: Real>(h: &StepPath<T>, what: &str) -> Result<()> {
    if !h.is_in_cone() {
        return Err(Error::Precondition(format!("{what} must be a nondecreasing PSD path")));
    }
    Ok(())
}

/// `ψ(μ) = ⟨h, μ⟩` with `h ∈ C`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Linear<T> {
    pub h: StepPath<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(h: StepPath<T>) -> Result<Self> {
        cone_path(&h, "h")?;
        Ok(Linear { h })
    }
}

struct LinearLevel<T> {
    hj: ConePoint<T>,
}

impl<T: Real> LevelFunction<T> for LinearLevel<T> {
    fn value(&self, x: &[T]) -> T {
        let b = self.hj.dim() * self.hj.dim();
        weighted_dot(self.hj.partition(), b, self.hj.flat(), x)
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let b = self.hj.dim() * self.hj.dim();
        let j = self.hj.partition();
        (0..x.len()).map(|i| j.width(i / b) * self.hj.flat()[i]).collect()
    }

    /// Zero when `h_j - z ∈ (C^j)*`, `+∞` otherwise.
    fn monotone_conjugate(&self, z: &[T]) -> Option<T> {
        let zp = ConePoint::from_flat(self.hj.partition().clone(), self.hj.dim(), z.to_vec());
        let diff = self.hj.sub(&zp).ok()?;
        // scaled by the datum only: a tolerance that moves with z lets a search
        // lean on the constraints and then blocks it
        let tol = T::tol(self.hj.linf_norm()) * lit(1e-3);
        Some(if diff.is_in_dual(Some(tol)) { T::zero() } else { T::infinity() })
    }
}

impl<T: Real> InitialCondition<T> for Linear<T> {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        self.h.inner(mu).expect("dimension checked by caller")
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        Box::new(LinearLevel { hj: project_pj(&self.h, j) })
    }

    fn lip_l1(&self) -> T {
        sup_frobenius(&self.h)
    }

    fn lip_h(&self) -> T {
        self.h.norm()
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_concave(&self) -> bool {
        true
    }

    /// `⟨h_j, x⟩ + t bold ξ̄^j(h_j)`.
    fn hopf_lax_closed(&self, reg: &Regularization<T>, t: T, x: &ConePoint<T>) -> Option<T> {
        let hj = project_pj(&self.h, x.partition());
        Some(hj.inner(x).ok()? + t * bold_xi(&hj, reg).ok()?)
    }
}

/// `ψ(μ) = max_i (⟨h_i, μ⟩ + c_i)` with every `h_i ∈ C`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MaxAffine<T> {
    pub pieces: Vec<(StepPath<T>, T)>,
}

impl<T: Real> MaxAffine<T> {
    pub fn new(pieces: Vec<(StepPath<T>, T)>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::InvalidInput("max-affine needs at least one piece".into()));
        };
        let d = first.0.dim();
        for (h, c) in &pieces {
            cone_path(h, "every slope")?;
            if h.dim() != d || !c.is_finite() {
                return Err(Error::InvalidInput("pieces must share D and have finite offsets".into()));
            }
        }
        Ok(MaxAffine { pieces })
    }
}

struct MaxAffineLevel<T> {
    pieces: Vec<(ConePoint<T>, T)>,
}

impl<T: Real> MaxAffineLevel<T> {
    fn active(&self, x: &[T]) -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for (i, (h, c)) in self.pieces.iter().enumerate() {
            let v = weighted_dot(h.partition(), h.dim() * h.dim(), h.flat(), x) + *c;
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

impl<T: Real> LevelFunction<T> for MaxAffineLevel<T> {
    fn value(&self, x: &[T]) -> T {
        self.active(x).1
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let h = &self.pieces[self.active(x).0].0;
        let b = h.dim() * h.dim();
        (0..x.len()).map(|i| h.partition().width(i / b) * h.flat()[i]).collect()
    }

    /// `D = 1`: `min { -Σ λ_i c_i : λ in the simplex, Σ λ_i h_i - z ∈ (C^j)* }`,
    /// by enumerating the vertices of the feasible polytope.
    fn monotone_conjugate(&self, z: &[T]) -> Option<T> {
        let m = self.pieces.len();
        let j = self.pieces[0].0.partition();
        let n = j.len();
        if self.pieces[0].0.dim() != 1 || z.len() != n || binomial(m + n, m - 1) > 5000 {
            return None;
        }
        let w = j.widths();
        // rows: λ_i >= 0, then the tail sums S_k(λ) - S_k(z) >= 0; each as (a, b) with a·λ >= b
        let mut rows: Vec<(Vec<T>, T)> =
            (0..m).map(|i| ((0..m).map(|l| if l == i { T::one() } else { T::zero() }).collect(), T::zero())).collect();
        let mut scale = T::zero();
        for k in 0..n {
            let a: Vec<T> = self.pieces.iter().map(|(h, _)| (k..n).map(|l| w[l] * h.flat()[l]).sum()).collect();
            let b: T = (k..n).map(|l| w[l] * z[l]).sum();
            scale = scale.max(a.iter().fold(T::zero(), |s, v| s.max(v.abs())));
            rows.push((a, b));
        }
        let tol = T::tol(scale) * lit(10.0);
        let mut best = T::infinity();
        let mut pick = Vec::with_capacity(m);
        for_each_subset(rows.len(), m - 1, &mut pick, &mut |tight: &[usize]| {
            let mut a: Vec<Vec<T>> = vec![vec![T::one(); m]];
            let mut b = vec![T::one()];
            for &r in tight {
                a.push(rows[r].0.clone());
                b.push(rows[r].1);
            }
            let Some(lam) = solve_dense(a, b) else { return };
            if rows.iter().all(|(a, b)| a.iter().zip(&lam).map(|(&p, &q)| p * q).sum::<T>() >= *b - tol) {
                let v = -self.pieces.iter().zip(&lam).map(|((_, c), &l)| *c * l).sum::<T>();
                best = best.min(v);
            }
        });
        Some(best)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn for_each_subset(n: usize, k: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    let start = pick.last().map_or(0, |&l| l + 1);
    for i in start..n {
        if n - i < k - pick.len() {
            break;
        }
        pick.push(i);
        for_each_subset(n, k, pick, f);
        pick.pop();
    }
}

/// Gaussian elimination with partial pivoting; `None` when (numerically) singular.
fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    let norm = a.iter().flatten().fold(T::zero(), |s, v| s.max(v.abs()));
    for c in 0..n {
        let p =
            (c..n).max_by(|&i, &k| a[i][c].abs().partial_cmp(&a[k][c].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if !(a[p][c].abs() > lit::<T>(1e-12) * norm) {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                let v = a[c][k];
                a[r][k] = a[r][k] - f * v;
            }
            b[r] = b[r] - f * b[c];
        }
    }
    let mut x = vec![T::zero(); n];
    for c in (0..n).rev() {
        let s: T = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

impl<T: Real> InitialCondition<T> for MaxAffine<T> {
    fn name(&self) -> &'static str {
        "max_affine"
    }

    fn dim(&self) -> usize {
        self.pieces[0].0.dim()
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        self.pieces.iter().map(|(h, c)| h.inner(mu).expect("dimension checked") + *c).fold(T::neg_infinity(), T::max)
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        Box::new(MaxAffineLevel { pieces: self.pieces.iter().map(|(h, c)| (project_pj(h, j), *c)).collect() })
    }

    fn lip_l1(&self) -> T {
        self.pieces.iter().map(|(h, _)| sup_frobenius(h)).fold(T::zero(), T::max)
    }

    fn lip_h(&self) -> T {
        self.pieces.iter().map(|(h, _)| h.norm()).fold(T::zero(), T::max)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_concave(&self) -> bool {
        self.pieces.len() == 1
    }

    /// `max_i [⟨h_i^j, x⟩ + c_i + t bold ξ̄^j(h_i^j)]`.
    fn hopf_lax_closed(&self, reg: &Regularization<T>, t: T, x: &ConePoint<T>) -> Option<T> {
        let mut best = T::neg_infinity();
        for (h, c) in &self.pieces {
            let hj = project_pj(h, x.partition());
            best = best.max(hj.inner(x).ok()? + *c + t * bold_xi(&hj, reg).ok()?);
        }
        Some(best)
    }
}

/// Nonnegative nondecreasing weight profile on `[0, 1)` for the scalar families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields, bound = "T: Real")]
pub enum SlopeProfile<T> {
    Step(StepPath<T>),
    /// `h(s) = a + b s`.
    Affine {
        a: T,
        b: T,
    },
}

impl<T: Real> SlopeProfile<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            SlopeProfile::Step(h) if h.dim() != 1 => Err(Error::Unsupported("scalar profiles need D = 1".into())),
            SlopeProfile::Step(h) => cone_path(h, "the profile"),
            SlopeProfile::Affine { a, b } if *a >= T::zero() && *b >= T::zero() => Ok(()),
            SlopeProfile::Affine { .. } => Err(Error::Precondition("the profile needs a, b >= 0".into())),
        }
    }

    pub fn cell_means(&self, j: &Partition<T>) -> Vec<T> {
        match self {
            SlopeProfile::Step(h) => project_pj(h, j).into_flat(),
            SlopeProfile::Affine { a, b } => {
                (0..j.len()).map(|k| *a + *b * (j.left(k) + j.right(k)) * lit(0.5)).collect()
            }
        }
    }

    /// `∫ h μ`.
    pub fn pair(&self, mu: &StepPath<T>) -> T {
        match self {
            SlopeProfile::Step(h) => h.inner(mu).expect("scalar paths"),
            SlopeProfile::Affine { .. } => {
                let j = mu.partition();
                let m = self.cell_means(j);
                let v = mu.steps().flat();
                (0..j.len()).map(|k| j.width(k) * m[k] * v[k]).sum()
            }
        }
    }

    pub fn sup(&self) -> T {
        match self {
            SlopeProfile::Step(h) => h.steps().flat().iter().copied().fold(T::zero(), T::max),
            SlopeProfile::Affine { a, b } => *a + *b,
        }
    }

    pub fn l2(&self) -> T {
        match self {
            SlopeProfile::Step(h) => h.norm(),
            SlopeProfile::Affine { a, b } => (*a * *a + *a * *b + *b * *b / lit(3.0)).sqrt(),
        }
    }
}

/// `ψ(μ) = ⟨h, μ⟩ + ∫ a (sqrt(1 + μ²) - 1)`, convex and `C*`-increasing (`D = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SeparableConvex<T> {
    pub h: SlopeProfile<T>,
    pub a: SlopeProfile<T>,
}

impl<T: Real> SeparableConvex<T> {
    pub fn new(h: SlopeProfile<T>, a: SlopeProfile<T>) -> Result<Self> {
        h.validate()?;
        a.validate()?;
        Ok(SeparableConvex { h, a })
    }
}

fn soft<T: Real>(u: T) -> T {
    // sqrt(1 + u^2) - 1 without cancellation
    u * u / ((T::one() + u * u).sqrt() + T::one())
}

struct SeparableLevel<T> {
    w: Vec<T>,
    h: Vec<T>,
    a: Vec<T>,
}

impl<T: Real> LevelFunction<T> for SeparableLevel<T> {
    fn value(&self, x: &[T]) -> T {
        (0..x.len()).map(|k| self.w[k] * (self.h[k] * x[k] + self.a[k] * soft(x[k]))).sum()
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        (0..x.len()).map(|k| self.w[k] * (self.h[k] + self.a[k] * x[k] / (T::one() + x[k] * x[k]).sqrt())).collect()
    }

    /// Block-wise `φ'(u_B) = Σ_B w (z - h) / Σ_B w a` with pooling of adjacent
    /// violators; `+∞` when a tail sum of `w (z - h - a)` is positive.
    fn monotone_conjugate(&self, z: &[T]) -> Option<T> {
        let n = z.len();
        let mut tail = T::zero();
        let mut scale = T::zero();
        for k in (0..n).rev() {
            tail = tail + self.w[k] * (z[k] - self.h[k] - self.a[k]);
            scale = scale + self.w[k] * (z[k].abs() + self.h[k] + self.a[k]);
            if tail > T::tol(scale) * lit(1e-3) {
                return Some(T::infinity());
            }
        }
        // (Σ w (z - h), Σ w a) per block
        let items: Vec<(T, T)> = (0..n).map(|k| (self.w[k] * (z[k] - self.h[k]), self.w[k] * self.a[k])).collect();
        let ratio = |p: &(T, T)| {
            if p.1 > T::zero() {
                p.0 / p.1
            } else if p.0 > T::zero() {
                T::infinity()
            } else if p.0 < T::zero() {
                T::neg_infinity()
            } else {
                T::zero()
            }
        };
        let r = pava_by(items, |a, b| (a.0 + b.0, a.1 + b.1), ratio);
        let mut total = T::zero();
        for k in 0..n {
            let rk = r[k];
            let c = self.w[k] * (z[k] - self.h[k]);
            let wa = self.w[k] * self.a[k];
            total = total
                + if rk <= T::zero() {
                    T::zero()
                } else if rk >= T::one() {
                    // supremum approached as u -> ∞ with Σ_B w (z - h - a) = 0
                    wa
                } else {
                    let u = rk / (T::one() - rk * rk).sqrt();
                    c * u - wa * soft(u)
                };
        }
        Some(total)
    }
}

impl<T: Real> InitialCondition<T> for SeparableConvex<T> {
    fn name(&self) -> &'static str {
        "separable_convex"
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        let soft_mu = StepPath::from_scalars(
            mu.partition().clone(),
            &mu.steps().flat().iter().map(|&v| soft(v)).collect::<Vec<_>>(),
        )
        .expect("same partition");
        self.h.pair(mu) + self.a.pair(&soft_mu)
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        Box::new(SeparableLevel { w: j.widths(), h: self.h.cell_means(j), a: self.a.cell_means(j) })
    }

    fn lip_l1(&self) -> T {
        self.h.sup() + self.a.sup()
    }

    fn lip_h(&self) -> T {
        self.h.l2() + self.a.l2()
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_concave(&self) -> bool {
        matches!(self.a, SlopeProfile::Affine { a, b } if a == T::zero() && b == T::zero())
            || matches!(&self.a, SlopeProfile::Step(p) if p.steps().flat().iter().all(|v| *v == T::zero()))
    }
}

/// `ψ(μ) = log(1 + ⟨h, μ⟩)`, concave, `L^1`-Lipschitz with constant `sup h` (`D = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComposedConcave<T> {
    pub h: SlopeProfile<T>,
}

impl<T: Real> ComposedConcave<T> {
    pub fn new(h: SlopeProfile<T>) -> Result<Self> {
        h.validate()?;
        Ok(ComposedConcave { h })
    }
}

struct ComposedLevel<T> {
    wh: Vec<T>,
}

impl<T: Real> LevelFunction<T> for ComposedLevel<T> {
    fn value(&self, x: &[T]) -> T {
        let r: T = self.wh.iter().zip(x).map(|(&a, &b)| a * b).sum();
        r.ln_1p()
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let r: T = self.wh.iter().zip(x).map(|(&a, &b)| a * b).sum();
        self.wh.iter().map(|&a| a / (T::one() + r)).collect()
    }
}

impl<T: Real> InitialCondition<T> for ComposedConcave<T> {
    fn name(&self) -> &'static str {
        "composed_concave"
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        self.h.pair(mu).ln_1p()
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        let m = self.h.cell_means(j);
        Box::new(ComposedLevel { wh: (0..j.len()).map(|k| j.width(k) * m[k]).collect() })
    }

    fn lip_l1(&self) -> T {
        self.h.sup()
    }

    fn lip_h(&self) -> T {
        self.h.l2()
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn is_concave(&self) -> bool {
        true
    }

    /// For `ξ = β r²`: the optimal `y` is parallel to `h_j`, leaving a scalar
    /// problem in `s = ⟨h_j, y⟩` with root
    /// `s* = (-(1 + r0) + sqrt((1 + r0)² + 8 β t |h_j|²)) / 2`.
    fn hopf_lax_closed(&self, reg: &Regularization<T>, t: T, x: &ConePoint<T>) -> Option<T> {
        let beta = reg.model().pure_quadratic()?;
        let seam = reg.seam()?;
        if x.dim() != 1 {
            return None;
        }
        let j = x.partition();
        let hj = self.h.cell_means(j);
        let norm2: T = (0..j.len()).map(|k| j.width(k) * hj[k] * hj[k]).sum();
        let r0: T = (0..j.len()).map(|k| j.width(k) * hj[k] * x.flat()[k]).sum();
        if norm2 == T::zero() || t == T::zero() {
            return Some(r0.ln_1p() + t * reg.at(T::zero()));
        }
        let b = T::one() + r0;
        let four = lit::<T>(4.0);
        let s = (-b + (b * b + lit::<T>(8.0) * beta * t * norm2).sqrt()) * lit(0.5);
        // y_k / t must stay on the quadratic branch of ξ̄*
        let top = hj.iter().copied().fold(T::zero(), T::max) * s / (t * norm2);
        if top > lit::<T>(2.0) * beta * seam {
            return None;
        }
        Some((r0 + s).ln_1p() - s * s / (four * beta * t * norm2))
    }
}

/// `ψ(μ) = φ(∫ μ)` with `φ` continuous piecewise linear and nondecreasing (`D = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct PiecewiseLinearMean<T> {
    pub value0: T,
    /// Interior kinks `0 < b_1 < ... < b_m`.
    pub breaks: Vec<T>,
    /// `m + 1` nonnegative slopes; the last continues to infinity.
    pub slopes: Vec<T>,
}

impl<T: Real> PiecewiseLinearMean<T> {
    pub fn new(value0: T, breaks: Vec<T>, slopes: Vec<T>) -> Result<Self> {
        if slopes.len() != breaks.len() + 1 {
            return Err(Error::InvalidInput("need one more slope than breaks".into()));
        }
        if slopes.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(Error::Precondition("slopes must be finite and nonnegative".into()));
        }
        if breaks.iter().any(|b| !(*b > T::zero())) || breaks.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("breaks must be positive and increasing".into()));
        }
        Ok(PiecewiseLinearMean { value0, breaks, slopes })
    }

    pub fn phi(&self, u: T) -> T {
        let mut v = self.value0;
        let mut left = T::zero();
        for (i, &s) in self.slopes.iter().enumerate() {
            let right = self.breaks.get(i).copied().unwrap_or(T::infinity());
            if u <= right {
                return v + s * (u - left);
            }
            v = v + s * (right - left);
            left = right;
        }
        v
    }

    pub fn phi_slope(&self, u: T) -> T {
        let i = self.breaks.iter().take_while(|&&b| b <= u).count();
        self.slopes[i]
    }
}

struct MeanLevel<'a, T> {
    w: Vec<T>,
    f: &'a PiecewiseLinearMean<T>,
}

impl<T: Real> LevelFunction<T> for MeanLevel<'_, T> {
    fn value(&self, x: &[T]) -> T {
        self.f.phi(self.w.iter().zip(x).map(|(&a, &b)| a * b).sum())
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let s = self.f.phi_slope(self.w.iter().zip(x).map(|(&a, &b)| a * b).sum());
        self.w.iter().map(|&a| a * s).collect()
    }
}

impl<T: Real> InitialCondition<T> for PiecewiseLinearMean<T> {
    fn name(&self) -> &'static str {
        "piecewise_linear_mean"
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        let j = mu.partition();
        self.phi((0..j.len()).map(|k| j.width(k) * mu.steps().flat()[k]).sum())
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        Box::new(MeanLevel { w: j.widths(), f: self })
    }

    fn lip_l1(&self) -> T {
        self.slopes.iter().copied().fold(T::zero(), T::max)
    }

    fn lip_h(&self) -> T {
        self.lip_l1()
    }

    fn is_convex(&self) -> bool {
        self.slopes.windows(2).all(|p| p[1] >= p[0])
    }

    fn is_concave(&self) -> bool {
        self.slopes.windows(2).all(|p| p[1] <= p[0])
    }
}

/// User table on the box lattice `[0, x_max]^n` over a fixed partition `j0`,
/// read through `p_{j0}` with multilinear interpolation (`D = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct Table<T> {
    pub partition: Partition<T>,
    pub x_max: T,
    pub steps: usize,
    /// Row-major values, first coordinate slowest.
    pub values: Vec<T>,
    #[serde(default)]
    pub convex: bool,
    #[serde(default)]
    pub concave: bool,
}

impl<T: Real> Table<T> {
    /// Validates the shape and runs a sampled pair scan for `C*`-monotonicity.
    pub fn new(partition: Partition<T>, x_max: T, steps: usize, values: Vec<T>) -> Result<Self> {
        let n = partition.len();
        let expect = (steps + 1).checked_pow(n as u32).filter(|&c| c <= 1 << 22);
        if steps == 0 || expect != Some(values.len()) {
            return Err(Error::DimensionMismatch("table size must be (steps + 1)^|j|".into()));
        }
        if !(x_max > T::zero()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table needs x_max > 0 and finite values".into()));
        }
        let t = Table { partition, x_max, steps, values, convex: false, concave: false };
        if let Some((a, b)) = sampled_dual_increasing_scan(&t, 2000, 7) {
            return Err(Error::Precondition(format!(
                "table is not C*-increasing: x = {:?} dominates x' = {:?}",
                a.flat(),
                b.flat()
            )));
        }
        Ok(t)
    }

    fn interp(&self, x: &[T]) -> T {
        let n = x.len();
        let h = self.x_max / T::from_usize_lossy(self.steps);
        let mut base = vec![0usize; n];
        let mut frac = vec![T::zero(); n];
        for k in 0..n {
            let u = (x[k].max(T::zero()).min(self.x_max)) / h;
            let i = u.floor().to_f64_lossy() as usize;
            let i = i.min(self.steps - 1);
            base[k] = i;
            frac[k] = u - T::from_usize_lossy(i);
        }
        let mut total = T::zero();
        for corner in 0..(1usize << n) {
            let mut idx = 0;
            let mut wgt = T::one();
            for k in 0..n {
                let up = (corner >> k) & 1;
                idx = idx * (self.steps + 1) + base[k] + up;
                wgt = wgt * if up == 1 { frac[k] } else { T::one() - frac[k] };
            }
            total = total + wgt * self.values[idx];
        }
        total
    }

    /// Largest forward-difference density, a Lipschitz estimate in `ℓ∞` density.
    fn slope_estimate(&self) -> T {
        let n = self.partition.len();
        let h = self.x_max / T::from_usize_lossy(self.steps);
        let mut best = T::zero();
        let stride: Vec<usize> = (0..n).map(|k| (self.steps + 1).pow((n - 1 - k) as u32)).collect();
        for (i, &v) in self.values.iter().enumerate() {
            for k in 0..n {
                if (i / stride[k]) % (self.steps + 1) < self.steps {
                    best = best.max((self.values[i + stride[k]] - v).abs() / (h * self.partition.width(k)));
                }
            }
        }
        best
    }
}

struct TableLevel<'a, T> {
    table: &'a Table<T>,
    j: Partition<T>,
}

impl<T: Real> LevelFunction<T> for TableLevel<'_, T> {
    fn value(&self, x: &[T]) -> T {
        let p = ConePoint::from_flat(self.j.clone(), 1, x.to_vec());
        let q = project_pj(&lift_lj(&p), &self.table.partition);
        self.table.interp(q.flat())
    }
}

impl<T: Real> InitialCondition<T> for Table<T> {
    fn name(&self) -> &'static str {
        "table"
    }

    fn eval_path(&self, mu: &StepPath<T>) -> T {
        self.table_at(mu)
    }

    fn at_level<'a>(&'a self, j: &Partition<T>) -> Box<dyn LevelFunction<T> + 'a> {
        Box::new(TableLevel { table: self, j: j.clone() })
    }

    fn lip_l1(&self) -> T {
        self.slope_estimate()
    }

    fn lip_h(&self) -> T {
        self.slope_estimate()
    }

    fn is_convex(&self) -> bool {
        self.convex
    }

    fn is_concave(&self) -> bool {
        self.concave
    }
}

impl<T: Real> Table<T> {
    fn table_at(&self, mu: &StepPath<T>) -> T {
        self.interp(project_pj(mu, &self.partition).flat())
    }
}

/// Samples ordered pairs `x - x' ∈ (C^j)*` in `C^j` and returns the first pair
/// with `ψ(x) < ψ(x')`.
pub fn sampled_dual_increasing_scan<T: Real>(
    psi: &dyn InitialCondition<T>,
    samples: usize,
    seed: u64,
) -> Option<(ConePoint<T>, ConePoint<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + rng.gen_range(0..4usize);
    let j = Partition::uniform(n).ok()?;
    let scale = lit::<T>(2.0);
    for _ in 0..samples {
        let mut base: Vec<T> = (0..n).map(|_| scale * T::lit(rng.gen::<f64>())).collect();
        base.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // x' + (a nonnegative nondecreasing bump is in C ⊂ C*), or a tail-mass shift
        let mut bump: Vec<T> = (0..n).map(|_| lit::<T>(0.5) * T::lit(rng.gen::<f64>())).collect();
        if rng.gen_bool(0.5) {
            bump.sort_by(|a, b| a.partial_cmp(b).unwrap());
        } else {
            // move mass from an earlier cell to a later one: tail sums stay >= 0
            bump = vec![T::zero(); n];
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let (lo, hi) = (a.min(b), a.max(b));
            let m = lit::<T>(0.3) * T::lit(rng.gen::<f64>());
            bump[hi] = bump[hi] + m;
            bump[lo] = bump[lo] - m;
        }
        let upper: Vec<T> = base.iter().zip(&bump).map(|(&a, &b)| a + b).collect();
        let xp = ConePoint::from_scalars(j.clone(), &base).ok()?;
        let x = ConePoint::from_scalars(j.clone(), &upper).ok()?;
        if !x.is_in_cone(None) {
            continue;
        }
        let (fx, fxp) = (psi.eval(&x), psi.eval(&xp));
        if fx < fxp - T::tol(fxp) * lit(1e-3) {
            return Some((x, xp));
        }
    }
    None
}

/// Scalar step path checked to lie in `C`.
pub fn cone_step_path<T: Real>(j: Partition<T>, values: &[T]) -> Result<StepPath<T>> {
    StepPath::with_role(ConePoint::from_scalars(j, values)?, PathRole::Cone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::CovarianceModel;

    fn j(n: usize) -> Partition<f64> {
        Partition::uniform(n).unwrap()
    }

    #[test]
    fn max_affine_conjugate_matches_grid_sup() {
        let psi = MaxAffine::new(vec![
            (cone_step_path(j(2), &[0.1, 0.7]).unwrap(), 0.2),
            (cone_step_path(j(2), &[0.5, 0.6]).unwrap(), -0.1),
            (cone_step_path(j(2), &[0.0, 0.9]).unwrap(), 0.0),
        ])
        .unwrap();
        let level = psi.at_level(&j(2));
        // the sup over C^2 is attained on the box for these z (the gaps are piecewise linear)
        let grid = |z: &[f64]| {
            let mut best = f64::NEG_INFINITY;
            for a in 0..=400 {
                for b in a..=400 {
                    let x = [a as f64 * 0.05, b as f64 * 0.05];
                    best = best.max(0.5 * (x[0] * z[0] + x[1] * z[1]) - level.value(&x));
                }
            }
            best
        };
        for z in [[0.2, 0.6], [0.3, 0.65], [0.0, 0.8], [0.45, 0.45], [0.1, 0.1]] {
            let c = level.monotone_conjugate(&z).unwrap();
            assert!(c.is_finite(), "{z:?}");
            assert!((c - grid(&z)).abs() < 1e-9, "{z:?}: {c} vs {}", grid(&z));
        }
        // the tail sum of z beats every slope: unbounded along (0, 1)
        assert_eq!(level.monotone_conjugate(&[0.0, 1.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn level_values_match_paths() {
        let mu = cone_step_path(Partition::from_breaks(vec![0.3, 0.8, 1.0]).unwrap(), &[0.2, 0.5, 1.4]).unwrap();
        let h = cone_step_path(j(2), &[0.1, 0.6]).unwrap();
        let fams: Vec<Box<dyn InitialCondition<f64>>> = vec![
            Box::new(Linear::new(h.clone()).unwrap()),
            Box::new(
                SeparableConvex::new(SlopeProfile::Step(h.clone()), SlopeProfile::Affine { a: 0.1, b: 0.5 }).unwrap(),
            ),
            Box::new(ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap()),
            Box::new(PiecewiseLinearMean::new(0.0, vec![0.5], vec![1.0, 0.3]).unwrap()),
        ];
        // ψ^j(x) = ψ(l_j x) on the path's own partition
        for f in &fams {
            let direct = f.eval_path(&mu);
            let level = f.eval(mu.steps());
            assert!((direct - level).abs() < 1e-14, "{}: {direct} vs {level}", f.name());
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let h = cone_step_path(j(3), &[0.1, 0.6, 0.9]).unwrap();
        let sep = SeparableConvex::new(SlopeProfile::Step(h.clone()), SlopeProfile::Affine { a: 0.2, b: 0.5 }).unwrap();
        let cc = ComposedConcave::new(SlopeProfile::Step(h)).unwrap();
        let x = [0.3, 0.7, 1.9];
        for f in [&sep as &dyn InitialCondition<f64>, &cc] {
            let lv = f.at_level(&j(3));
            let g = lv.gradient(&x);
            for k in 0..3 {
                let mut y = x;
                y[k] += 1e-6;
                let mut z = x;
                z[k] -= 1e-6;
                let fd = (lv.value(&y) - lv.value(&z)) / 2e-6;
                assert!((g[k] - fd).abs() < 1e-8, "{} {k}", f.name());
            }
        }
    }

    #[test]
    fn separable_conjugate_matches_grid_search() {
        let h = cone_step_path(j(2), &[0.1, 0.4]).unwrap();
        let a = cone_step_path(j(2), &[0.3, 0.5]).unwrap();
        let f = SeparableConvex::new(SlopeProfile::Step(h), SlopeProfile::Step(a)).unwrap();
        let lv = f.at_level(&j(2));
        for z in [[0.2, 0.5], [0.5, 0.6], [0.05, 0.3], [0.35, 0.85], [0.9, 0.5]] {
            let exact = lv.monotone_conjugate(&z).unwrap();
            let mut brute = f64::NEG_INFINITY;
            for i in 0..=1500 {
                for k in i..=1500 {
                    let x = [i as f64 * 0.02, k as f64 * 0.02];
                    brute = brute.max(0.5 * (x[0] * z[0] + x[1] * z[1]) - lv.value(&x));
                }
            }
            if exact.is_finite() {
                assert!((exact - brute).abs() < 2e-3, "{z:?}: {exact} vs {brute}");
            } else {
                assert!(brute > 1.0, "{z:?}: {brute}");
            }
        }
    }

    #[test]
    fn composed_closed_form_is_stationary() {
        let reg = Regularization::new(CovarianceModel::<f64>::quadratic(0.5).unwrap()).unwrap();
        let f = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let x = ConePoint::from_scalars(j(2), &[0.2, 0.9]).unwrap();
        let t = 0.7;
        let v = f.hopf_lax_closed(&reg, t, &x).unwrap();
        // the closed form dominates nearby feasible y
        let lv = f.at_level(&j(2));
        let obj =
            |y: [f64; 2]| lv.value(&[0.2 + y[0], 0.9 + y[1]]) - t * 0.5 * (y[0] * y[0] + y[1] * y[1]) / (2.0 * t * t);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=300 {
            for k in i..=300 {
                best = best.max(obj([i as f64 * 0.002, k as f64 * 0.002]));
            }
        }
        assert!(v >= best - 1e-12 && v - best < 1e-5, "{v} vs {best}");
    }

    #[test]
    fn tables_reject_decreasing_data() {
        let p = j(1);
        assert!(Table::new(p.clone(), 1.0, 2, vec![0.0, 0.5, 0.7]).is_ok());
        assert!(Table::new(p, 1.0, 2, vec![0.0, -0.5, 0.7]).is_err());
    }

    #[test]
    fn families_pass_pair_scan() {
        let h = cone_step_path(j(2), &[0.1, 0.6]).unwrap();
        let sep = SeparableConvex::new(SlopeProfile::Step(h), SlopeProfile::Affine { a: 0.1, b: 0.2 }).unwrap();
        assert!(sampled_dual_increasing_scan(&sep, 3000, 1).is_none());
        let pl = PiecewiseLinearMean::new(0.0, vec![1.0], vec![0.2, 1.0]).unwrap();
        assert!(sampled_dual_increasing_scan(&pl, 3000, 2).is_none());
    }
}
