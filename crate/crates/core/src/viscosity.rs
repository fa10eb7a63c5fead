//! Finite-difference oracle for `∂_t f = ξ̄(∂_x f)` with one cell (`D = 1`,
//! `|j| = 1`) and the penalized comparison functional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConePoint, Partition};
use crate::error::{Error, Result};
use crate::nonlinearity::{MatrixFunction, Regularization, ScalarProfile};
use crate::scalar::{lit, Real};
use crate::solvers::{InitialCondition, Provenance, SolutionSurface};

/// Largest slope of `ξ̄` on `[0, p]`.
pub fn max_slope_on<T: Real>(reg: &Regularization<T>, p: T) -> T {
    if reg.is_convex() {
        return reg.slope(p);
    }
    let n = 1000;
    (0..=n).map(|i| reg.slope(p * T::from_usize_lossy(i) / T::from_usize_lossy(n))).fold(T::zero(), T::max)
}

/// Uniform grid on `[0, X]` with an explicit time step.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct FdGrid<T> {
    pub x_max: T,
    pub dx: T,
    /// Largest time step; output times are hit exactly by shortening steps.
    pub dt: T,
    /// Slope cap `P`; the scheme assumes `0 <= ∂_x f <= P`.
    pub slope_cap: T,
    /// Lax-Friedrichs coefficient `α >= max ξ̄'` on `[0, P]`.
    pub alpha: T,
}

impl<T: Real> FdGrid<T> {
    /// CFL ratio `½`, `α = max ξ̄'` on `[0, P]`.
    pub fn new(reg: &Regularization<T>, slope_cap: T, x_max: T, dx: T) -> Result<Self> {
        if !(dx > T::zero()) || !(x_max > dx) || !(slope_cap >= T::zero()) {
            return Err(Error::InvalidInput("need 0 < dx < x_max and P >= 0".into()));
        }
        let alpha = max_slope_on(reg, slope_cap).max(T::epsilon());
        Ok(FdGrid { x_max, dx, dt: lit::<T>(0.5) * dx / alpha, slope_cap, alpha })
    }

    /// Domain `[0, R + V T + 1]` so that the comparison functional's cone of
    /// dependence on `[0, R]` never reaches the right edge.
    pub fn for_horizon(reg: &Regularization<T>, slope_cap: T, r: T, horizon: T, dx: T) -> Result<Self> {
        let v = max_slope_on(reg, slope_cap);
        let x_max = r + v * horizon + T::one();
        let cells = (x_max / dx).ceil();
        Self::new(reg, slope_cap, cells * dx, dx)
    }

    pub fn nodes(&self) -> usize {
        (self.x_max / self.dx).round().to_usize().expect("finite grid") + 1
    }

    pub fn x(&self, i: usize) -> T {
        self.dx * T::from_usize_lossy(i)
    }

    pub fn cfl(&self) -> T {
        self.dt * self.alpha / self.dx
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct FdSolution<T> {
    /// Samples are the grid nodes, as one-cell cone points.
    pub surface: SolutionSurface<T>,
    pub steps: usize,
    /// Worst `f_i - f_{i+1}` over all steps (monotonicity, should be `<= 0`).
    pub monotone_violation: T,
    /// Worst `(f_{i+1} - f_i) / Δx - P` over all steps.
    pub slope_excess: T,
}

/// One explicit Lax-Friedrichs step. `x = 0` uses the forward difference
/// (characteristics leave the domain there); the right ghost extends with the
/// last slope clipped to `[0, P]`.
fn lf_step<T: Real>(f: &[T], out: &mut [T], reg: &Regularization<T>, g: &FdGrid<T>, dt: T) {
    let n = f.len();
    let half = lit::<T>(0.5);
    let last = ((f[n - 1] - f[n - 2]) / g.dx).max(T::zero()).min(g.slope_cap);
    let ghost = f[n - 1] + last * g.dx;
    out[0] = f[0] + dt * reg.at(((f[1] - f[0]) / g.dx).max(T::zero()));
    for i in 1..n {
        let right = if i + 1 < n { f[i + 1] } else { ghost };
        let pp = (right - f[i]) / g.dx;
        let pm = (f[i] - f[i - 1]) / g.dx;
        let avg = (half * (pp + pm)).max(T::zero());
        out[i] = f[i] + dt * (reg.at(avg) + half * g.alpha * (pp - pm));
    }
}

/// Tabulates the one-cell solution at `times` (ascending, starting at 0 or later).
pub fn fd_solve<T: Real>(
    psi: &dyn InitialCondition<T>,
    reg: &Regularization<T>,
    grid: &FdGrid<T>,
    times: &[T],
) -> Result<FdSolution<T>> {
    if psi.dim() != 1 || MatrixFunction::dim(reg) != 1 {
        return Err(Error::Unsupported("the finite-difference oracle is scalar".into()));
    }
    if grid.cfl() > lit::<T>(0.5) * (T::one() + T::epsilon().sqrt()) {
        return Err(Error::InvalidInput(format!("CFL ratio {} exceeds 1/2", grid.cfl())));
    }
    if grid.alpha < max_slope_on(reg, grid.slope_cap) * (T::one() - T::epsilon().sqrt()) {
        return Err(Error::InvalidInput("α is below max ξ̄' on [0, P]".into()));
    }
    if psi.lip_l1() > grid.slope_cap * (T::one() + T::epsilon().sqrt()) {
        return Err(Error::Precondition("ψ is steeper than the slope cap".into()));
    }
    if times.is_empty() || times[0] < T::zero() || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("times must be nonnegative and ascending".into()));
    }
    let j = Partition::uniform(1)?;
    let n = grid.nodes();
    if n < 3 {
        return Err(Error::InvalidInput("grid needs at least three nodes".into()));
    }
    let level = psi.at_level(&j);
    let mut f: Vec<T> = (0..n).map(|i| level.value(&[grid.x(i)])).collect();
    let mut next = f.clone();
    let mut now = T::zero();
    let mut steps = 0;
    let mut mono = T::neg_infinity();
    let mut excess = T::neg_infinity();
    let mut audit = |f: &[T]| {
        for w in f.windows(2) {
            mono = mono.max(w[0] - w[1]);
            excess = excess.max((w[1] - w[0]) / grid.dx - grid.slope_cap);
        }
    };
    audit(&f);
    let mut values = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - now;
        if span > T::zero() {
            let k = (span / grid.dt).ceil().to_usize().expect("finite step count").max(1);
            let dt = span / T::from_usize_lossy(k);
            for _ in 0..k {
                lf_step(&f, &mut next, reg, grid, dt);
                std::mem::swap(&mut f, &mut next);
                audit(&f);
            }
            steps += k;
            now = target;
        }
        values.push(f.clone());
    }
    let samples = (0..n).map(|i| ConePoint::from_scalars(j.clone(), &[grid.x(i)])).collect::<Result<Vec<_>>>()?;
    Ok(FdSolution {
        surface: SolutionSurface {
            partition: j,
            times: times.to_vec(),
            samples,
            values,
            provenance: Provenance::FdOracle,
            stats: Vec::new(),
        },
        steps,
        monotone_violation: mono,
        slope_excess: excess,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct ComparisonParams<T> {
    /// Common spatial Lipschitz bound `L` of `u` and `v`.
    pub lip: T,
    /// Penalty slope; defaults to `2.5 L` (must exceed `2L`).
    #[serde(default)]
    pub m: Option<T>,
    pub r: T,
    pub tol: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComparisonReport<T> {
    #[serde(rename = "M")]
    pub m: T,
    #[serde(rename = "R")]
    pub r: T,
    #[serde(rename = "V")]
    pub v: T,
    pub t_star: T,
    /// Index into the shared sample list.
    pub x_star: usize,
    pub sup_initial: T,
    pub sup_later: T,
    pub margin: T,
    pub tol: T,
    pub pass: bool,
}

/// Sup of `u - v - M(|x| + V t - R)_+` over the common grid. `margin` is the
/// global sup minus the sup at `t = 0` (so never negative); the reported argmax
/// is moved to `t = 0` whenever `margin <= tol`.
pub fn comparison_check<T: Real>(
    u: &SolutionSurface<T>,
    v: &SolutionSurface<T>,
    reg: &Regularization<T>,
    params: &ComparisonParams<T>,
) -> Result<ComparisonReport<T>> {
    if u.times.len() != v.times.len()
        || u.samples.len() != v.samples.len()
        || u.times.iter().zip(&v.times).any(|(a, b)| (*a - *b).abs() > T::tol(*a))
        || u.samples.iter().zip(&v.samples).any(|(a, b)| a != b)
    {
        return Err(Error::InvalidInput("u and v are not tabulated on a common grid".into()));
    }
    if u.times.first().map_or(true, |&t| t != T::zero()) {
        return Err(Error::InvalidInput("the grid must include t = 0".into()));
    }
    let l = params.lip;
    let m = params.m.unwrap_or(lit::<T>(2.5) * l.max(lit(0.4)));
    if !(m > lit::<T>(2.0) * l) {
        return Err(Error::InvalidInput("M must exceed 2L".into()));
    }
    // Lipschitz constant of ξ̄ on the ball of radius 2L + 3M
    let vel = max_slope_on(reg, lit::<T>(2.0) * l + lit::<T>(3.0) * m);
    let norms: Vec<T> = u.samples.iter().map(|x| x.norm()).collect();
    let best_row = |i: usize| -> (T, usize) {
        let t = u.times[i];
        let mut best = (T::neg_infinity(), 0);
        for s in 0..norms.len() {
            let pen = (norms[s] + vel * t - params.r).max(T::zero());
            let phi = u.values[i][s] - v.values[i][s] - m * pen;
            if phi > best.0 {
                best = (phi, s);
            }
        }
        best
    };
    let rows: Vec<(T, usize)> = (0..u.times.len()).into_par_iter().map(best_row).collect();
    let initial = rows[0];
    let mut later = (T::neg_infinity(), 0, 0);
    for (i, r) in rows.iter().enumerate().skip(1) {
        if r.0 > later.0 {
            later = (r.0, r.1, i);
        }
    }
    let margin = (later.0 - initial.0).max(T::zero());
    let pass = margin <= params.tol;
    let (t_star, x_star) = if pass { (T::zero(), initial.1) } else { (u.times[later.2], later.1) };
    Ok(ComparisonReport {
        m,
        r: params.r,
        v: vel,
        t_star,
        x_star,
        sup_initial: initial.0,
        sup_later: later.0,
        margin,
        tol: params.tol,
        pass,
    })
}

/// Largest decrease `f(t_i) - f(t_{i+1})` over the surface (`<= 0` when
/// `f` is nondecreasing in time).
pub fn time_monotone_violation<T: Real>(s: &SolutionSurface<T>) -> T {
    let mut worst = T::neg_infinity();
    for w in s.values.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            worst = worst.max(*a - *b);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::CovarianceModel;
    use crate::solvers::{ComposedConcave, PiecewiseLinearMean, SlopeProfile};

    fn sq() -> Regularization<f64> {
        Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap()
    }

    #[test]
    fn constant_moves_by_xi_at_zero() {
        let reg = Regularization::new(CovarianceModel::poly(&[(0, 0.3), (2, 1.0)]).unwrap()).unwrap();
        let psi = PiecewiseLinearMean::new(1.5, vec![], vec![0.0]).unwrap();
        let g = FdGrid::new(&reg, 0.5, 3.0, 0.01).unwrap();
        let s = fd_solve(&psi, &reg, &g, &[0.0, 0.5, 1.0]).unwrap();
        for (i, &t) in s.surface.times.iter().enumerate() {
            for &v in &s.surface.values[i] {
                assert!((v - (1.5 + 0.3 * t) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_datum_is_exact_inside() {
        let reg = sq();
        let h = 0.7;
        let psi = PiecewiseLinearMean::new(0.0, vec![], vec![h]).unwrap();
        let g = FdGrid::new(&reg, 1.0, 4.0, 1.0 / 200.0).unwrap();
        let s = fd_solve(&psi, &reg, &g, &[1.0]).unwrap();
        for i in 0..g.nodes() / 2 {
            let exact = h * g.x(i) + h * h;
            assert!((s.surface.values[0][i] - exact).abs() < 1e-10);
        }
        assert!(s.monotone_violation <= 1e-12 && s.slope_excess <= 1e-12);
    }

    #[test]
    fn rejects_cfl_violation() {
        let reg = sq();
        let mut g = FdGrid::new(&reg, 1.0, 2.0, 0.01).unwrap();
        g.dt *= 1.5;
        let psi = PiecewiseLinearMean::new(0.0, vec![], vec![1.0]).unwrap();
        assert!(matches!(fd_solve(&psi, &reg, &g, &[0.1]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn first_order_on_smooth_datum() {
        let reg = sq();
        let psi = ComposedConcave::new(SlopeProfile::Affine { a: 0.0, b: 1.0 }).unwrap();
        let gap = |dx: f64| {
            let g = FdGrid::for_horizon(&reg, 1.0, 1.0, 1.0, dx).unwrap();
            let s = fd_solve(&psi, &reg, &g, &[1.0]).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..g.nodes() {
                if g.x(i) > 1.0 {
                    break;
                }
                let x = ConePoint::from_scalars(Partition::uniform(1).unwrap(), &[g.x(i)]).unwrap();
                let exact = crate::solvers::hopf_lax(&psi, &reg, 1.0, &x).unwrap().value;
                worst = worst.max((s.surface.values[0][i] - exact).abs());
            }
            worst
        };
        let (a, b) = (gap(1.0 / 100.0), gap(1.0 / 200.0));
        assert!(a < 0.05 && (1.5..=3.0).contains(&(a / b)), "{a} {b}");
    }

    fn surface(values: Vec<Vec<f64>>) -> SolutionSurface<f64> {
        let j = Partition::uniform(1).unwrap();
        let n = values[0].len();
        SolutionSurface {
            partition: j.clone(),
            times: (0..values.len()).map(|i| i as f64 * 0.5).collect(),
            samples: (0..n).map(|i| ConePoint::from_scalars(j.clone(), &[i as f64 * 0.1]).unwrap()).collect(),
            values,
            provenance: Provenance::FdOracle,
            stats: vec![],
        }
    }

    #[test]
    fn equal_surfaces_tie_at_time_zero() {
        let u = surface(vec![vec![0.0, 0.1, 0.2], vec![0.3, 0.4, 0.5], vec![0.6, 0.7, 0.8]]);
        let p = ComparisonParams { lip: 1.0, m: None, r: 1.0, tol: 0.0 };
        let r = comparison_check(&u, &u, &sq(), &p).unwrap();
        assert_eq!(r.margin, 0.0);
        assert_eq!(r.t_star, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn time_growing_gap_fails() {
        let u = surface(vec![vec![0.0, 0.1, 0.2], vec![0.3, 0.4, 0.5], vec![0.6, 0.7, 0.8]]);
        let mut v = u.clone();
        for (i, row) in v.values.iter_mut().enumerate() {
            for x in row {
                *x -= 0.2 * i as f64 * 0.5;
            }
        }
        let p = ComparisonParams { lip: 1.0, m: None, r: 10.0, tol: 1e-6 };
        let r = comparison_check(&u, &v, &sq(), &p).unwrap();
        assert!(!r.pass && (r.margin - 0.2).abs() < 1e-12 && r.t_star == 1.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let u = surface(vec![vec![0.0, 0.1], vec![0.3, 0.4]]);
        let v = surface(vec![vec![0.0, 0.1, 0.2], vec![0.3, 0.4, 0.5]]);
        let p = ComparisonParams { lip: 1.0, m: None, r: 1.0, tol: 0.0 };
        assert!(comparison_check(&u, &v, &sq(), &p).is_err());
    }
}
