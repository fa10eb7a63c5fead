//! Maximization over `{y ∈ C^j : y_n <= cap}` for `D = 1`, shared by the
//! variational formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Route;
use crate::cone::{project_monotone_box, Partition};
use crate::optim::{
    cumulative, differences, lattice_increments, maximize_on_cone, pattern_search_with, scan_max_1d, zoom_max,
    AscentOptions,
};
use crate::scalar::{lit, Real};

pub(crate) struct Found<T> {
    pub y: Vec<T>,
    pub value: T,
    pub evals: usize,
    pub residual: T,
    pub route: Route,
    pub converged: bool,
}

pub(crate) struct Problem<'a, T> {
    pub j: &'a Partition<T>,
    /// `-inf` outside the domain.
    pub value: &'a (dyn Fn(&[T]) -> T + Sync),
    /// Euclidean gradient; required for the ascent routes.
    pub grad: Option<&'a (dyn Fn(&[T]) -> Vec<T> + Sync)>,
    pub concave: bool,
    pub start: Vec<T>,
    pub cap: T,
    pub multistart: usize,
    pub seed: u64,
}

/// `|P(y + ∇f / w) - y|` in the `H^j` norm, zero at a constrained maximizer.
fn gradient_mapping<T: Real>(p: &Problem<'_, T>, y: &[T]) -> T {
    let Some(grad) = p.grad else { return T::nan() };
    let w = p.j.widths();
    let g = grad(y);
    let step: Vec<T> = y.iter().zip(&g).zip(&w).map(|((&a, &b), &wk)| a + b / wk).collect();
    let proj = project_monotone_box(&step, &w, Some(p.cap));
    proj.iter().zip(y).zip(&w).map(|((&a, &b), &wk)| wk * (a - b) * (a - b)).sum::<T>().sqrt()
}

fn ascend<T: Real>(p: &Problem<'_, T>, start: &[T]) -> (Vec<T>, T, usize, bool) {
    let grad = p.grad.expect("ascent needs a gradient");
    let r = maximize_on_cone(
        p.j,
        1,
        start,
        |y: &[T]| {
            let v = (p.value)(y);
            if !v.is_finite() {
                return (v, vec![T::zero(); y.len()]);
            }
            (v, grad(y))
        },
        &AscentOptions { max_iter: 5000, rel_tol: lit(1e-12), cap: Some(p.cap) },
    );
    (r.x, r.value, r.iterations, r.converged)
}

/// Extra pattern-search moves that shift mass between neighbouring cells while
/// keeping the weighted sums of all other tails fixed.
fn tail_moves<T: Real>(j: &Partition<T>) -> Vec<Vec<T>> {
    let n = j.len();
    (0..n.saturating_sub(1))
        .map(|i| {
            let mut u = vec![T::zero(); n];
            u[i] = T::one() / j.width(i);
            u[i + 1] = -T::one() / j.width(i + 1);
            let scale = u.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            differences(&u.iter().map(|&v| v / scale).collect::<Vec<_>>(), 1)
        })
        .collect()
}

pub(crate) fn maximize<T: Real>(p: &Problem<'_, T>) -> Found<T> {
    let n = p.j.len();
    let start = project_monotone_box(&p.start, &p.j.widths(), Some(p.cap));
    if p.cap <= T::zero() {
        let y = vec![T::zero(); n];
        let value = (p.value)(&y);
        return Found { y, value, evals: 1, residual: T::zero(), route: Route::Ascent, converged: true };
    }
    if p.concave && p.grad.is_some() {
        let (y, value, it, converged) = ascend(p, &start);
        let residual = gradient_mapping(p, &y);
        return Found { y, value, evals: it, residual, route: Route::Ascent, converged };
    }
    if n == 1 {
        let f = |s: T| (p.value)(&[s]);
        let (s, value) = scan_max_1d(&f, T::zero(), p.cap, 20_000, &[start[0]]);
        let residual = p.cap / lit(20_000.0);
        return Found { y: vec![s], value, evals: 20_100, residual, route: Route::Scan, converged: true };
    }
    if n <= 4 {
        return lattice_route(p, &start);
    }
    multistart_route(p, &start)
}

fn lattice_route<T: Real>(p: &Problem<'_, T>, start: &[T]) -> Found<T> {
    let n = p.j.len();
    let per_axis = match n {
        2 => 160,
        3 => 36,
        _ => 14,
    };
    let g = |d: &[T]| (p.value)(&cumulative(d, 1));
    let mut best = differences(start, 1);
    let mut fbest = g(&best);
    let mut evals = 1;
    for d in lattice_increments(n, per_axis, p.cap) {
        let v = g(&d);
        evals += 1;
        if v > fbest {
            fbest = v;
            best = d;
        }
    }
    let h = p.cap / T::from_usize_lossy(per_axis);
    let m = if n == 2 { 8 } else { 3 };
    let tiny = T::epsilon().sqrt() * lit::<T>(1e-3) * (T::one() + p.cap);
    let (d, _, e1) = zoom_max(
        &|d: &[T]| if d.iter().copied().sum::<T>() > p.cap { T::neg_infinity() } else { g(d) },
        &best,
        h * lit(2.0),
        m,
        tiny,
    );
    let moves = tail_moves(p.j);
    let (d, value, e2) =
        pattern_search_with(&g, &d, h, T::epsilon() * (T::one() + p.cap), Some(p.cap), 400_000, &moves);
    let mut y = cumulative(&d, 1);
    let mut value = value;
    let mut converged = e2 < 400_000;
    let mut extra = 0;
    // a concave-side polish when a gradient is available
    if p.grad.is_some() {
        let (y2, v2, it, c2) = ascend(p, &y);
        extra = it;
        if v2 > value {
            y = y2;
            value = v2;
            converged = c2;
        }
    }
    Found {
        y,
        value,
        evals: evals + e1 + e2 + extra,
        residual: T::epsilon() * (T::one() + p.cap),
        route: Route::Lattice,
        converged,
    }
}

fn multistart_route<T: Real>(p: &Problem<'_, T>, start: &[T]) -> Found<T> {
    let n = p.j.len();
    let w = p.j.widths();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut starts = vec![start.to_vec(), vec![T::zero(); n]];
    while starts.len() < p.multistart.max(2) {
        let mut y: Vec<T> = (0..n).map(|_| p.cap * T::lit(rng.gen::<f64>())).collect();
        y.sort_by(|a, b| a.partial_cmp(b).unwrap());
        starts.push(project_monotone_box(&y, &w, Some(p.cap)));
    }
    let mut best: Option<(Vec<T>, T, bool)> = None;
    let mut values = Vec::new();
    let mut evals = 0;
    for s in &starts {
        let (y, v, it, c) = if p.grad.is_some() {
            ascend(p, s)
        } else {
            let g = |d: &[T]| (p.value)(&cumulative(d, 1));
            let (d, v, e) = pattern_search_with(
                &g,
                &differences(s, 1),
                p.cap * lit(0.1),
                T::epsilon() * (T::one() + p.cap),
                Some(p.cap),
                100_000,
                &[],
            );
            (cumulative(&d, 1), v, e, e < 100_000)
        };
        evals += it;
        values.push(v);
        if best.as_ref().map_or(true, |b| v > b.1) {
            best = Some((y, v, c));
        }
    }
    let (y, value, converged) = best.expect("at least two starts");
    // spread between the two best local values, a crude certificate
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let spread = if values.len() > 1 && values[1].is_finite() { values[0] - values[1] } else { T::zero() };
    Found { y, value, evals, residual: spread, route: Route::Multistart, converged }
}
