//! Small optimizers over `C^j`: accelerated projected gradient, pattern search,
//! lattice search and golden section.

use crate::cone::{project_monotone_box, Partition};
use crate::linalg::SymMatrix;
use crate::scalar::{lit, Real};

#[derive(Clone, Debug)]
pub struct AscentOptions<T> {
    pub max_iter: usize,
    pub rel_tol: T,
    /// Upper bound on the last coordinate (`D = 1` only).
    pub cap: Option<T>,
}

impl<T: Real> Default for AscentOptions<T> {
    fn default() -> Self {
        AscentOptions { max_iter: 500, rel_tol: lit(1e-9), cap: None }
    }
}

#[derive(Clone, Debug)]
pub struct AscentResult<T> {
    /// Flat coordinates of the maximizer.
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Running sums of increments, `x_k = d_1 + ... + d_k` per matrix entry.
pub fn cumulative<T: Real>(d: &[T], block: usize) -> Vec<T> {
    let mut x = d.to_vec();
    for i in block..x.len() {
        x[i] = x[i] + x[i - block];
    }
    x
}

pub fn differences<T: Real>(x: &[T], block: usize) -> Vec<T> {
    let mut d = x.to_vec();
    for i in (block..x.len()).rev() {
        d[i] = d[i] - x[i - block];
    }
    d
}

/// Gradient with respect to increments from the gradient with respect to `x`.
fn tail_accumulate<T: Real>(g: &[T], block: usize) -> Vec<T> {
    let mut out = g.to_vec();
    let n = g.len() / block;
    for k in (0..n.saturating_sub(1)).rev() {
        for e in 0..block {
            out[k * block + e] = out[k * block + e] + out[(k + 1) * block + e];
        }
    }
    out
}

fn project_psd_blocks<T: Real>(d: &mut [T], dim: usize) {
    let block = dim * dim;
    for c in d.chunks_mut(block) {
        if dim == 1 {
            c[0] = c[0].max(T::zero());
        } else {
            let m = SymMatrix::from_rows(&c.chunks(dim).map(|r| r.to_vec()).collect::<Vec<_>>())
                .expect("symmetric block")
                .psd_part();
            c.copy_from_slice(m.as_slice());
        }
    }
}

/// Projection onto `C^j` (and the cap box when `D = 1`).
///
/// For `D = 1` this is the weighted isotonic projection; for `D > 1` increments
/// are clipped to the PSD cone, which is a projection in increment coordinates.
pub fn project_cone<T: Real>(x: &[T], j: &Partition<T>, dim: usize, cap: Option<T>) -> Vec<T> {
    if dim == 1 {
        return project_monotone_box(x, &j.widths(), cap);
    }
    let block = dim * dim;
    let mut d = differences(x, block);
    project_psd_blocks(&mut d, dim);
    cumulative(&d, block)
}

/// Maximizes a smooth objective over `C^j` by accelerated projected gradient ascent.
///
/// `f` returns the value and the Euclidean gradient in flat coordinates; a
/// non-finite value marks a point outside the domain. For `D = 1` the ascent runs
/// in the `H^j` metric, for `D > 1` in increment coordinates.
pub fn maximize_on_cone<T: Real, F>(
    j: &Partition<T>,
    dim: usize,
    x0: &[T],
    f: F,
    opts: &AscentOptions<T>,
) -> AscentResult<T>
where
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let block = dim * dim;
    let widths = j.widths();
    // state in working coordinates: x for D = 1, increments for D > 1
    let to_x = |u: &[T]| if dim == 1 { u.to_vec() } else { cumulative(u, block) };
    let project = |u: &[T]| -> Vec<T> {
        if dim == 1 {
            project_monotone_box(u, &widths, opts.cap)
        } else {
            let mut v = u.to_vec();
            project_psd_blocks(&mut v, dim);
            v
        }
    };
    let metric = |k: usize| if dim == 1 { widths[k] } else { T::one() };
    let eval = |u: &[T]| -> (T, Vec<T>) {
        let (v, g) = f(&to_x(u));
        if !v.is_finite() {
            return (v, g);
        }
        let g =
            if dim == 1 { g.iter().zip(&widths).map(|(&gi, &w)| gi / w).collect() } else { tail_accumulate(&g, block) };
        (v, g)
    };
    let dot =
        |a: &[T], b: &[T]| -> T { a.iter().zip(b).enumerate().map(|(i, (&x, &y))| metric(i / block) * x * y).sum() };

    let start = if dim == 1 { project(x0) } else { project(&differences(x0, block)) };
    let mut u = start;
    let (mut fu, _) = eval(&u);
    if !fu.is_finite() {
        let z = vec![T::zero(); u.len()];
        u = z;
        fu = eval(&u).0;
    }
    let mut u_prev = u.clone();
    let mut step = T::one();
    let mut theta = T::one();
    let mut converged = false;
    let mut quiet = 0;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let theta_next = (T::one() + (T::one() + lit::<T>(4.0) * theta * theta).sqrt()) * lit(0.5);
        let beta = (theta - T::one()) / theta_next;
        let mut y: Vec<T> = u.iter().zip(&u_prev).map(|(&a, &b)| a + beta * (a - b)).collect();
        if dim == 1 && opts.cap.is_some() {
            y = project(&y);
        }
        let (mut fy, mut gy) = eval(&y);
        if !fy.is_finite() {
            y = u.clone();
            let e = eval(&y);
            fy = e.0;
            gy = e.1;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project(&y.iter().zip(&gy).map(|(&a, &g)| a + step * g).collect::<Vec<_>>());
            let (fc, _) = eval(&cand);
            let diff: Vec<T> = cand.iter().zip(&y).map(|(&a, &b)| a - b).collect();
            let model = fy + dot(&gy, &diff) - dot(&diff, &diff) / (lit::<T>(2.0) * step);
            if fc.is_finite() && fc >= model - T::tol(fy) * lit(1e-3) {
                accepted = Some((cand, fc));
                break;
            }
            step = step * lit(0.5);
        }
        let Some((cand, fc)) = accepted else { break };
        let moved: Vec<T> = cand.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let size = dot(&moved, &moved).sqrt();
        let scale = T::one() + dot(&cand, &cand).sqrt();
        if fc < fu {
            // restart momentum, keep the better iterate
            theta = T::one();
            u_prev = u.clone();
        } else {
            u_prev = std::mem::replace(&mut u, cand);
            fu = fc;
            theta = theta_next;
        }
        step = step * lit(1.5);
        if size <= opts.rel_tol * scale {
            quiet += 1;
            if quiet >= 3 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    AscentResult { x: to_x(&u), value: fu, iterations: it, converged }
}

/// Enumerates nonnegative scalar increment vectors on a lattice with `sum d <= cap`.
pub fn lattice_increments<T: Real>(n: usize, per_axis: usize, cap: T) -> Vec<Vec<T>> {
    let h = cap / T::from_usize_lossy(per_axis.max(1));
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let total: usize = idx.iter().sum();
        if total <= per_axis {
            out.push(idx.iter().map(|&i| h * T::from_usize_lossy(i)).collect());
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            idx[k] += 1;
            if idx.iter().sum::<usize>() <= per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Direction set for pattern search: `{-1,0,1}^n \ {0}` for small `n`, else `±e_i`.
fn directions<T: Real>(n: usize) -> Vec<Vec<T>> {
    if n <= 4 {
        let total = 3usize.pow(n as u32);
        (0..total)
            .filter_map(|mut c| {
                let v: Vec<T> = (0..n)
                    .map(|_| {
                        let r = c % 3;
                        c /= 3;
                        T::from_usize_lossy(r) - T::one()
                    })
                    .collect();
                v.iter().any(|x| *x != T::zero()).then_some(v)
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for i in 0..n {
            for s in [T::one(), -T::one()] {
                let mut v = vec![T::zero(); n];
                v[i] = s;
                out.push(v);
            }
        }
        out
    }
}

/// Derivative-free maximization over nonnegative increments with `sum d <= cap`.
pub fn pattern_search<T: Real>(
    f: &dyn Fn(&[T]) -> T,
    d0: &[T],
    step0: T,
    min_step: T,
    cap: Option<T>,
    max_evals: usize,
) -> (Vec<T>, T, usize) {
    pattern_search_with(f, d0, step0, min_step, cap, max_evals, &[])
}

/// [`pattern_search`] with extra search directions tried after the default set.
pub fn pattern_search_with<T: Real>(
    f: &dyn Fn(&[T]) -> T,
    d0: &[T],
    step0: T,
    min_step: T,
    cap: Option<T>,
    max_evals: usize,
    extra: &[Vec<T>],
) -> (Vec<T>, T, usize) {
    let mut dirs = directions::<T>(d0.len());
    for e in extra {
        dirs.push(e.clone());
        dirs.push(e.iter().map(|&v| -v).collect());
    }
    let feasible =
        |d: &[T]| d.iter().all(|&v| v >= T::zero()) && cap.map_or(true, |c| d.iter().copied().sum::<T>() <= c);
    let mut best = d0.to_vec();
    let mut fbest = f(&best);
    let mut step = step0;
    let mut evals = 1;
    while step > min_step && evals < max_evals {
        let mut improved = false;
        for dir in &dirs {
            let cand: Vec<T> = best.iter().zip(dir).map(|(&a, &b)| (a + step * b).max(T::zero())).collect();
            if !feasible(&cand) {
                continue;
            }
            let fc = f(&cand);
            evals += 1;
            if fc > fbest {
                best = cand;
                fbest = fc;
                improved = true;
                break;
            }
        }
        // expand after a success so long thin valleys are not crawled at a tiny step
        step = if improved { (step * lit(2.0)).min(step0) } else { step * lit(0.5) };
    }
    (best, fbest, evals)
}

/// Box-grid search that repeatedly recentres on the best point and shrinks.
///
/// Variables are constrained to be nonnegative; `f` returns `-inf` outside its
/// domain. Each round evaluates `(2 m + 1)^n` points.
pub fn zoom_max<T: Real>(
    f: &dyn Fn(&[T]) -> T,
    start: &[T],
    half_width: T,
    m: usize,
    min_width: T,
) -> (Vec<T>, T, usize) {
    let n = start.len();
    let mut best = start.to_vec();
    let mut fbest = f(&best);
    let mut hw = half_width;
    let mut evals = 1;
    let side = 2 * m + 1;
    let total = side.pow(n as u32);
    while hw > min_width {
        let h = hw / T::from_usize_lossy(m);
        let center = best.clone();
        for code in 0..total {
            let mut c = code;
            let cand: Vec<T> = center
                .iter()
                .map(|&x0| {
                    let i = c % side;
                    c /= side;
                    x0 + h * (T::from_usize_lossy(i) - T::from_usize_lossy(m))
                })
                .collect();
            if cand.iter().any(|&v| v < T::zero()) {
                continue;
            }
            let v = f(&cand);
            evals += 1;
            if v > fbest {
                fbest = v;
                best = cand;
            }
        }
        hw = hw * lit(0.25);
    }
    (best, fbest, evals)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<T: Real>(f: &dyn Fn(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = (lit::<T>(5.0).sqrt() - T::one()) * lit(0.5);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Global maximization on an interval: dense scan, then golden refinement of the best brackets.
pub fn scan_max_1d<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, samples: usize, hints: &[T]) -> (T, T) {
    let n = samples.max(8);
    let h = (b - a) / T::from_usize_lossy(n);
    let xs: Vec<T> = (0..=n).map(|i| a + h * T::from_usize_lossy(i)).collect();
    let fs: Vec<T> = xs.iter().map(|&x| f(x)).collect();
    let mut best = (a, f(a));
    for (&x, &v) in xs.iter().zip(&fs) {
        if v > best.1 {
            best = (x, v);
        }
    }
    let mut order: Vec<usize> = (0..=n).collect();
    order.sort_by(|&i, &k| fs[k].partial_cmp(&fs[i]).unwrap_or(std::cmp::Ordering::Equal));
    for &i in order.iter().take(4) {
        let lo = if i == 0 { xs[0] } else { xs[i - 1] };
        let hi = if i == n { xs[n] } else { xs[i + 1] };
        let r = golden_max(f, lo, hi, T::epsilon().sqrt() * (T::one() + hi.abs()) * lit(1e-2));
        if r.1 > best.1 {
            best = r;
        }
    }
    for &x in hints {
        if x >= a && x <= b {
            let v = f(x);
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_roundtrip() {
        let d = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(cumulative(&d, 1), vec![1.0, 3.0, 6.0, 10.0]);
        assert_eq!(differences(&cumulative(&d, 2), 2), d);
    }

    #[test]
    fn ascent_finds_projected_maximizer() {
        // maximize -|x - a|^2 over the monotone cone: the isotonic fit of a
        let j = Partition::<f64>::uniform(4).unwrap();
        let a = [0.5, -1.0, 2.0, 1.0];
        let w = j.widths();
        let f = |x: &[f64]| {
            let v = -x.iter().zip(&a).zip(&w).map(|((x, a), w)| w * (x - a).powi(2)).sum::<f64>();
            let g = x.iter().zip(&a).zip(&w).map(|((x, a), w)| -2.0 * w * (x - a)).collect();
            (v, g)
        };
        let r = maximize_on_cone(&j, 1, &[0.0; 4], f, &AscentOptions::default());
        let expect = project_monotone_box(&a, &w, None);
        for (x, e) in r.x.iter().zip(&expect) {
            assert!((x - e).abs() < 1e-7, "{:?} vs {:?}", r.x, expect);
        }
    }

    #[test]
    fn matrix_ascent_stays_in_cone() {
        let j = Partition::<f64>::uniform(2).unwrap();
        let target = [1.0, 0.5, 0.5, -1.0, 0.0, 0.0, 0.0, 2.0];
        let f = |x: &[f64]| {
            let v = -x.iter().zip(&target).map(|(x, a)| (x - a).powi(2)).sum::<f64>();
            (v, x.iter().zip(&target).map(|(x, a)| -2.0 * (x - a)).collect())
        };
        let r = maximize_on_cone(&j, 2, &[0.0; 8], f, &AscentOptions { max_iter: 2000, ..Default::default() });
        let p = crate::cone::ConePoint::from_flat(j, 2, r.x);
        assert!(p.is_in_cone(Some(1e-9)));
    }

    #[test]
    fn zoom_finds_boundary_minimum() {
        // minimum of (a - 1)^2 + (b + 0.5)^2 over a, b >= 0 is at (1, 0)
        let f = |d: &[f64]| -((d[0] - 1.0).powi(2) + (d[1] + 0.5).powi(2));
        let (d, v, _) = zoom_max(&f, &[0.3, 0.9], 1.0, 10, 1e-12);
        assert!((v + 0.25).abs() < 1e-12 && (d[0] - 1.0).abs() < 1e-9 && d[1] == 0.0, "{d:?} {v}");
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_increments::<f64>(2, 3, 1.0).len(), 10);
        assert_eq!(lattice_increments::<f64>(3, 4, 1.0).len(), 35);
    }

    #[test]
    fn golden_and_scan() {
        let f = |x: f64| -(x - 0.3).powi(2);
        let (x, _) = golden_max(&f, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let g = |x: f64| (10.0 * x).sin() - 0.1 * x;
        let (x, v) = scan_max_1d(&g, 0.0, 3.0, 300, &[]);
        assert!(v > 0.98 && (10.0 * (10.0 * x).cos() - 0.1).abs() < 1e-5 && x < 0.2);
    }
}
