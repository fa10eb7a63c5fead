use crate::scalar::Real;

/// Pool-adjacent-violators over arbitrary block summaries.
///
/// `level` gives the fitted value of a block; adjacent blocks are pooled while
/// their levels decrease. Returns one fitted value per input item.
pub fn pava_by<T: Real, A: Clone>(items: Vec<A>, merge: impl Fn(&A, &A) -> A, level: impl Fn(&A) -> T) -> Vec<T> {
    let n = items.len();
    let mut blocks: Vec<(A, T, usize)> = Vec::with_capacity(n);
    for it in items {
        let l = level(&it);
        blocks.push((it, l, 1));
        while blocks.len() >= 2 {
            let m = blocks.len();
            if blocks[m - 2].1 <= blocks[m - 1].1 {
                break;
            }
            let (b, _, cb) = blocks.pop().unwrap();
            let (a, _, ca) = blocks.pop().unwrap();
            let ab = merge(&a, &b);
            let l = level(&ab);
            blocks.push((ab, l, ca + cb));
        }
    }
    let mut out = Vec::with_capacity(n);
    for (_, l, c) in blocks {
        out.extend(std::iter::repeat(l).take(c));
    }
    out
}

/// Weighted least-squares nondecreasing fit.
pub fn isotonic_regression<T: Real>(values: &[T], weights: &[T]) -> Vec<T> {
    assert_eq!(values.len(), weights.len());
    let items: Vec<(T, T)> = values.iter().zip(weights).map(|(&v, &w)| (w, w * v)).collect();
    pava_by(items, |a, b| (a.0 + b.0, a.1 + b.1), |a| a.1 / a.0)
}

/// Projection onto `{0 <= y_1 <= ... <= y_n <= cap}` in the weighted norm.
pub fn project_monotone_box<T: Real>(values: &[T], weights: &[T], cap: Option<T>) -> Vec<T> {
    let mut y = isotonic_regression(values, weights);
    for v in &mut y {
        *v = v.max(T::zero());
        if let Some(c) = cap {
            *v = v.min(c);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_violators() {
        let y = isotonic_regression(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(y, vec![1.0, 2.5, 2.5, 4.0]);
        let y = isotonic_regression(&[3.0, 1.0], &[1.0, 3.0]);
        assert_eq!(y, vec![1.5, 1.5]);
    }

    #[test]
    fn projection_minimizes_distance() {
        // brute force over a grid in two dimensions
        let v = [0.7, -0.4];
        let w = [0.3, 0.7];
        let p = project_monotone_box(&v, &w, Some(0.5));
        let d = |y: [f64; 2]| w[0] * (y[0] - v[0]).powi(2) + w[1] * (y[1] - v[1]).powi(2);
        let mut best = f64::INFINITY;
        for a in 0..=500 {
            for b in a..=500 {
                best = best.min(d([a as f64 / 1000.0, b as f64 / 1000.0]));
            }
        }
        assert!((d([p[0], p[1]]) - best).abs() < 1e-5);
    }
}
