//! Random instances for the acceptance suite.

use conehj::cone::{ConePoint, Partition, StepPath};
use conehj::linalg::SymMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn partition(rng: &mut ChaCha8Rng, n: usize) -> Partition<f64> {
    loop {
        let mut b: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.02..0.98)).collect();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.push(1.0);
        if let Ok(p) = Partition::from_breaks(b) {
            return p;
        }
    }
}

pub fn sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix<f64> {
    let mut m = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = rng.gen_range(-1.0..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// `A Aᵀ / d` with uniform entries, scaled by `s`.
pub fn psd(rng: &mut ChaCha8Rng, d: usize, s: f64) -> SymMatrix<f64> {
    let a: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SymMatrix::from_fn(d, |i, j| s * (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() / d as f64)
}

pub fn path(rng: &mut ChaCha8Rng, j: &Partition<f64>, d: usize) -> StepPath<f64> {
    StepPath::new(j.clone(), (0..j.len()).map(|_| sym(rng, d)).collect()).unwrap()
}

pub fn point(rng: &mut ChaCha8Rng, j: &Partition<f64>, d: usize) -> ConePoint<f64> {
    ConePoint::new(j.clone(), (0..j.len()).map(|_| sym(rng, d)).collect()).unwrap()
}

fn add(a: &SymMatrix<f64>, b: &SymMatrix<f64>, c: f64) -> SymMatrix<f64> {
    SymMatrix::from_fn(a.dim(), |i, j| a.get(i, j) + c * b.get(i, j))
}

/// Point of `C^j` built from PSD increments.
pub fn cone_point(rng: &mut ChaCha8Rng, j: &Partition<f64>, d: usize) -> ConePoint<f64> {
    let mut acc = SymMatrix::zeros(d);
    let mut coords = Vec::with_capacity(j.len());
    for _ in 0..j.len() {
        // occasional flat steps put points on the boundary
        if !rng.gen_bool(0.15) {
            acc = add(&acc, &psd(rng, d, 1.0), 1.0);
        }
        coords.push(acc.clone());
    }
    ConePoint::new(j.clone(), coords).unwrap()
}

/// Point of `(C^j)*`: PSD tail sums `S_k`, coordinates `(S_k - S_{k+1}) / w_k`.
pub fn dual_point(rng: &mut ChaCha8Rng, j: &Partition<f64>, d: usize) -> ConePoint<f64> {
    let n = j.len();
    let tails: Vec<SymMatrix<f64>> = (0..n).map(|_| psd(rng, d, 1.0)).collect();
    let coords = (0..n)
        .map(|k| {
            let next = if k + 1 < n { tails[k + 1].clone() } else { SymMatrix::zeros(d) };
            let diff = add(&tails[k], &next, -1.0);
            SymMatrix::from_fn(d, |a, b| diff.get(a, b) / j.width(k))
        })
        .collect();
    ConePoint::new(j.clone(), coords).unwrap()
}

pub fn sorted(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Smallest eigenvalue over the blocks, relative to `scale`.
pub fn min_eig_rel(blocks: &[SymMatrix<f64>], scale: f64) -> f64 {
    blocks.iter().map(|m| m.min_eigenvalue()).fold(f64::INFINITY, f64::min) / scale.max(1e-300)
}
