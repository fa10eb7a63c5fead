use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cascade::{sample_log_weights, CascadeSpec};
use super::mean_se;
use super::quadrature::log_sum_exp;
use crate::cone::DiscreteMeasure;
use crate::error::{Error, Result};

/// Exact spin sums are capped here.
pub const MAX_SPINS: usize = 14;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkInstance {
    #[serde(rename = "N")]
    pub n: usize,
    pub beta: f64,
    pub t: f64,
    pub measure: DiscreteMeasure<f64>,
    /// Disorder seed; replica `r` uses stream `r`.
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gray-code walk over `{±1}^N` starting from all `+1`: `flips[s - 1] = k`
/// when step `s` flips spin `k`.
fn gray_flips(n: usize) -> Vec<usize> {
    (1..1usize << n).map(|s| s.trailing_zeros() as usize).collect()
}

/// `H_N(σ) = √(β/N) Σ_{i,j} g_ij σ_i σ_j` along the Gray-code order, so that
/// `Var H_N(σ) = N β = N ξ(σ·σ/N)`.
fn hamiltonian_table(n: usize, beta: f64, flips: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = (beta / n as f64).sqrt();
    let g: Vec<f64> = (0..n * n).map(|_| gaussian(rng)).collect();
    let sym = |i: usize, j: usize| g[i * n + j] + g[j * n + i];
    let diag: f64 = (0..n).map(|i| g[i * n + i]).sum();
    let mut sigma = vec![1.0; n];
    let mut field: Vec<f64> = (0..n).map(|k| (0..n).filter(|&j| j != k).map(|j| sym(k, j)).sum()).collect();
    let mut h = diag + (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| sym(i, j)).sum::<f64>();
    let mut out = Vec::with_capacity(1 << n);
    out.push(c * h);
    for &k in flips {
        h -= 2.0 * sigma[k] * field[k];
        sigma[k] = -sigma[k];
        for j in 0..n {
            if j != k {
                field[j] += 2.0 * sym(j, k) * sigma[k];
            }
        }
        out.push(c * h);
    }
    out
}

/// `√2 w(α)·σ` along the Gray-code order.
fn field_table(w: &[f64], flips: &[usize], out: &mut Vec<f64>) {
    out.clear();
    let mut sigma = vec![1.0; w.len()];
    let mut b = std::f64::consts::SQRT_2 * w.iter().sum::<f64>();
    out.push(b);
    for &k in flips {
        sigma[k] = -sigma[k];
        b += 2.0 * std::f64::consts::SQRT_2 * w[k] * sigma[k];
        out.push(b);
    }
}

/// `w^ϱ(α) = Σ_{β ∈ p(α)} √(q_{|β|} - q_{|β|-1}) z_β` for all leaves, lexicographic.
fn leaf_fields(n: usize, q: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let s0 = q[0].max(0.0).sqrt();
    let mut fields = vec![(0..n).map(|_| s0 * gaussian(rng)).collect::<Vec<f64>>()];
    for k in 1..q.len() {
        let s = (q[k] - q[k - 1]).max(0.0).sqrt();
        let mut next = Vec::with_capacity(fields.len() * m);
        for parent in &fields {
            for _ in 0..m {
                next.push(parent.iter().map(|p| p + s * gaussian(rng)).collect());
            }
        }
        fields = next;
    }
    fields
}

fn scalar_atoms(m: &DiscreteMeasure<f64>) -> Result<Vec<f64>> {
    if m.dim() != 1 {
        return Err(Error::Unsupported("the SK model has D = 1".into()));
    }
    Ok(m.atoms().iter().map(|a| a.get(0, 0)).collect())
}

/// One disorder replica of `F_N(t, ϱ)` for each `t`.
fn replica(inst: &SkInstance, q: &[f64], times: &[f64], spec: &CascadeSpec, flips: &[usize], r: usize) -> Vec<f64> {
    let n = inst.n;
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
    rng.set_stream(r as u64);
    let ham = hamiltonian_table(n, inst.beta, flips, &mut rng);
    let fields = leaf_fields(n, q, spec.m, &mut rng);
    let mut crng = ChaCha8Rng::seed_from_u64(spec.seed);
    crng.set_stream(r as u64);
    let logw = sample_log_weights(&spec.zetas, spec.m, &mut crng);
    let hmax = ham.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nf = n as f64;
    let qk = *q.last().expect("nonempty");
    let mut b = Vec::with_capacity(ham.len());
    let mut per_leaf = vec![Vec::with_capacity(fields.len()); times.len()];
    for (w, lw) in fields.iter().zip(&logw) {
        field_table(w, flips, &mut b);
        let bmax = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (ti, &t) in times.iter().enumerate() {
            let a = (2.0 * t).sqrt();
            let shift = a * hmax + bmax;
            let s: f64 = ham.iter().zip(&b).map(|(h, bb)| (a * h + bb - shift).exp()).sum();
            per_leaf[ti].push(lw + shift + s.ln());
        }
    }
    times
        .iter()
        .zip(per_leaf)
        .map(|(&t, lz)| {
            let log_z = log_sum_exp(lz.into_iter()) - nf * std::f64::consts::LN_2 - nf * t * inst.beta - nf * qk;
            -log_z / nf
        })
        .collect()
}

/// `F̄_N(t, ϱ)` at several times, sharing each replica's disorder across times.
pub fn free_energy_at_times(
    inst: &SkInstance,
    times: &[f64],
    spec: &CascadeSpec,
    replicas: usize,
) -> Result<Vec<FreeEnergyEstimate>> {
    if inst.n == 0 || inst.n > MAX_SPINS {
        return Err(Error::Unsupported(format!("exact enumeration needs 1 <= N <= {MAX_SPINS}")));
    }
    if times.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) || !(inst.beta >= 0.0) {
        return Err(Error::InvalidInput("t and β must be finite and nonnegative".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidInput("need at least two replicas".into()));
    }
    spec.validate()?;
    let q = scalar_atoms(&inst.measure)?;
    let lv = inst.measure.levels();
    if spec.zetas.len() != q.len() - 1 || spec.zetas.iter().zip(&lv[1..]).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::InvalidInput("cascade ratios must equal the interior levels of ϱ".into()));
    }
    let flips = gray_flips(inst.n);
    let rows: Vec<Vec<f64>> =
        (0..replicas).into_par_iter().map(|r| replica(inst, &q, times, spec, &flips, r)).collect();
    Ok(times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let v: Vec<f64> = rows.iter().map(|row| row[ti]).collect();
            let (mean, se) = mean_se(&v);
            FreeEnergyEstimate { mean, se, samples: replicas, n: inst.n, t }
        })
        .collect())
}

pub fn free_energy(inst: &SkInstance, spec: &CascadeSpec, replicas: usize) -> Result<FreeEnergyEstimate> {
    Ok(free_energy_at_times(inst, &[inst.t], spec, replicas)?.remove(0))
}

/// Mean and standard error of `exp(√(2t) H_N(σ) - N t ξ(σσ^⊤/N))` for a fixed `σ`.
pub fn moment_check(n: usize, beta: f64, t: f64, sigma: &[f64], replicas: usize, seed: u64) -> Result<(f64, f64)> {
    if sigma.len() != n || sigma.iter().any(|s| s.abs() != 1.0) {
        return Err(Error::InvalidInput("σ must be a ±1 vector of length N".into()));
    }
    let c = (beta / n as f64).sqrt();
    let vals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut h = 0.0;
            for i in 0..n {
                for j in 0..n {
                    h += gaussian(&mut rng) * sigma[i] * sigma[j];
                }
            }
            ((2.0 * t).sqrt() * c * h - n as f64 * t * beta).exp()
        })
        .collect();
    Ok(mean_se(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_glass::one_spin::one_spin_value;

    fn inst(n: usize, t: f64, m: DiscreteMeasure<f64>) -> SkInstance {
        SkInstance { n, beta: 0.5, t, measure: m, seed: 17 }
    }

    #[test]
    fn gray_table_matches_direct_sum() {
        let n = 5;
        let flips = gray_flips(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let table = hamiltonian_table(n, 0.7, &flips, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..n * n).map(|_| gaussian(&mut rng)).collect();
        let mut sigma = vec![1.0; n];
        for (s, &h) in table.iter().enumerate() {
            if s > 0 {
                let k = flips[s - 1];
                sigma[k] = -sigma[k];
            }
            let direct: f64 =
                (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i * n + j] * sigma[i] * sigma[j]).sum();
            assert!((h - (0.7f64 / n as f64).sqrt() * direct).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spin_at_time_zero_without_field() {
        let m = DiscreteMeasure::from_scalars(&[0.0], vec![0.0, 1.0]).unwrap();
        let spec = CascadeSpec::for_measure(&m, 1);
        let e = free_energy(&inst(1, 0.0, m), &spec, 10).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn single_spin_closed_form() {
        let q = 0.5;
        let m = DiscreteMeasure::from_scalars(&[q], vec![0.0, 1.0]).unwrap();
        let spec = CascadeSpec::for_measure(&m, 1);
        let e = free_energy(&inst(1, 0.0, m), &spec, 20_000).unwrap();
        let exact = one_spin_value(&[q], &[0.0, 1.0]);
        assert!((e.mean - exact).abs() < 3.0 * e.se, "{} ± {} vs {exact}", e.mean, e.se);
    }

    #[test]
    fn time_zero_tensorizes() {
        let m = DiscreteMeasure::from_scalars(&[0.1, 0.4], vec![0.0, 0.5, 1.0]).unwrap();
        let spec = CascadeSpec { zetas: vec![0.5], m: 128, seed: 2 };
        let e = free_energy(&inst(3, 0.0, m), &spec, 3000).unwrap();
        let psi = one_spin_value(&[0.1, 0.4], &[0.0, 0.5, 1.0]);
        assert!((e.mean - psi).abs() < 3.0 * e.se + 2e-3, "{} ± {} vs {psi}", e.mean, e.se);
    }

    #[test]
    fn gaussian_moment_is_one() {
        let (m, se) = moment_check(3, 0.5, 0.3, &[1.0, -1.0, 1.0], 20_000, 8).unwrap();
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn reproducible_and_guarded() {
        let m = DiscreteMeasure::from_scalars(&[0.0, 0.3], vec![0.0, 0.5, 1.0]).unwrap();
        let spec = CascadeSpec::for_measure(&m, 5);
        let a = free_energy(&inst(4, 0.25, m.clone()), &spec, 8).unwrap();
        let b = free_energy(&inst(4, 0.25, m.clone()), &spec, 8).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert!(matches!(free_energy(&inst(15, 0.25, m), &spec, 8), Err(Error::Unsupported(_))));
    }
}
