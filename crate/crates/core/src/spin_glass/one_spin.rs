use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_hermite, log_cosh, log_sum_exp};
use crate::cone::{quantile_to_measure, DiscreteMeasure, Partition, StepPath};
use crate::error::{Error, Result};
use crate::solvers::{InitialCondition, LevelFunction};

/// Quadrature sizes by cascade depth, keeping the nested sum near `2·10⁵` terms.
fn nodes_for_depth(k: usize) -> usize {
    match k {
        0 => 80,
        1 => 64,
        2 => 40,
        3 => 20,
        _ => 12,
    }
}

/// `ψ(ϱ) = F̄_1(0, ϱ) = q_K - E log Σ_α ν_α cosh(√2 w^ϱ(α))` for the SK reference
/// measure, through the cascade recursion
/// `Y_K = log cosh(√2 h)`, `Y_{k-1}(h) = ζ_k^{-1} log E exp(ζ_k Y_k(h + √(q_k - q_{k-1}) z))`.
pub fn one_spin_value(q: &[f64], levels: &[f64]) -> f64 {
    assert_eq!(levels.len(), q.len() + 1, "levels bracket the atoms");
    let k = q.len() - 1;
    let (z, w) = gauss_hermite(nodes_for_depth(k));
    let dq: Vec<f64> = (0..=k).map(|i| (q[i] - if i == 0 { 0.0 } else { q[i - 1] }).max(0.0).sqrt()).collect();
    fn rec(level: usize, h: f64, k: usize, dq: &[f64], zeta: &[f64], z: &[f64], w: &[f64]) -> f64 {
        if level == k {
            return log_cosh(std::f64::consts::SQRT_2 * h);
        }
        let zk = zeta[level + 1];
        let vals: Vec<f64> =
            z.iter().map(|&zi| zk * rec(level + 1, h + dq[level + 1] * zi, k, dq, zeta, z, w)).collect();
        log_sum_exp(vals.iter().zip(w).map(|(v, wi)| v + wi.ln())) / zk
    }
    let e0: f64 = z.iter().zip(&w).map(|(&zi, &wi)| wi * rec(0, dq[0] * zi, k, &dq, levels, &z, &w)).sum();
    q[k] - e0
}

/// The one-spin free energy as an initial condition on `C` (`D = 1`).
/// Its `L¹` constant is 1.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkOneSpin {}

impl SkOneSpin {
    pub fn measure_value(&self, m: &DiscreteMeasure<f64>) -> Result<f64> {
        if m.dim() != 1 {
            return Err(Error::Unsupported("the SK one-spin functional is scalar".into()));
        }
        let q: Vec<f64> = m.atoms().iter().map(|a| a.get(0, 0)).collect();
        Ok(one_spin_value(&q, m.levels()))
    }
}

struct Level {
    breaks: Vec<f64>,
}

impl LevelFunction<f64> for Level {
    /// Off the cone (finite-difference probes) the coordinates are sorted and
    /// clipped at 0 first.
    fn value(&self, x: &[f64]) -> f64 {
        let mut v: Vec<f64> = x.iter().map(|a| a.max(0.0)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut q = Vec::with_capacity(v.len());
        let mut levels = vec![0.0];
        for (k, &a) in v.iter().enumerate() {
            if q.last() == Some(&a) {
                *levels.last_mut().unwrap() = self.breaks[k];
            } else {
                q.push(a);
                levels.push(self.breaks[k]);
            }
        }
        one_spin_value(&q, &levels)
    }
}

impl InitialCondition<f64> for SkOneSpin {
    fn name(&self) -> &'static str {
        "sk_one_spin"
    }

    fn eval_path(&self, mu: &StepPath<f64>) -> f64 {
        let m = quantile_to_measure(mu).expect("ψ is evaluated on C");
        self.measure_value(&m).expect("scalar path")
    }

    fn at_level<'a>(&'a self, j: &Partition<f64>) -> Box<dyn LevelFunction<f64> + 'a> {
        Box::new(Level { breaks: j.breaks().to_vec() })
    }

    fn lip_l1(&self) -> f64 {
        1.0
    }

    fn lip_h(&self) -> f64 {
        1.0
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn is_concave(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConePoint;

    #[test]
    fn zero_measure_is_zero() {
        assert_eq!(one_spin_value(&[0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn dirac_matches_direct_quadrature() {
        let q: f64 = 0.4;
        let (z, w) = gauss_hermite(120);
        let direct: f64 = q - z.iter().zip(&w).map(|(a, b)| b * log_cosh((2.0 * q).sqrt() * a)).sum::<f64>();
        assert!((one_spin_value(&[q], &[0.0, 1.0]) - direct).abs() < 1e-10);
    }

    #[test]
    fn merged_atoms_are_continuous() {
        let a = one_spin_value(&[0.3], &[0.0, 1.0]);
        let b = one_spin_value(&[0.3, 0.3 + 1e-9], &[0.0, 0.4, 1.0]);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn level_function_reads_partition() {
        let j = Partition::uniform(2).unwrap();
        let x = ConePoint::from_scalars(j, &[0.0, 0.3]).unwrap();
        let direct = one_spin_value(&[0.0, 0.3], &[0.0, 0.5, 1.0]);
        assert_eq!(SkOneSpin::default().eval(&x), direct);
    }

    #[test]
    fn l1_lipschitz_and_monotone_on_samples() {
        let psi = SkOneSpin::default();
        let j = Partition::uniform(3).unwrap();
        let pts = [[0.0, 0.1, 0.5], [0.05, 0.2, 0.5], [0.0, 0.0, 0.9], [0.3, 0.3, 0.3], [0.1, 0.4, 1.2]];
        for a in &pts {
            for b in &pts {
                let (x, y) =
                    (ConePoint::from_scalars(j.clone(), a).unwrap(), ConePoint::from_scalars(j.clone(), b).unwrap());
                let d = x.sub(&y).unwrap().l1_norm();
                assert!((psi.eval(&x) - psi.eval(&y)).abs() <= d + 1e-9);
            }
        }
        assert!(crate::solvers::sampled_dual_increasing_scan(&psi, 200, 1).is_none());
    }
}
