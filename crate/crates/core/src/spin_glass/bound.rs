use serde::{Deserialize, Serialize};

use super::sk::FreeEnergyEstimate;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    /// `F̄_N - f`.
    pub gap: f64,
    /// `c / N`.
    pub allowance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: f64,
    pub f: f64,
    pub rows: Vec<BoundRow>,
    /// Finite-size constant `c = max(0, -b)` from the weighted fit `gap ≈ a + b/N`.
    pub c: f64,
    /// `gap` nonincreasing in `N` up to one combined standard error.
    pub trend: bool,
    pub pass: bool,
}

/// Checks `F̄_N >= f - 3 SE - c/N` for every `N`. Estimates must share `t`.
pub fn bound_check(estimates: &[FreeEnergyEstimate], f: f64) -> Result<BoundReport> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput("need estimates at two or more N".into()));
    }
    let t = estimates[0].t;
    if estimates.iter().any(|e| e.t != t) {
        return Err(Error::InvalidInput("estimates must share t".into()));
    }
    let mut est = estimates.to_vec();
    est.sort_by_key(|e| e.n);
    // weighted least squares of gap on 1/N
    let w: Vec<f64> = est.iter().map(|e| 1.0 / e.se.max(1e-12).powi(2)).collect();
    let x: Vec<f64> = est.iter().map(|e| 1.0 / e.n as f64).collect();
    let y: Vec<f64> = est.iter().map(|e| e.mean - f).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(a, b)| a * (b - mx) * (b - mx)).sum();
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = (-b).max(0.0);
    let rows: Vec<BoundRow> = est
        .iter()
        .map(|e| {
            let allowance = c / e.n as f64;
            BoundRow {
                n: e.n,
                mean: e.mean,
                se: e.se,
                gap: e.mean - f,
                allowance,
                pass: e.mean >= f - 3.0 * e.se - allowance,
            }
        })
        .collect();
    let trend = rows.windows(2).all(|p| p[1].gap <= p[0].gap + (p[0].se.powi(2) + p[1].se.powi(2)).sqrt());
    let pass = rows.iter().all(|r| r.pass);
    Ok(BoundReport { t, f, rows, c, trend, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(n: usize, mean: f64, se: f64) -> FreeEnergyEstimate {
        FreeEnergyEstimate { mean, se, samples: 100, n, t: 0.5 }
    }

    #[test]
    fn decreasing_gap_passes() {
        let r = bound_check(&[est(8, 0.30, 0.001), est(6, 0.32, 0.001), est(10, 0.29, 0.001)], 0.25).unwrap();
        assert!(r.pass && r.trend && r.c == 0.0);
        assert_eq!(r.rows[0].n, 6);
    }

    #[test]
    fn finite_size_allowance() {
        // gap = -0.06/N exactly: the fit recovers c = 0.06 and every row passes
        let r = bound_check(&[est(6, 0.25 - 0.01, 0.001), est(12, 0.25 - 0.005, 0.001)], 0.25).unwrap();
        assert!((r.c - 0.06).abs() < 1e-9 && r.pass);
    }

    #[test]
    fn mixed_times_rejected() {
        let mut b = est(8, 0.3, 0.01);
        b.t = 0.25;
        assert!(bound_check(&[est(6, 0.3, 0.01), b], 0.2).is_err());
    }
}
