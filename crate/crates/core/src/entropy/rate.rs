use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;

use super::EntropyLedger;

/// Minimum ledgers for a rate estimate.
pub const MIN_LEDGERS: usize = 10;
/// Minimum integration steps covered by the fitting window.
pub const MIN_WINDOW_STEPS: usize = 100;

/// Fitted mean production rate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub n_ledgers: usize,
    pub n_points: usize,
}

/// Least-squares slope of the ensemble-mean `Δs_tot` over `[t_lo, t_hi]`.
///
/// The slope of the mean equals the mean of per-ledger slopes, so the
/// standard error is the spread of those slopes over `√N`.
/// `step_dt` is the integration step, used to check the window length.
pub fn asymptotic_mean_rate<T: Real>(
    ledgers: &[EntropyLedger<T>],
    t_lo: T,
    t_hi: T,
    step_dt: T,
) -> Result<RateEstimate> {
    if ledgers.len() < MIN_LEDGERS {
        return Err(QsdError::NotEnoughSamples(format!(
            "{} ledgers, at least {MIN_LEDGERS} needed",
            ledgers.len()
        )));
    }
    let steps = ((t_hi - t_lo) / step_dt).to_f64_lossless();
    if !(steps >= MIN_WINDOW_STEPS as f64) {
        return Err(QsdError::WindowTooShort(format!(
            "window covers {steps:.0} steps, at least {MIN_WINDOW_STEPS} needed"
        )));
    }
    let reference = &ledgers[0];
    let slack = reference.dt * T::lit(1e-6);
    let idx: Vec<usize> = (0..reference.len())
        .filter(|&k| {
            let t = reference.time(k);
            t >= t_lo - slack && t <= t_hi + slack
        })
        .collect();
    if idx.len() < 2 {
        return Err(QsdError::WindowTooShort(format!(
            "{} recorded rows inside the window",
            idx.len()
        )));
    }
    let ts: Vec<f64> = idx.iter().map(|&k| reference.time(k).to_f64_lossless()).collect();
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
    let mut slopes = Vec::with_capacity(ledgers.len());
    for l in ledgers {
        if l.len() != reference.len() || l.dt != reference.dt || l.t0 != reference.t0 {
            return Err(QsdError::InvalidParameter(
                "ledgers do not share a time grid".into(),
            ));
        }
        let sxy: f64 = idx
            .iter()
            .zip(&ts)
            .map(|(&k, t)| (t - t_mean) * l.s_tot[k].to_f64_lossless())
            .sum();
        slopes.push(sxy / sxx);
    }
    let m = slopes.len() as f64;
    let rate = slopes.iter().sum::<f64>() / m;
    let var = slopes.iter().map(|s| (s - rate) * (s - rate)).sum::<f64>() / (m - 1.0);
    Ok(RateEstimate {
        rate,
        std_error: (var / m).sqrt(),
        n_ledgers: ledgers.len(),
        n_points: idx.len(),
    })
}

/// Per-row ensemble means and standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub t: Vec<f64>,
    pub mean_tot: Vec<f64>,
    pub se_tot: Vec<f64>,
    pub mean_sys: Vec<f64>,
    pub mean_meas: Vec<f64>,
}

impl LedgerSummary {
    /// Smallest `mean / se` over rows with positive standard error; the
    /// second-law check asks for this to stay above −3.
    pub fn min_standardized_mean(&self) -> f64 {
        self.mean_tot
            .iter()
            .zip(&self.se_tot)
            .filter(|(_, &s)| s > 0.0)
            .map(|(m, s)| m / s)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn ensemble_mean<T: Real>(ledgers: &[EntropyLedger<T>]) -> Result<LedgerSummary> {
    let first = ledgers
        .first()
        .ok_or_else(|| QsdError::NotEnoughSamples("no ledgers".into()))?;
    let rows = first.len();
    if ledgers.iter().any(|l| l.len() != rows) {
        return Err(QsdError::InvalidParameter("ledgers differ in length".into()));
    }
    let n = ledgers.len() as f64;
    let mut s = LedgerSummary {
        t: first.times().iter().map(|t| t.to_f64_lossless()).collect(),
        mean_tot: vec![0.0; rows],
        se_tot: vec![0.0; rows],
        mean_sys: vec![0.0; rows],
        mean_meas: vec![0.0; rows],
    };
    for k in 0..rows {
        let col = |f: fn(&EntropyLedger<T>) -> &Vec<T>| -> Vec<f64> {
            ledgers.iter().map(|l| f(l)[k].to_f64_lossless()).collect()
        };
        let tot = col(|l| &l.s_tot);
        let mean = tot.iter().sum::<f64>() / n;
        s.mean_tot[k] = mean;
        if ledgers.len() > 1 {
            let var = tot.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            s.se_tot[k] = (var / n).sqrt();
        }
        s.mean_sys[k] = col(|l| &l.s_sys).iter().sum::<f64>() / n;
        s.mean_meas[k] = col(|l| &l.s_meas).iter().sum::<f64>() / n;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(id: u64, slope: f64) -> EntropyLedger<f64> {
        let sys = vec![0.0; 301];
        let meas = (0..301).map(|k| slope * 0.01 * k as f64).collect();
        EntropyLedger::from_parts(id, 0.0, 0.01, sys, meas).unwrap()
    }

    #[test]
    fn exact_lines() {
        let ls: Vec<_> = (0..12).map(|i| linear(i, 8.0 + (i as f64 - 5.5) * 0.1)).collect();
        let r = asymptotic_mean_rate(&ls, 1.0, 2.0, 1e-3).unwrap();
        assert!((r.rate - 8.0).abs() < 1e-10);
        assert_eq!(r.n_points, 101);
        // sample variance of 0.1·i over i = 0..11 is 0.01 · 13
        let expected_se = (0.13f64 / 12.0).sqrt();
        assert!((r.std_error - expected_se).abs() < 1e-10);
    }

    #[test]
    fn zero_strength_gives_zero() {
        let ls: Vec<_> = (0..10).map(|i| linear(i, 0.0)).collect();
        let r = asymptotic_mean_rate(&ls, 1.0, 2.0, 1e-3).unwrap();
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn guards() {
        let ls: Vec<_> = (0..5).map(|i| linear(i, 1.0)).collect();
        assert!(matches!(
            asymptotic_mean_rate(&ls, 1.0, 2.0, 1e-3),
            Err(QsdError::NotEnoughSamples(_))
        ));
        let ls: Vec<_> = (0..10).map(|i| linear(i, 1.0)).collect();
        assert!(matches!(
            asymptotic_mean_rate(&ls, 1.0, 1.05, 1e-3),
            Err(QsdError::WindowTooShort(_))
        ));
    }

    #[test]
    fn summary() {
        let ls: Vec<_> = (0..4).map(|i| linear(i, i as f64)).collect();
        let s = ensemble_mean(&ls).unwrap();
        assert!((s.mean_tot[300] - 1.5 * 3.0).abs() < 1e-12);
        assert!(s.se_tot[300] > 0.0);
        assert_eq!(s.se_tot[0], 0.0);
        assert!(s.min_standardized_mean() > 0.0);
    }
}
