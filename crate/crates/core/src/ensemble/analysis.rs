use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::quad;

use super::{bloch_entropy, EnsembleOutput};

/// Sample mean and its standard error (zero for a single sample).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Outcome split of final `r_z` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornFractions {
    pub n: usize,
    pub threshold: f64,
    pub f_plus: f64,
    pub f_minus: f64,
    pub undecided: f64,
}

impl BornFractions {
    /// Binomial standard error of `f_plus`.
    pub fn se_plus(&self) -> f64 {
        (self.f_plus * (1.0 - self.f_plus) / self.n as f64).sqrt()
    }

    /// `(f₊ − (1 + r₀)/2) / SE`, using the expected fraction for the SE so
    /// that a deterministic outcome still gives a finite score.
    pub fn z_score(&self, r0: f64) -> f64 {
        let p = 0.5 * (1.0 + r0);
        let se = (p * (1.0 - p) / self.n as f64).sqrt();
        let d = self.f_plus - p;
        if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Fractions of final `r_z` above `threshold`, below `−threshold`, and in
/// between (never assigned to either side).
pub fn born_fractions(final_rz: &[f64], threshold: f64) -> BornFractions {
    let n = final_rz.len();
    let plus = final_rz.iter().filter(|&&r| r > threshold).count();
    let minus = final_rz.iter().filter(|&&r| r < -threshold).count();
    let nf = n.max(1) as f64;
    BornFractions {
        n,
        threshold,
        f_plus: plus as f64 / nf,
        f_minus: minus as f64 / nf,
        undecided: (n - plus - minus) as f64 / nf,
    }
}

/// Histogram of samples against a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramComparison {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Probability of each bin under the density.
    pub expected: Vec<f64>,
    /// `½ Σ |counts/N − expected|`, plus half the fraction of samples outside
    /// the binned range.
    pub total_variation: f64,
    /// `(count − N p) / √(N p (1 − p))` per bin (zero where `p = 0`).
    pub z_scores: Vec<f64>,
    pub n_samples: usize,
}

impl HistogramComparison {
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().fold(0.0, |a, z| a.max(z.abs()))
    }

    /// Typical total variation of a perfect sampler at this `N` and binning,
    /// `½ Σ √(2 p (1 − p) / (π N))`.
    pub fn noise_floor(&self) -> f64 {
        let n = self.n_samples as f64;
        0.5 * self
            .expected
            .iter()
            .map(|&p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n)).sqrt())
            .sum::<f64>()
    }
}

/// Bins `samples` on `[lo, hi]` and compares with the bin probabilities of
/// `pdf`, integrated by adaptive quadrature.
pub fn histogram_vs_pdf<F: Fn(f64) -> f64>(
    samples: &[f64],
    pdf: F,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<HistogramComparison> {
    if samples.len() < 1000 {
        return Err(QsdError::NotEnoughSamples(format!(
            "{} samples, at least 1000 needed",
            samples.len()
        )));
    }
    if bins == 0 || !(hi > lo) {
        return Err(QsdError::InvalidParameter(format!(
            "bad binning: {bins} bins on [{lo}, {hi}]"
        )));
    }
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &x in samples {
        if !(x >= lo && x <= hi) {
            outside += 1;
            continue;
        }
        let i = (((x - lo) / w) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let expected = edges
        .windows(2)
        .map(|e| quad::integrate(&pdf, e[0], e[1], 1e-12).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?;
    let n = samples.len() as f64;
    let mut tv = 0.5 * outside as f64 / n;
    let mut z_scores = Vec::with_capacity(bins);
    for (&c, &p) in counts.iter().zip(&expected) {
        tv += 0.5 * (c as f64 / n - p).abs();
        let var = n * p * (1.0 - p);
        z_scores.push(if var > 0.0 {
            (c as f64 - n * p) / var.sqrt()
        } else {
            0.0
        });
    }
    Ok(HistogramComparison {
        edges,
        counts,
        expected,
        total_variation: tv,
        z_scores,
        n_samples: samples.len(),
    })
}

/// Draws from a tabulated density by inverting its cumulative distribution
/// (trapezoid cumulative sums, linear inversion inside each cell).
#[derive(Debug, Clone)]
pub struct InverseCdfSampler {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdfSampler {
    pub fn new<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(QsdError::InvalidParameter(format!(
                "sampler needs n ≥ 2 nodes on an interval, got {n} on [{lo}, {hi}]"
            )));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let vals: Vec<f64> = nodes.iter().map(|&x| pdf(x).max(0.0)).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * h * (vals[i - 1] + vals[i]);
        }
        let total = cdf[n - 1];
        if !(total > 0.0) || !total.is_finite() {
            return Err(QsdError::InvalidParameter(
                "density has no mass on the sampling interval".into(),
            ));
        }
        for c in &mut cdf {
            *c /= total;
        }
        Ok(Self { nodes, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let s = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.nodes[i - 1] + s * (self.nodes[i] - self.nodes[i - 1])
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value from the Kolmogorov distribution.
    pub p_value: f64,
    /// Rejection threshold at the 1% level, `1.628 √((n + m)/(n m))`.
    pub critical_1pct: f64,
}

impl KsResult {
    pub fn passes_at_1pct(&self) -> bool {
        self.statistic <= self.critical_1pct
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(QsdError::NotEnoughSamples("empty sample".into()));
    }
    let sorted = |v: &[f64]| -> Result<Vec<f64>> {
        if v.iter().any(|x| x.is_nan()) {
            return Err(QsdError::InvalidParameter("NaN in sample".into()));
        }
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(s)
    };
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        critical_1pct: 1.628 / ne.sqrt(),
    })
}

/// `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Von Neumann entropy along each trajectory and over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnCurves {
    pub t: Vec<f64>,
    pub per_trajectory: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Entropy of the ensemble-averaged state `−Tr ρ̄ ln ρ̄`.
    pub averaged_state: Vec<f64>,
}

pub fn vn_entropy_curves(output: &EnsembleOutput) -> VnCurves {
    let t = output.stats.t.clone();
    let per_trajectory: Vec<Vec<f64>> = output
        .trajectories
        .iter()
        .map(|tr| tr.bloch.iter().map(bloch_entropy).collect())
        .collect();
    let rows = t.len();
    let mut mean = Vec::with_capacity(rows);
    let mut std_error = Vec::with_capacity(rows);
    let mut averaged_state = Vec::with_capacity(rows);
    let n = output.trajectories.len() as f64;
    for k in 0..rows {
        let col: Vec<f64> = per_trajectory.iter().map(|c| c[k]).collect();
        let (m, se) = mean_and_se(&col);
        mean.push(m);
        std_error.push(se);
        let mut avg = [0.0; 3];
        for tr in &output.trajectories {
            for (a, v) in avg.iter_mut().zip(tr.bloch[k]) {
                *a += v / n;
            }
        }
        averaged_state.push(bloch_entropy(&avg));
    }
    VnCurves {
        t,
        per_trajectory,
        mean,
        std_error,
        averaged_state,
    }
}
