//! Entropy production from forward and backward Kraus probabilities.
//!
//! For one measurement step from `x` to `x'` the total production is
//!
//! ```text
//! ln [p(x, t) Δr(x) T(x → x')] − ln [p(x', t + dt) Δr(x') T(x' → x)]
//! ```
//!
//! where `Δr` is half the spread between the two branch destinations. The
//! transition-probability ratio gives `dΔs_A`, the phase-volume ratio
//! `dΔs_C`, and the density ratio is the usual system part.

use crate::bloch::BlochState;
use crate::error::{QsdError, Result};
use crate::kraus::{log_prob_ratio, Branch, KrausScheme, KrausStepOutcome};
use crate::num::Real;

use super::{EntropyLedger, LedgerRecorder, LogDensity};

/// The two measurement-side pieces of one discrete step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteParts<T> {
    /// Probability of taking this branch.
    pub probability: T,
    /// `ln(T(x → x') / T(x' → x))`.
    pub ds_a: T,
    /// `ln(Δr(x) / Δr(x'))`.
    pub ds_c: T,
    pub next: BlochState<T>,
}

/// Parts for a chosen branch of channel `channel` from `state`.
pub fn discrete_parts<T: Real>(
    scheme: &KrausScheme<T>,
    state: &BlochState<T>,
    channel: usize,
    branch: Branch,
) -> DiscreteParts<T> {
    let probs = scheme.branch_probabilities(state);
    let probability = probs
        .iter()
        .find(|(c, b, _)| *c == channel && *b == branch)
        .map(|e| e.2)
        .unwrap_or_else(T::zero);
    let total: T = probs.iter().map(|e| e.2).sum();
    let u = probs
        .iter()
        .take_while(|(c, b, _)| !(*c == channel && *b == branch))
        .map(|e| e.2)
        .sum::<T>()
        + T::lit(0.5) * probability;
    let outcome = scheme
        .step_with_uniform(state, u / total)
        .expect("branch weights are positive inside the ball");
    DiscreteParts {
        probability,
        ds_a: log_prob_ratio(&outcome),
        ds_c: phase_volume_log_ratio(scheme, state, &outcome),
        next: outcome.state,
    }
}

fn phase_volume_log_ratio<T: Real>(
    scheme: &KrausScheme<T>,
    before: &BlochState<T>,
    outcome: &KrausStepOutcome<T>,
) -> T {
    (scheme.phase_volume(before, outcome.channel) / scheme.phase_volume(&outcome.state, outcome.channel)).ln()
}

/// Measurement part of one recorded step: `dΔs_A + dΔs_C`.
pub fn discrete_meas_increment<T: Real>(
    scheme: &KrausScheme<T>,
    before: &BlochState<T>,
    outcome: &KrausStepOutcome<T>,
) -> T {
    log_prob_ratio(outcome) + phase_volume_log_ratio(scheme, before, outcome)
}

/// Ledger of a single-channel Kraus chain. `pdf` is a density in the
/// coordinate along the measured axis.
pub fn sep_discrete_oracle<T: Real, L: LogDensity<T, 1> + ?Sized>(
    scheme: &KrausScheme<T>,
    initial: &BlochState<T>,
    outcomes: &[KrausStepOutcome<T>],
    pdf: &L,
    t0: T,
    stride: usize,
    trajectory_id: u64,
) -> Result<EntropyLedger<T>> {
    if scheme.channels().len() != 1 {
        return Err(QsdError::InvalidParameter(
            "the discrete oracle needs a single measurement channel".into(),
        ));
    }
    let axis = scheme.channels()[0].axis;
    let dt = scheme.dt();
    let mut rec = LedgerRecorder::new(
        trajectory_id,
        t0,
        dt,
        stride,
        pdf.ln_density(&[initial.along(axis)], t0)?,
    );
    let mut state = *initial;
    for (k, out) in outcomes.iter().enumerate() {
        rec.add_meas(discrete_meas_increment(scheme, &state, out));
        state = out.state;
        let step = k + 1;
        if rec.wants(step) {
            let t = t0 + T::from_usize(step).unwrap() * dt;
            rec.record(pdf.ln_density(&[state.along(axis)], t)?);
        }
    }
    Ok(rec.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{sep_rz, FnLogDensity};
    use crate::kraus::MeasurementChannel;
    use crate::rng::stream_rng;

    fn scheme(alpha: f64, dt: f64) -> KrausScheme<f64> {
        KrausScheme::new(&[MeasurementChannel::z(alpha).unwrap()], dt).unwrap()
    }

    #[test]
    fn branch_means_and_variances() {
        let alpha: f64 = 1.2;
        let dt: f64 = 1e-6;
        let s = scheme(alpha, dt);
        for r in [-0.7, 0.0, 0.3, 0.9] {
            let x = BlochState::<f64>::on_z_axis(r).unwrap();
            let plus = discrete_parts(&s, &x, 0, Branch::Plus);
            let minus = discrete_parts(&s, &x, 0, Branch::Minus);
            assert!((plus.probability + minus.probability - 1.0).abs() < 1e-14);
            let mean = |f: fn(&DiscreteParts<f64>) -> f64| {
                plus.probability * f(&plus) + minus.probability * f(&minus)
            };
            let expected = 4.0 * alpha * alpha * (1.0 + r * r) * dt;
            let ma = mean(|p| p.ds_a);
            let mc = mean(|p| p.ds_c);
            assert!((ma - expected).abs() < 1e-3 * expected, "r = {r}: {ma} vs {expected}");
            assert!((mc - expected).abs() < 1e-3 * expected, "r = {r}: {mc} vs {expected}");
            let var_a = mean(|p| p.ds_a * p.ds_a) - ma * ma;
            let var_c = mean(|p| p.ds_c * p.ds_c) - mc * mc;
            let expected_var = 16.0 * alpha * alpha * r * r * dt;
            assert!((var_a - expected_var).abs() < 1e-3 * expected_var + 1e-10);
            assert!((var_c - expected_var).abs() < 1e-3 * expected_var + 1e-10);
        }
    }

    #[test]
    fn per_step_matches_closed_form_to_leading_order() {
        // a branch is a record increment ±√dt; the innovation driving the
        // continuous chain is that minus its conditional mean 2αr dt
        let alpha: f64 = 1.0;
        let dt: f64 = 1e-6;
        let s = scheme(alpha, dt);
        let r: f64 = 0.4;
        let x = BlochState::<f64>::on_z_axis(r).unwrap();
        for (b, sgn) in [(Branch::Plus, 1.0), (Branch::Minus, -1.0)] {
            let p = discrete_parts(&s, &x, 0, b);
            let dw = sgn * dt.sqrt() - 2.0 * alpha * r * dt;
            let closed = sep_rz(alpha, r, dw, dt);
            assert!((p.ds_a + p.ds_c - closed).abs() < 20.0 * dt.powf(1.5));
        }
    }

    #[test]
    fn chain_ledger() {
        let s = scheme(1.0, 1e-4);
        let mut rng = stream_rng(6, 0);
        let x0 = BlochState::<f64>::on_z_axis(0.1).unwrap();
        let mut x = x0;
        let mut outs = Vec::new();
        for _ in 0..1000 {
            let o = s.step(&x, &mut rng).unwrap();
            x = o.state;
            outs.push(o);
        }
        let flat = FnLogDensity(|_x: &[f64; 1], _t: f64| Ok(0.0));
        let l = sep_discrete_oracle(&s, &x0, &outs, &flat, 0.0, 100, 1).unwrap();
        assert_eq!(l.len(), 11);
        assert!(l.identity_residual() < 1e-12);
        let mut direct = 0.0;
        let mut prev = x0;
        for o in &outs {
            direct += discrete_meas_increment(&s, &prev, o);
            prev = o.state;
        }
        assert!((l.s_meas[10] - direct).abs() < 1e-12);
        let two = KrausScheme::new(
            &[MeasurementChannel::z(1.0f64).unwrap(), MeasurementChannel::x(1.0f64).unwrap()],
            1e-4,
        )
        .unwrap();
        assert!(sep_discrete_oracle(&two, &x0, &outs, &flat, 0.0, 1, 0).is_err());
    }
}
