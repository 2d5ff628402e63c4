//! Stochastic entropy production along trajectories.
//!
//! Every ledger splits the total production into a system part `−Δ ln p`
//! and a measurement part, which is whatever remains once the system part is
//! removed. The measurement part is produced by one of:
//!
//! * the general Itô formula ([`GeneralFormula`]),
//! * closed forms for particular charts ([`sep_rz`], [`sep_y`], [`sep_theta`],
//!   [`sep_2d_asymptotic`]),
//! * the stationary shortcut `Δ ln p_st` ([`sep_stationary_shortcut`]),
//! * the forward/backward Kraus probabilities ([`discrete`]).

pub mod discrete;
mod formula;
mod ledger;
mod rate;

pub use discrete::{discrete_meas_increment, discrete_parts, sep_discrete_oracle, DiscreteParts};
pub use formula::{
    sep_2d_asymptotic, sep_rz, sep_stationary_shortcut, sep_theta, sep_y, DerivativeMode,
    GeneralFormula,
};
pub(crate) use formula::displacement;
pub use ledger::{ledger_from_record, write_ledgers_csv, EntropyLedger, LedgerRecorder};
pub use rate::{asymptotic_mean_rate, ensemble_mean, LedgerSummary, RateEstimate};

use std::cell::Cell;

use crate::error::{QsdError, Result};
use crate::fpe::{AsymptoticPdf, PdfField, StationaryThetaPdf};
use crate::num::Real;
use crate::quad;

/// Source of `ln p(x, t)` for the system part of a ledger.
pub trait LogDensity<T: Real, const D: usize>: Sync {
    fn ln_density(&self, x: &[T; D], t: T) -> Result<T>;
}

impl<T: Real> LogDensity<T, 1> for PdfField<T> {
    fn ln_density(&self, x: &[T; 1], t: T) -> Result<T> {
        PdfField::ln_density(self, x[0], t)
    }
}

impl<T: Real> LogDensity<T, 1> for AsymptoticPdf<T> {
    fn ln_density(&self, x: &[T; 1], t: T) -> Result<T> {
        Ok(AsymptoticPdf::ln_density(self, x[0], t))
    }
}

impl<T: Real> LogDensity<T, 1> for StationaryThetaPdf<T> {
    fn ln_density(&self, x: &[T; 1], _t: T) -> Result<T> {
        Ok(StationaryThetaPdf::ln_density(self, x[0]))
    }
}

impl<T: Real, const D: usize, L: LogDensity<T, D> + ?Sized> LogDensity<T, D> for &L {
    fn ln_density(&self, x: &[T; D], t: T) -> Result<T> {
        (**self).ln_density(x, t)
    }
}

/// Density of `r_z = tanh y` obtained from a density in `y`:
/// `p_r(r, t) = p_y(atanh r, t) / (1 − r²)`.
#[derive(Debug, Clone)]
pub struct RzFromY<S> {
    pub y_density: S,
}

impl<T: Real, S: LogDensity<T, 1>> LogDensity<T, 1> for RzFromY<S> {
    fn ln_density(&self, x: &[T; 1], t: T) -> Result<T> {
        let r = x[0];
        if !(r.abs() < T::one()) {
            return Err(QsdError::OutOfRange {
                x: r.to_f64_lossless(),
                t: t.to_f64_lossless(),
            });
        }
        Ok(self.y_density.ln_density(&[r.atanh()], t)? - (T::one() - r * r).ln())
    }
}

/// `F(Y, t) / 2π` on the `(Y, θ)` chart: the late-time gaussian in `Y`
/// times a uniform angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialAngularAsymptotic<T> {
    pub alpha: T,
}

impl<T: Real> LogDensity<T, 2> for RadialAngularAsymptotic<T> {
    fn ln_density(&self, x: &[T; 2], t: T) -> Result<T> {
        let radial = AsymptoticPdf::YRadial { alpha: self.alpha };
        Ok(radial.ln_density(x[0], t) - T::TAU().ln())
    }
}

/// Wraps a closure as a log-density.
pub struct FnLogDensity<F>(pub F);

impl<T: Real, const D: usize, F> LogDensity<T, D> for FnLogDensity<F>
where
    F: Fn(&[T; D], T) -> Result<T> + Sync,
{
    fn ln_density(&self, x: &[T; D], t: T) -> Result<T> {
        (self.0)(x, t)
    }
}

/// Gibbs entropy `−Σ p ln p w` of stored slice `k` (`0 ln 0 = 0`).
pub fn gibbs_entropy<T: Real>(field: &PdfField<T>, k: usize) -> T {
    let g = field.grid();
    field
        .slice(k)
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > T::zero() {
                -p * p.ln() * g.cell_width(i)
            } else {
                T::zero()
            }
        })
        .sum()
}

/// `∫_lo^hi p ln(p / q)` by adaptive quadrature.
///
/// Fails with [`QsdError::SupportMismatch`] if `q` vanishes where `p` does not.
pub fn kl_divergence<T: Real, P, Q>(p: P, q: Q, lo: T, hi: T) -> Result<T>
where
    P: Fn(T) -> T,
    Q: Fn(T) -> T,
{
    let mismatch: Cell<Option<(f64, f64)>> = Cell::new(None);
    let tol = T::lit(1e-13).max(T::epsilon() * T::lit(64.0));
    let (v, _) = quad::integrate(
        |x| {
            let pv = p(x);
            if !(pv > T::zero()) {
                return T::zero();
            }
            let qv = q(x);
            if !(qv > T::zero()) {
                if mismatch.get().is_none() {
                    mismatch.set(Some((x.to_f64_lossless(), pv.to_f64_lossless())));
                }
                return T::zero();
            }
            pv * (pv / qv).ln()
        },
        lo,
        hi,
        tol,
    )?;
    if let Some((x, p)) = mismatch.get() {
        return Err(QsdError::SupportMismatch { x, p });
    }
    Ok(v)
}

/// Asymptotic mean production after switching the strength ratio from
/// `mu_initial` to `mu_final` with the system in its initial stationary state:
/// `KL(p_st(mu_initial) ‖ p_st(mu_final))`.
pub fn quench_production<T: Real>(mu_initial: T, mu_final: T) -> Result<T> {
    let pi = StationaryThetaPdf::new(mu_initial)?;
    let pf = StationaryThetaPdf::new(mu_final)?;
    kl_divergence(|t| pi.density(t), |t| pf.density(t), -T::PI(), T::PI())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::Grid1D;
    use std::f64::consts::PI;

    #[test]
    fn gibbs_uniform_and_gaussian() {
        let g = Grid1D::<f64>::periodic(128).unwrap();
        let f = PdfField::constant(g, g.uniform()).unwrap();
        assert!((gibbs_entropy(&f, 0) - (2.0 * PI).ln()).abs() < 1e-12);
        let g = Grid1D::<f64>::truncated_line(12.0, 4096).unwrap();
        let f = PdfField::constant(g, g.gaussian(0.0, 1.0).unwrap()).unwrap();
        let expected = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((gibbs_entropy(&f, 0) - expected).abs() < 1e-4);
        let narrow = PdfField::constant(g, g.gaussian(0.0, 0.2).unwrap()).unwrap();
        assert!(gibbs_entropy(&narrow, 0) < gibbs_entropy(&f, 0));
    }

    #[test]
    fn kl_basics() {
        let p = StationaryThetaPdf::new(2.0f64).unwrap();
        let self_kl = kl_divergence(|t| p.density(t), |t| p.density(t), -PI, PI).unwrap();
        assert!(self_kl.abs() < 1e-14);
        let u = |_t: f64| 1.0 / (2.0 * PI);
        assert!(kl_divergence(u, u, -PI, PI).unwrap().abs() < 1e-15);
        let err = kl_divergence(u, |t: f64| if t > 0.0 { 1.0 / PI } else { 0.0 }, -PI, PI);
        assert!(matches!(err, Err(QsdError::SupportMismatch { .. })));
    }

    #[test]
    fn quench_values() {
        let k5 = quench_production(1.0f64, 5f64.sqrt()).unwrap();
        let k02 = quench_production(1.0f64, 0.2f64.sqrt()).unwrap();
        let k2 = quench_production(1.0f64, 2f64.sqrt()).unwrap();
        assert!((k5 - 0.351_567_707_456_481).abs() < 1e-10, "{k5}");
        assert!((k5 - k02).abs() < 1e-10);
        assert!((k2 - 0.067_104_351_479_922).abs() < 1e-10, "{k2}");
        assert_eq!(quench_production(1.0f64, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mapped_density_integrates_to_one() {
        let y = AsymptoticPdf::YPair { alpha: 1.0f64 };
        let m = RzFromY { y_density: y };
        let (v, _) = quad::integrate(
            |r: f64| m.ln_density(&[r], 0.2).unwrap().exp(),
            -1.0 + 1e-12,
            1.0 - 1e-12,
            1e-10,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-7, "{v}");
        assert!(m.ln_density(&[1.0], 0.2).is_err());
    }
}
