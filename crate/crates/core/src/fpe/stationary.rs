use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::quad;
use crate::sde::{ItoProcess, ThetaProcess};

use super::complete_elliptic_e;

/// Points used for periodic trapezoid moments (spectrally accurate).
const MOMENT_POINTS: usize = 8192;

/// Zero-current stationary density of the measured angle for strength
/// ratio `μ = α_x / α_z`:
///
/// `p_st(θ) = √2 μ² (1 + μ² − (1 − μ²) cos 2θ)^{−3/2} / [E(1 − μ²) + μ E(1 − μ⁻²)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryThetaPdf<T> {
    mu: T,
    /// `√2 μ² / [E(1 − μ²) + μ E(1 − μ⁻²)]`.
    prefactor: T,
}

impl<T: Real> StationaryThetaPdf<T> {
    pub fn new(mu: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(QsdError::InvalidParameter(format!(
                "strength ratio must be positive and finite, got {mu}"
            )));
        }
        let mu2 = mu * mu;
        let denom =
            complete_elliptic_e(T::one() - mu2)? + mu * complete_elliptic_e(T::one() - T::one() / mu2)?;
        Ok(Self {
            mu,
            prefactor: T::SQRT_2() * mu2 / denom,
        })
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    /// Normalization constant (the prefactor multiplying the bracket).
    pub fn prefactor(&self) -> T {
        self.prefactor
    }

    #[inline]
    fn base(&self, theta: T) -> T {
        let mu2 = self.mu * self.mu;
        T::one() + mu2 - (T::one() - mu2) * (T::lit(2.0) * theta).cos()
    }

    pub fn density(&self, theta: T) -> T {
        let g = self.base(theta);
        self.prefactor / (g * g.sqrt())
    }

    pub fn ln_density(&self, theta: T) -> T {
        self.prefactor.ln() - T::lit(1.5) * self.base(theta).ln()
    }

    /// `dp_st/dθ`.
    pub fn derivative(&self, theta: T) -> T {
        let mu2 = self.mu * self.mu;
        let g = self.base(theta);
        let dg = T::lit(2.0) * (T::one() - mu2) * (T::lit(2.0) * theta).sin();
        -T::lit(1.5) * self.prefactor * dg / (g * g * g.sqrt())
    }

    /// Probability current `A p − d(D p)/dθ` under `process`, which must have
    /// the same strength ratio.
    pub fn current(&self, process: &ThetaProcess<T>, theta: T) -> T {
        let x = [theta];
        let a = process.drift(&x, T::zero())[0];
        let d = process.diffusion(&x, T::zero(), 0);
        let dd = process
            .partials(&x, T::zero(), 0)
            .map(|p| p.d_diffusion)
            .unwrap_or_else(T::zero);
        let p = self.density(theta);
        a * p - (dd * p + d * self.derivative(theta))
    }

    /// `∫ p_st` over one period by adaptive quadrature.
    pub fn total_mass(&self) -> Result<T> {
        let tol = T::lit(1e-13).max(T::epsilon() * T::lit(16.0));
        Ok(quad::integrate(|t| self.density(t), -T::PI(), T::PI(), tol)?.0)
    }
}

/// Convenience constructor matching the other `spec`-style builders.
pub fn stationary_theta_pdf<T: Real>(mu: T) -> Result<StationaryThetaPdf<T>> {
    StationaryThetaPdf::new(mu)
}

/// Moments of `r_x = sin θ`, `r_z = cos θ` in the stationary state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMoments<T> {
    pub mean_rx: T,
    pub mean_rz: T,
    pub var_rx: T,
    pub var_rz: T,
}

pub fn stationary_moments<T: Real>(mu: T) -> Result<StationaryMoments<T>> {
    let pdf = StationaryThetaPdf::new(mu)?;
    let m = |f: &dyn Fn(T) -> T| {
        quad::periodic_trapezoid(|t| f(t) * pdf.density(t), -T::PI(), T::TAU(), MOMENT_POINTS)
    };
    let mean_rx = m(&|t: T| t.sin());
    let mean_rz = m(&|t: T| t.cos());
    let sq_x = m(&|t: T| t.sin() * t.sin());
    let sq_z = m(&|t: T| t.cos() * t.cos());
    Ok(StationaryMoments {
        mean_rx,
        mean_rz,
        var_rx: sq_x - mean_rx * mean_rx,
        var_rz: sq_z - mean_rz * mean_rz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::spec_theta;
    use std::f64::consts::PI;

    #[test]
    fn isotropic_is_uniform() {
        let p = StationaryThetaPdf::new(1.0f64).unwrap();
        for t in [-3.0, 0.0, 0.4, 2.0] {
            assert!((p.density(t) - 1.0 / (2.0 * PI)).abs() < 1e-14);
        }
        let m = stationary_moments(1.0f64).unwrap();
        assert!((m.var_rx - 0.5).abs() < 1e-12 && (m.var_rz - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalized_and_symmetric() {
        for mu2 in [0.2f64, 2.0, 5.0] {
            let p = StationaryThetaPdf::new(mu2.sqrt()).unwrap();
            assert!((p.total_mass().unwrap() - 1.0).abs() < 1e-10, "μ² = {mu2}");
            for t in [0.1, 0.7, 1.3, 2.9] {
                assert!((p.density(t) - p.density(-t)).abs() < 1e-14);
                assert!((p.density(t) - p.density(PI - t)).abs() < 1e-13);
                assert!((p.density(t) - p.density(t + 2.0 * PI)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn peaks_follow_stronger_measurement() {
        let p = StationaryThetaPdf::new(5f64.sqrt()).unwrap();
        assert!(p.density(PI / 2.0) > p.density(0.0));
        assert!(p.density(-PI / 2.0) > p.density(PI));
        let grid: Vec<f64> = (0..1000).map(|i| -PI + 2.0 * PI * i as f64 / 1000.0).collect();
        let (argmax, _) = grid
            .iter()
            .map(|&t| (t, p.density(t)))
            .fold((0.0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
        assert!((argmax.abs() - PI / 2.0).abs() < 0.01);
    }

    #[test]
    fn zero_current() {
        for mu in [0.447, 1.0, 1.414, 2.236] {
            let proc = spec_theta(mu, 1.0).unwrap();
            let p = proc.stationary_pdf().unwrap();
            let peak = p.density(PI / 2.0).max(p.density(0.0));
            for i in 0..720 {
                let t = -PI + 2.0 * PI * i as f64 / 720.0;
                assert!(p.current(&proc, t).abs() < 1e-8 * peak, "μ = {mu}, θ = {t}");
            }
        }
    }

    #[test]
    fn derivative_matches_difference() {
        let p = StationaryThetaPdf::new(0.6f64).unwrap();
        let h: f64 = 1e-6;
        for t in [0.2, 1.0, 2.5] {
            let fd = (p.density(t + h) - p.density(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn moments() {
        let expected = [(0.2, 0.771_17), (2.0, 0.372_73), (5.0, 0.228_83)];
        for (mu2, var_z) in expected {
            let m = stationary_moments(f64::sqrt(mu2)).unwrap();
            assert!(m.mean_rx.abs() < 1e-12 && m.mean_rz.abs() < 1e-12);
            assert!((m.var_rx + m.var_rz - 1.0).abs() < 1e-12);
            assert!((m.var_rz - var_z).abs() < 1e-5, "μ² = {mu2}: {}", m.var_rz);
        }
        let m = stationary_moments(30.0f64).unwrap();
        assert!(m.var_rx > 0.95);
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(StationaryThetaPdf::new(0.0f64).is_err());
        assert!(StationaryThetaPdf::new(f64::INFINITY).is_err());
    }
}
