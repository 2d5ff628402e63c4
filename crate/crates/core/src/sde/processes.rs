use crate::bloch::PauliAxis;
use crate::error::{QsdError, Result};
use crate::fpe::StationaryThetaPdf;
use crate::kraus::MeasurementChannel;
use crate::num::Real;

use super::{Derivatives, Domain, ItoProcess};

/// Lower edge of the `Y` coordinate in the `(Y, θ)` chart.
pub const Y_FLOOR: f64 = 1e-3;

fn non_negative<T: Real>(name: &str, v: T) -> Result<T> {
    if !v.is_finite() || v < T::zero() {
        return Err(QsdError::InvalidParameter(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(v)
}

/// `dr_z = 2α_z (1 − r_z²) dW` on `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RzProcess<T> {
    pub alpha_z: T,
}

pub fn spec_rz<T: Real>(alpha_z: T) -> Result<RzProcess<T>> {
    Ok(RzProcess {
        alpha_z: non_negative("alpha_z", alpha_z)?,
    })
}

impl<T: Real> ItoProcess<T, 1> for RzProcess<T> {
    fn drift_irr(&self, _x: &[T; 1], _t: T) -> [T; 1] {
        [T::zero()]
    }

    #[inline]
    fn noise(&self, x: &[T; 1], _t: T) -> [[T; 1]; 1] {
        [[T::lit(2.0) * self.alpha_z * (T::one() - x[0] * x[0])]]
    }

    fn domain(&self) -> Domain<T> {
        Domain::Interval {
            lo: -T::one(),
            hi: T::one(),
        }
    }

    fn labels(&self) -> [&'static str; 1] {
        ["r_z"]
    }

    fn partials(&self, x: &[T; 1], _t: T, _i: usize) -> Option<Derivatives<T>> {
        let r = x[0];
        let a2 = self.alpha_z * self.alpha_z;
        Some(Derivatives {
            d_drift_rev: T::zero(),
            d_drift_irr: T::zero(),
            d_diffusion: -T::lit(8.0) * a2 * r * (T::one() - r * r),
            d2_diffusion: -T::lit(8.0) * a2 * (T::one() - T::lit(3.0) * r * r),
        })
    }
}

/// `dy = 4α_z² tanh y dt + 2α_z dW` for `y = atanh r_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YProcess<T> {
    pub alpha_z: T,
}

pub fn spec_y<T: Real>(alpha_z: T) -> Result<YProcess<T>> {
    Ok(YProcess {
        alpha_z: non_negative("alpha_z", alpha_z)?,
    })
}

impl<T: Real> ItoProcess<T, 1> for YProcess<T> {
    #[inline]
    fn drift_irr(&self, x: &[T; 1], _t: T) -> [T; 1] {
        [T::lit(4.0) * self.alpha_z * self.alpha_z * x[0].tanh()]
    }

    #[inline]
    fn noise(&self, _x: &[T; 1], _t: T) -> [[T; 1]; 1] {
        [[T::lit(2.0) * self.alpha_z]]
    }

    fn domain(&self) -> Domain<T> {
        Domain::Line
    }

    fn labels(&self) -> [&'static str; 1] {
        ["y"]
    }

    fn partials(&self, x: &[T; 1], _t: T, _i: usize) -> Option<Derivatives<T>> {
        let th = x[0].tanh();
        Some(Derivatives {
            d_drift_rev: T::zero(),
            d_drift_irr: T::lit(4.0) * self.alpha_z * self.alpha_z * (T::one() - th * th),
            d_diffusion: T::zero(),
            d2_diffusion: T::zero(),
        })
    }
}

/// Simultaneous measurement of σ_x and σ_z in `(r_x, r_z)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XzProcess<T> {
    pub alpha_x: T,
    pub alpha_z: T,
}

pub fn spec_xz<T: Real>(alpha_x: T, alpha_z: T) -> Result<XzProcess<T>> {
    Ok(XzProcess {
        alpha_x: non_negative("alpha_x", alpha_x)?,
        alpha_z: non_negative("alpha_z", alpha_z)?,
    })
}

impl<T: Real> ItoProcess<T, 2> for XzProcess<T> {
    #[inline]
    fn drift_irr(&self, x: &[T; 2], _t: T) -> [T; 2] {
        let two = T::lit(2.0);
        [
            -two * self.alpha_z * self.alpha_z * x[0],
            -two * self.alpha_x * self.alpha_x * x[1],
        ]
    }

    /// Rows `(r_x, r_z)`, columns `(dW_x, dW_z)`.
    #[inline]
    fn noise(&self, x: &[T; 2], _t: T) -> [[T; 2]; 2] {
        let two = T::lit(2.0);
        let (rx, rz) = (x[0], x[1]);
        [
            [
                two * self.alpha_x * (T::one() - rx * rx),
                -two * self.alpha_z * rx * rz,
            ],
            [
                -two * self.alpha_x * rz * rx,
                two * self.alpha_z * (T::one() - rz * rz),
            ],
        ]
    }

    fn domain(&self) -> Domain<T> {
        Domain::UnitBall
    }

    fn labels(&self) -> [&'static str; 2] {
        ["r_x", "r_z"]
    }
}

/// Equal-strength simultaneous measurement in `(Y, θ) = (atanh r², atan2(r_x, r_z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YThetaProcess<T> {
    pub alpha: T,
    pub floor: T,
}

pub fn spec_y_theta<T: Real>(alpha: T) -> Result<YThetaProcess<T>> {
    Ok(YThetaProcess {
        alpha: non_negative("alpha", alpha)?,
        floor: T::lit(Y_FLOOR),
    })
}

impl<T: Real> YThetaProcess<T> {
    /// Maps `(r_x, r_z)` to `(Y, θ)`.
    pub fn chart(r_x: T, r_z: T) -> [T; 2] {
        let r2 = r_x * r_x + r_z * r_z;
        [r2.atanh(), r_x.atan2(r_z)]
    }
}

impl<T: Real> ItoProcess<T, 2> for YThetaProcess<T> {
    #[inline]
    fn drift_irr(&self, x: &[T; 2], _t: T) -> [T; 2] {
        let tau = x[0].tanh();
        let one_p = T::one() + tau;
        let a2 = self.alpha * self.alpha;
        [
            T::lit(4.0) * a2 * (T::lit(2.0) + tau + T::lit(3.0) * tau * tau) / (one_p * one_p),
            T::zero(),
        ]
    }

    #[inline]
    fn noise(&self, x: &[T; 2], _t: T) -> [[T; 2]; 2] {
        let tau = x[0].tanh();
        let s = tau.sqrt();
        [
            [T::lit(4.0) * self.alpha * s / (T::one() + tau), T::zero()],
            [T::zero(), T::lit(2.0) * self.alpha / s],
        ]
    }

    fn domain(&self) -> Domain<T> {
        Domain::RadialAngular { floor: self.floor }
    }

    fn labels(&self) -> [&'static str; 2] {
        ["Y", "theta"]
    }

    fn partials(&self, x: &[T; 2], _t: T, i: usize) -> Option<Derivatives<T>> {
        if i == 1 {
            // neither A_θ nor D_θ depends on θ
            return Some(Derivatives::default());
        }
        let tau = x[0].tanh();
        let a2 = self.alpha * self.alpha;
        let one_p = T::one() + tau;
        let one_m = T::one() - tau;
        let q = one_m / one_p;
        Some(Derivatives {
            d_drift_rev: T::zero(),
            d_drift_irr: T::lit(4.0) * a2 * (T::lit(5.0) * tau - T::lit(3.0)) * one_m
                / (one_p * one_p),
            d_diffusion: T::lit(8.0) * a2 * q * q,
            d2_diffusion: -T::lit(32.0) * a2 * q * q,
        })
    }
}

/// Angle on the pure-state circle under simultaneous measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaProcess<T> {
    pub alpha_x: T,
    pub alpha_z: T,
}

pub fn spec_theta<T: Real>(alpha_x: T, alpha_z: T) -> Result<ThetaProcess<T>> {
    let alpha_x = non_negative("alpha_x", alpha_x)?;
    let alpha_z = non_negative("alpha_z", alpha_z)?;
    if alpha_x == T::zero() && alpha_z == T::zero() {
        return Err(QsdError::InvalidParameter(
            "at least one measurement strength must be positive".into(),
        ));
    }
    Ok(ThetaProcess { alpha_x, alpha_z })
}

impl<T: Real> ThetaProcess<T> {
    /// `α_x² cos²θ + α_z² sin²θ`.
    #[inline]
    pub fn mix(&self, theta: T) -> T {
        let (s, c) = theta.sin_cos();
        self.alpha_x * self.alpha_x * c * c + self.alpha_z * self.alpha_z * s * s
    }

    /// `α_x² − α_z²`.
    #[inline]
    pub fn asymmetry(&self) -> T {
        self.alpha_x * self.alpha_x - self.alpha_z * self.alpha_z
    }

    /// Stationary density for the strength ratio of this process.
    pub fn stationary_pdf(&self) -> Result<StationaryThetaPdf<T>> {
        if self.alpha_z == T::zero() || self.alpha_x == T::zero() {
            return Err(QsdError::NoStationaryState);
        }
        StationaryThetaPdf::new(self.alpha_x / self.alpha_z)
    }
}

impl<T: Real> ItoProcess<T, 1> for ThetaProcess<T> {
    #[inline]
    fn drift_irr(&self, x: &[T; 1], _t: T) -> [T; 1] {
        [self.asymmetry() * (T::lit(2.0) * x[0]).sin()]
    }

    #[inline]
    fn noise(&self, x: &[T; 1], _t: T) -> [[T; 1]; 1] {
        [[T::lit(2.0) * self.mix(x[0]).sqrt()]]
    }

    fn domain(&self) -> Domain<T> {
        Domain::Periodic {
            lo: -T::PI(),
            hi: T::PI(),
        }
    }

    fn labels(&self) -> [&'static str; 1] {
        ["theta"]
    }

    fn partials(&self, x: &[T; 1], _t: T, _i: usize) -> Option<Derivatives<T>> {
        let a = self.asymmetry();
        let (s2, c2) = (T::lit(2.0) * x[0]).sin_cos();
        Some(Derivatives {
            d_drift_rev: T::zero(),
            d_drift_irr: T::lit(2.0) * a * c2,
            d_diffusion: -T::lit(2.0) * a * s2,
            d2_diffusion: -T::lit(4.0) * a * c2,
        })
    }

    fn stationary_ln_density(&self, x: &[T; 1]) -> Option<T> {
        self.stationary_pdf().ok().map(|p| p.ln_density(x[0]))
    }
}

/// Full Bloch-vector form of the stochastic Lindblad equation for one or
/// two Pauli channels (one Wiener process per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct BlochLindbladProcess<T> {
    channels: Vec<MeasurementChannel<T>>,
}

impl<T: Real> BlochLindbladProcess<T> {
    pub fn new(channels: &[MeasurementChannel<T>]) -> Result<Self> {
        if channels.is_empty() || channels.len() > 3 {
            return Err(QsdError::InvalidParameter(format!(
                "1 to 3 channels supported, got {}",
                channels.len()
            )));
        }
        Ok(Self {
            channels: channels.to_vec(),
        })
    }

    fn index(axis: PauliAxis) -> usize {
        match axis {
            PauliAxis::X => 0,
            PauliAxis::Y => 1,
            PauliAxis::Z => 2,
        }
    }
}

impl<T: Real> ItoProcess<T, 3> for BlochLindbladProcess<T> {
    fn drift_irr(&self, x: &[T; 3], _t: T) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for ch in &self.channels {
            let k = Self::index(ch.axis);
            let a2 = ch.strength * ch.strength;
            for (j, o) in out.iter_mut().enumerate() {
                if j != k {
                    *o = *o - T::lit(2.0) * a2 * x[j];
                }
            }
        }
        out
    }

    fn noise(&self, x: &[T; 3], _t: T) -> [[T; 3]; 3] {
        let mut b = [[T::zero(); 3]; 3];
        for (w, ch) in self.channels.iter().enumerate() {
            let k = Self::index(ch.axis);
            let two_a = T::lit(2.0) * ch.strength;
            for (j, row) in b.iter_mut().enumerate() {
                row[w] = if j == k {
                    two_a * (T::one() - x[k] * x[k])
                } else {
                    -two_a * x[k] * x[j]
                };
            }
        }
        b
    }

    fn wiener_dim(&self) -> usize {
        self.channels.len()
    }

    fn domain(&self) -> Domain<T> {
        Domain::UnitBall
    }

    fn labels(&self) -> [&'static str; 3] {
        ["r_x", "r_y", "r_z"]
    }
}

/// Constant coefficients on an arbitrary one-dimensional domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProcess<T> {
    pub drift_rev: T,
    pub drift_irr: T,
    pub noise: T,
    pub domain: Domain<T>,
}

impl<T: Real> ItoProcess<T, 1> for ConstantProcess<T> {
    fn drift_rev(&self, _x: &[T; 1], _t: T) -> [T; 1] {
        [self.drift_rev]
    }

    fn drift_irr(&self, _x: &[T; 1], _t: T) -> [T; 1] {
        [self.drift_irr]
    }

    fn noise(&self, _x: &[T; 1], _t: T) -> [[T; 1]; 1] {
        [[self.noise]]
    }

    fn domain(&self) -> Domain<T> {
        self.domain
    }

    fn labels(&self) -> [&'static str; 1] {
        ["x"]
    }

    fn partials(&self, _x: &[T; 1], _t: T, _i: usize) -> Option<Derivatives<T>> {
        Some(Derivatives::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fd_check<P: ItoProcess<f64, D>, const D: usize>(p: &P, x: [f64; D], i: usize) {
        let h: f64 = 1e-5;
        let an = p.partials(&x, 0.0, i).unwrap();
        let shift = |d: f64| {
            let mut y = x;
            y[i] += d;
            y
        };
        let a = |y: &[f64; D]| p.drift_irr(y, 0.0)[i];
        let dd = |y: &[f64; D]| p.diffusion(y, 0.0, i);
        let fa = (a(&shift(h)) - a(&shift(-h))) / (2.0 * h);
        let fd = (dd(&shift(h)) - dd(&shift(-h))) / (2.0 * h);
        let fd2 = (dd(&shift(h)) - 2.0 * dd(&x) + dd(&shift(-h))) / (h * h);
        assert!((an.d_drift_irr - fa).abs() < 1e-6 * (1.0 + fa.abs()), "{an:?} vs {fa}");
        assert!((an.d_diffusion - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{an:?} vs {fd}");
        assert!((an.d2_diffusion - fd2).abs() < 1e-3 * (1.0 + fd2.abs()), "{an:?} vs {fd2}");
    }

    #[test]
    fn rz_coefficients() {
        let p = spec_rz(1.5f64).unwrap();
        assert_eq!(p.noise(&[0.0], 0.0)[0][0], 3.0);
        assert_eq!(p.noise(&[1.0], 0.0)[0][0], 0.0);
        assert_eq!(p.noise(&[-1.0], 0.0)[0][0], 0.0);
        let r: f64 = 0.4;
        let d = p.diffusion(&[r], 0.0, 0);
        assert!((d - 2.0 * 2.25 * (1.0 - r * r).powi(2)).abs() < 1e-14);
        fd_check(&p, [0.37], 0);
        assert!(spec_rz(-1.0f64).is_err());
    }

    #[test]
    fn y_coefficients() {
        let p = spec_y(1.0f64).unwrap();
        assert_eq!(p.drift_irr(&[0.0], 0.0)[0], 0.0);
        assert!((p.drift_irr(&[40.0], 0.0)[0] - 4.0).abs() < 1e-12);
        assert_eq!(p.noise(&[3.0], 0.0)[0][0], 2.0);
        fd_check(&p, [0.8], 0);
    }

    #[test]
    fn xz_reduces_to_single_channel() {
        let p = spec_xz(0.0f64, 1.0).unwrap();
        let x = [0.3, 0.5];
        let b = p.noise(&x, 0.0);
        let a = p.drift_irr(&x, 0.0);
        assert_eq!(b[1][1], 2.0 * (1.0 - 0.25));
        assert_eq!(b[1][0], 0.0);
        assert_eq!(a[1], 0.0);
        assert_eq!(a[0], -2.0 * 0.3);
        assert_eq!(b[0][1], -2.0 * 0.3 * 0.5);
        // origin: independent noises
        let p = spec_xz(0.7f64, 1.2).unwrap();
        let b = p.noise(&[0.0, 0.0], 0.0);
        assert_eq!(b, [[1.4, 0.0], [0.0, 2.4]]);
    }

    #[test]
    fn xz_radial_drift_vanishes_on_sphere() {
        // Itô drift of r² = 2 r·A + Σ_ij B_ij²
        let p = spec_xz(0.8f64, 1.3).unwrap();
        for k in 0..32 {
            let th = 2.0 * PI * k as f64 / 32.0;
            let x = [th.sin(), th.cos()];
            let a = p.drift_irr(&x, 0.0);
            let b = p.noise(&x, 0.0);
            let tr: f64 = b.iter().flatten().map(|v| v * v).sum();
            let drift = 2.0 * (x[0] * a[0] + x[1] * a[1]) + tr;
            assert!(drift.abs() < 1e-13, "θ = {th}: {drift}");
        }
    }

    #[test]
    fn y_theta_asymptotics() {
        let p = spec_y_theta(1.3f64).unwrap();
        let x = [40.0, 0.2];
        let a = p.drift_irr(&x, 0.0);
        let b = p.noise(&x, 0.0);
        assert!((a[0] - 6.0 * 1.69).abs() < 1e-12);
        assert!((b[0][0] - 2.0 * 1.3).abs() < 1e-12);
        assert!((b[1][1] - 2.0 * 1.3).abs() < 1e-12);
        fd_check(&p, [0.9, 0.3], 0);
        fd_check(&p, [2.5, -1.0], 0);
    }

    #[test]
    fn y_theta_drift_matches_ito_transform_of_xz() {
        // Itô's lemma for Y = atanh(r²) applied to the (r_x, r_z) SDEs, α_x = α_z
        let alpha: f64 = 0.9;
        let xz = spec_xz(alpha, alpha).unwrap();
        let yt = spec_y_theta(alpha).unwrap();
        let x = [0.31, -0.52];
        let q: f64 = x[0] * x[0] + x[1] * x[1];
        let a = xz.drift_irr(&x, 0.0);
        let b = xz.noise(&x, 0.0);
        // gradient and Hessian of atanh(r²)
        let g = 1.0 / (1.0 - q * q);
        let grad = [2.0 * x[0] * g, 2.0 * x[1] * g];
        let gq = 2.0 * q * g * g; // d/dq of g
        let hess = |i: usize, j: usize| {
            let delta = if i == j { 2.0 * g } else { 0.0 };
            delta + 4.0 * x[i] * x[j] * gq
        };
        let mut drift = grad[0] * a[0] + grad[1] * a[1];
        for i in 0..2 {
            for j in 0..2 {
                let bbt: f64 = (0..2).map(|k| b[i][k] * b[j][k]).sum();
                drift += 0.5 * hess(i, j) * bbt;
            }
        }
        let yt_drift = yt.drift_irr(&YThetaProcess::chart(x[0], x[1]), 0.0)[0];
        assert!((drift - yt_drift).abs() < 1e-12, "{drift} vs {yt_drift}");
        let var: f64 = (0..2)
            .map(|k| (grad[0] * b[0][k] + grad[1] * b[1][k]).powi(2))
            .sum();
        let by = yt.noise(&YThetaProcess::chart(x[0], x[1]), 0.0)[0][0];
        assert!((var - by * by).abs() < 1e-12);
    }

    #[test]
    fn theta_coefficients() {
        let p = spec_theta(1.0f64, 1.0).unwrap();
        assert_eq!(p.drift_irr(&[0.7], 0.0)[0], 0.0);
        assert!((p.noise(&[0.7], 0.0)[0][0] - 2.0).abs() < 1e-15);
        let p = spec_theta(2.0f64, 1.0).unwrap();
        assert_eq!(p.drift_irr(&[0.0], 0.0)[0], 0.0);
        assert_eq!(p.noise(&[0.0], 0.0)[0][0], 4.0);
        for th in [PI / 4.0, -PI / 4.0, 3.0 * PI / 4.0, -3.0 * PI / 4.0] {
            assert!((p.drift_irr(&[th], 0.0)[0].abs() - 3.0).abs() < 1e-14);
        }
        fd_check(&p, [0.4], 0);
        assert!(spec_theta(0.0f64, 0.0).is_err());
    }

    #[test]
    fn bloch_lindblad_matches_xz_in_plane() {
        let chs = [MeasurementChannel::z(1.1f64).unwrap(), MeasurementChannel::x(0.6f64).unwrap()];
        let full = BlochLindbladProcess::new(&chs).unwrap();
        let xz = spec_xz(0.6f64, 1.1).unwrap();
        let x3 = [0.2, 0.0, -0.4];
        let x2 = [0.2, -0.4];
        let a3 = full.drift_irr(&x3, 0.0);
        let a2 = xz.drift_irr(&x2, 0.0);
        assert!((a3[0] - a2[0]).abs() < 1e-15 && (a3[2] - a2[1]).abs() < 1e-15);
        assert_eq!(a3[1], 0.0);
        let b3 = full.noise(&x3, 0.0);
        let b2 = xz.noise(&x2, 0.0);
        // full columns: (W_z, W_x); xz columns: (W_x, W_z)
        assert!((b3[0][1] - b2[0][0]).abs() < 1e-15);
        assert!((b3[0][0] - b2[0][1]).abs() < 1e-15);
        assert!((b3[2][0] - b2[1][1]).abs() < 1e-15);
        assert!((b3[2][1] - b2[1][0]).abs() < 1e-15);
        assert_eq!(b3[1], [0.0, 0.0, 0.0]);
    }
}
