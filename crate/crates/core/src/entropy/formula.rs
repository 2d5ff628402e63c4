use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::sde::{Derivatives, Domain, ItoProcess, ThetaProcess};

use super::LogDensity;

/// How coefficient derivatives are obtained for the general formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Use the process's analytic partials, falling back to finite
    /// differences for processes that do not provide them.
    #[default]
    Analytic,
    /// Always use central finite differences.
    FiniteDifference,
}

/// Relative step for first derivatives.
const FD_STEP: f64 = 1e-6;
/// Relative step for the second derivative of `D` (cube root of machine epsilon scale).
const FD_STEP_2: f64 = 1e-4;

/// Off-diagonal noise entries below this fraction of the largest entry are
/// treated as zero.
const DIAGONAL_TOL: f64 = 1e-12;

/// The general expression for the total entropy increment of an Itô process,
///
/// ```text
/// dΔs_tot = −d ln p + (A_irr/D) dx − (A_rev A_irr/D) dt + ∂A_irr dt − ∂A_rev dt
///           − (∂D/D) dx + ((A_rev − A_irr)/D) ∂D dt − ∂²D dt + ((∂D)²/D) dt,
/// ```
///
/// with all coefficients evaluated at the start of the step. Multi-coordinate
/// processes must have diagonal noise; the expression is then applied to each
/// coordinate and summed.
#[derive(Debug, Clone, Copy)]
pub struct GeneralFormula<'a, P: ?Sized> {
    process: &'a P,
    mode: DerivativeMode,
}

impl<'a, P: ?Sized> GeneralFormula<'a, P> {
    pub fn new(process: &'a P, mode: DerivativeMode) -> Self {
        Self { process, mode }
    }
}

impl<P: ?Sized> GeneralFormula<'_, P> {
    fn finite_difference<T: Real, const D: usize>(&self, x: &[T; D], t: T, i: usize) -> Derivatives<T>
    where
        P: ItoProcess<T, D>,
    {
        let span = self.process.domain().span(i);
        let eval = |h: T| {
            let mut y = *x;
            y[i] = y[i] + h;
            (
                self.process.drift_rev(&y, t)[i],
                self.process.drift_irr(&y, t)[i],
                self.process.diffusion(&y, t, i),
            )
        };
        let h1 = T::lit(FD_STEP) * span;
        let (rp, ip, dp) = eval(h1);
        let (rm, im, dm) = eval(-h1);
        let two_h = T::lit(2.0) * h1;
        let h2 = T::lit(FD_STEP_2) * span;
        let (_, _, dp2) = eval(h2);
        let (_, _, dm2) = eval(-h2);
        let d0 = self.process.diffusion(x, t, i);
        Derivatives {
            d_drift_rev: (rp - rm) / two_h,
            d_drift_irr: (ip - im) / two_h,
            d_diffusion: (dp - dm) / two_h,
            d2_diffusion: (dp2 - T::lit(2.0) * d0 + dm2) / (h2 * h2),
        }
    }

    /// Coefficient derivatives of coordinate `i` at `(x, t)`.
    pub fn derivatives<T: Real, const D: usize>(&self, x: &[T; D], t: T, i: usize) -> Derivatives<T>
    where
        P: ItoProcess<T, D>,
    {
        match self.mode {
            DerivativeMode::Analytic => self
                .process
                .partials(x, t, i)
                .unwrap_or_else(|| self.finite_difference(x, t, i)),
            DerivativeMode::FiniteDifference => self.finite_difference(x, t, i),
        }
    }

    /// Measurement part of the increment (every term except `−d ln p`).
    pub fn meas_increment<T: Real, const D: usize>(
        &self,
        x: &[T; D],
        t: T,
        dx: &[T; D],
        dt: T,
    ) -> Result<T>
    where
        P: ItoProcess<T, D>,
    {
        let b = self.process.noise(x, t);
        if D > 1 {
            let scale = b.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
            for (i, row) in b.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if i != j && v.abs() > T::lit(DIAGONAL_TOL) * scale {
                        return Err(QsdError::NonDiagonalNoise);
                    }
                }
            }
        }
        let a_rev = self.process.drift_rev(x, t);
        let a_irr = self.process.drift_irr(x, t);
        let mut total = T::zero();
        for i in 0..D {
            let d = T::lit(0.5) * b[i].iter().map(|&v| v * v).sum::<T>();
            if !(d > T::zero()) {
                return Err(QsdError::NonPositiveDiffusion(d.to_f64_lossless()));
            }
            let der = self.derivatives(x, t, i);
            let (ar, ai) = (a_rev[i], a_irr[i]);
            let dd = der.d_diffusion;
            let inv_d = T::one() / d;
            let along_path = (ai - dd) * inv_d * dx[i];
            let in_time = -ar * ai * inv_d + der.d_drift_irr - der.d_drift_rev
                + (ar - ai) * inv_d * dd
                - der.d2_diffusion
                + dd * dd * inv_d;
            total = total + along_path + in_time * dt;
        }
        Ok(total)
    }

    /// Full increment `meas − d ln p` with `dlnp = ln p(x', t') − ln p(x, t)`.
    pub fn increment<T: Real, const D: usize>(
        &self,
        x: &[T; D],
        t: T,
        dx: &[T; D],
        dt: T,
        dlnp: T,
    ) -> Result<T>
    where
        P: ItoProcess<T, D>,
    {
        Ok(self.meas_increment(x, t, dx, dt)? - dlnp)
    }
}

/// Displacement `x' − x`, taking the short way round on periodic coordinates.
pub(crate) fn displacement<T: Real, const D: usize>(domain: &Domain<T>, x: &[T; D], y: &[T; D]) -> [T; D] {
    let mut d: [T; D] = std::array::from_fn(|i| y[i] - x[i]);
    match *domain {
        Domain::Periodic { lo, hi } => {
            let half = T::lit(0.5) * (hi - lo);
            d[0] = crate::sde::wrap_into(d[0], -half, half);
        }
        Domain::RadialAngular { .. } => {
            d[1] = crate::num::wrap_angle(d[1]);
        }
        _ => {}
    }
    d
}

/// Measurement part for `dr_z = 2α(1 − r²) dW`: `8α²(1 + r²) dt + 8α r dW`.
#[inline]
pub fn sep_rz<T: Real>(alpha: T, r: T, dw: T, dt: T) -> T {
    let e = T::lit(8.0) * alpha;
    e * alpha * (T::one() + r * r) * dt + e * r * dw
}

/// Measurement part for `y = atanh r_z`: `4α²(1 + tanh²y) dt + 4α tanh y dW`.
#[inline]
pub fn sep_y<T: Real>(alpha: T, y: T, dw: T, dt: T) -> T {
    let th = y.tanh();
    let f = T::lit(4.0) * alpha;
    f * alpha * (T::one() + th * th) * dt + f * th * dw
}

/// Measurement part for the angle: with `a = α_x² − α_z²`, `A = a sin 2θ`,
/// `h = α_x² cos²θ + α_z² sin²θ` and `D = 2h`,
/// `(6a cos 2θ + 9A²/D) dt + (3A/√h) dW`.
#[inline]
pub fn sep_theta<T: Real>(process: &ThetaProcess<T>, theta: T, dw: T, dt: T) -> T {
    let a = process.asymmetry();
    let (s2, c2) = (T::lit(2.0) * theta).sin_cos();
    let drift = a * s2;
    let h = process.mix(theta);
    let d = T::lit(2.0) * h;
    (T::lit(6.0) * a * c2 + T::lit(9.0) * drift * drift / d) * dt
        + T::lit(3.0) * drift / h.sqrt() * dw
}

/// Late-time measurement part on the `(Y, θ)` chart: `18α² dt + 6α dW_Y`.
#[inline]
pub fn sep_2d_asymptotic<T: Real>(alpha: T, dw_y: T, dt: T) -> T {
    T::lit(18.0) * alpha * alpha * dt + T::lit(6.0) * alpha * dw_y
}

/// Total increment from the stationary shortcut,
/// `−[ln p(x', t') − ln p(x, t)] + [ln p_st(x') − ln p_st(x)]`.
pub fn sep_stationary_shortcut<T: Real, const D: usize, P, L>(
    process: &P,
    pdf: &L,
    x: &[T; D],
    t: T,
    x_next: &[T; D],
    t_next: T,
) -> Result<T>
where
    P: ItoProcess<T, D> + ?Sized,
    L: LogDensity<T, D> + ?Sized,
{
    let st0 = process
        .stationary_ln_density(x)
        .ok_or(QsdError::NoStationaryState)?;
    let st1 = process
        .stationary_ln_density(x_next)
        .ok_or(QsdError::NoStationaryState)?;
    let dlnp = pdf.ln_density(x_next, t_next)? - pdf.ln_density(x, t)?;
    Ok(st1 - st0 - dlnp)
}
