use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::quad;

fn check_parameter<T: Real>(m: T) -> Result<()> {
    if !m.is_finite() || m > T::one() {
        return Err(QsdError::InvalidParameter(format!(
            "elliptic parameter must be finite and at most 1, got {m}"
        )));
    }
    Ok(())
}

/// Complete elliptic integral of the second kind in parameter form,
/// `E(m) = ∫₀^{π/2} √(1 − m sin²φ) dφ`, for any `m ≤ 1`, by adaptive
/// quadrature of the defining integral.
pub fn complete_elliptic_e<T: Real>(m: T) -> Result<T> {
    check_parameter(m)?;
    if m == T::zero() {
        return Ok(T::FRAC_PI_2());
    }
    if m == T::one() {
        return Ok(T::one());
    }
    // relative target 1e-13 in f64; f32 is limited by its own epsilon
    let scale = (T::one() + m.abs()).sqrt();
    let tol = (T::lit(1e-13) * scale).max(T::epsilon() * T::lit(16.0));
    let (v, _) = quad::integrate(
        |phi: T| {
            let s = phi.sin();
            (T::one() - m * s * s).max(T::zero()).sqrt()
        },
        T::zero(),
        T::FRAC_PI_2(),
        tol,
    )?;
    Ok(v)
}

/// Independent evaluation of `E(m)` from the hypergeometric power series,
/// `E(m) = π/2 · Σ_n −[(2n)! / (2²ⁿ n!²)]² mⁿ / (2n − 1)`, after mapping
/// `m < 0` onto `[0, 1)` with `E(m) = √(1 − m) E(m / (m − 1))`.
pub fn complete_elliptic_e_series(m: f64) -> Result<f64> {
    check_parameter(m)?;
    if m == 1.0 {
        return Ok(1.0);
    }
    if m < 0.0 {
        return Ok((1.0 - m).sqrt() * complete_elliptic_e_series(m / (m - 1.0))?);
    }
    let mut sum = 1.0;
    let mut c = 1.0; // [(2n)! / (2^{2n} n!^2)]^2 · m^n
    let mut n = 1.0_f64;
    loop {
        let r = (2.0 * n - 1.0) / (2.0 * n);
        c *= r * r * m;
        let term = c / (2.0 * n - 1.0);
        sum -= term;
        if term < 1e-18 * sum {
            break;
        }
        n += 1.0;
        if n > 1e7 {
            return Err(QsdError::InvalidParameter(format!(
                "series for E({m}) did not converge"
            )));
        }
    }
    Ok(std::f64::consts::FRAC_PI_2 * sum)
}
