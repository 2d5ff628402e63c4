//! One-dimensional quadrature.

use crate::error::{QsdError, Result};
use crate::num::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Maximum number of interval bisections before giving up.
const MAX_SEGMENTS: usize = 4000;

/// 15-point Kronrod estimate of ∫_a^b f and its difference from the embedded
/// 7-point Gauss rule.
fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5) * (b - a);
    let mid = T::lit(0.5) * (a + b);
    let fc = f(mid);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let pair = f(mid - dx) + f(mid + dx);
        kron = kron + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`. Returns `(value, error estimate)`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> Result<(T, T)> {
    if a == b {
        return Ok((T::zero(), T::zero()));
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut segments = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > tol {
        if segments.len() >= MAX_SEGMENTS {
            return Err(QsdError::InvalidParameter(format!(
                "quadrature did not converge: error {err} above {tol}"
            )));
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, s)| {
                if s.3 > best.1 {
                    (i, s.3)
                } else {
                    best
                }
            });
        let (lo, hi, v0, e0) = segments.swap_remove(idx);
        let mid = T::lit(0.5) * (lo + hi);
        let (vl, el) = gk15(&mut f, lo, mid);
        let (vr, er) = gk15(&mut f, mid, hi);
        total = total - v0 + vl + vr;
        err = err - e0 + el + er;
        segments.push((lo, mid, vl, el));
        segments.push((mid, hi, vr, er));
        if !total.is_finite() {
            return Err(QsdError::NonFinite {
                what: "quadrature",
                step: segments.len(),
            });
        }
    }
    // re-sum to shed accumulated cancellation in the running total
    let total = segments.iter().map(|s| s.2).sum();
    Ok((total, err))
}

/// Trapezoid rule with `n` points over one period starting at `a`.
/// Spectrally accurate for smooth periodic integrands.
pub fn periodic_trapezoid<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, period: T, n: usize) -> T {
    let h = period / T::from_usize(n).unwrap();
    let mut s = T::zero();
    for i in 0..n {
        s = s + f(a + T::from_usize(i).unwrap() * h);
    }
    s * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(|x: f64| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn adapts_to_peaks() {
        let (v, e) = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}, est {e}");
    }

    #[test]
    fn sqrt_endpoint() {
        let (v, _) = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn trapezoid_periodic() {
        let v = periodic_trapezoid(|t: f64| (t.cos()).exp(), -PI, 2.0 * PI, 64);
        // 2π I₀(1)
        assert!((v - 2.0 * PI * 1.266_065_877_752_008_4).abs() < 1e-13);
    }
}
