//! Two-level states in Bloch form and the 2×2 complex matrices that carry
//! density matrices, Pauli operators and Kraus operators.
//!
//! The Bloch vector is the canonical representation: a density matrix is
//! `ρ = ½(I + r·σ)`, and matrices are only built when an operator has to act
//! on the state.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;

/// Slack allowed on `|r| ≤ 1` before a state is rejected.
pub const BLOCH_SLACK: f64 = 1e-12;

/// Real Bloch vector `(r_x, r_y, r_z)` of a qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochState<T> {
    pub r_x: T,
    pub r_y: T,
    pub r_z: T,
}

impl<T: Real> BlochState<T> {
    /// Builds a state, clamping onto the sphere when `1 < |r| ≤ 1 + ε`.
    pub fn new(r_x: T, r_y: T, r_z: T) -> Result<Self> {
        let s = Self { r_x, r_y, r_z };
        let n = s.norm();
        if !n.is_finite() || n > T::one() + T::lit(BLOCH_SLACK) {
            return Err(QsdError::OutsideBlochBall {
                norm: n.to_f64_lossless(),
            });
        }
        Ok(s.clamped())
    }

    /// Maximally mixed state `ρ = I/2`.
    pub fn maximally_mixed() -> Self {
        Self {
            r_x: T::zero(),
            r_y: T::zero(),
            r_z: T::zero(),
        }
    }

    /// State confined to the x–z plane, `r_y = 0`.
    pub fn in_xz_plane(r_x: T, r_z: T) -> Result<Self> {
        Self::new(r_x, T::zero(), r_z)
    }

    /// State on the z axis.
    pub fn on_z_axis(r_z: T) -> Result<Self> {
        Self::new(T::zero(), T::zero(), r_z)
    }

    /// Projects radially onto the closed unit ball. Never fails.
    pub fn clamped(self) -> Self {
        let n = self.norm();
        if n > T::one() {
            Self {
                r_x: self.r_x / n,
                r_y: self.r_y / n,
                r_z: self.r_z / n,
            }
        } else {
            self
        }
    }

    #[inline]
    pub fn norm_sqr(&self) -> T {
        self.r_x * self.r_x + self.r_y * self.r_y + self.r_z * self.r_z
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn components(&self) -> [T; 3] {
        [self.r_x, self.r_y, self.r_z]
    }

    /// Component along a Pauli axis.
    #[inline]
    pub fn along(&self, axis: PauliAxis) -> T {
        match axis {
            PauliAxis::X => self.r_x,
            PauliAxis::Y => self.r_y,
            PauliAxis::Z => self.r_z,
        }
    }

    /// Purity `Tr ρ² = ½(1 + |r|²)`.
    pub fn purity(&self) -> T {
        purity(self)
    }

    /// Von Neumann entropy in nats.
    pub fn von_neumann_entropy(&self) -> T {
        von_neumann_entropy(self)
    }

    pub fn to_matrix(&self) -> ComplexMatrix2<T> {
        bloch_to_matrix(self)
    }
}

/// Pauli axis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// Purity `Tr ρ² = ½(1 + |r|²)`, in `[½, 1]`.
pub fn purity<T: Real>(state: &BlochState<T>) -> T {
    T::lit(0.5) * (T::one() + state.norm_sqr())
}

/// `-x ln x` with the continuous extension `0` at `x = 0`.
#[inline]
pub(crate) fn neg_x_ln_x<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        -x * x.ln()
    }
}

/// Von Neumann entropy `-Σ λ ln λ` with eigenvalues `λ± = (1 ± |r|)/2`.
pub fn von_neumann_entropy<T: Real>(state: &BlochState<T>) -> T {
    let n = state.norm().min(T::one());
    let half = T::lit(0.5);
    neg_x_ln_x(half * (T::one() + n)) + neg_x_ln_x(half * (T::one() - n))
}

/// `ρ = ½(I + r·σ)`.
pub fn bloch_to_matrix<T: Real>(state: &BlochState<T>) -> ComplexMatrix2<T> {
    let half = T::lit(0.5);
    ComplexMatrix2 {
        a11: Complex::new(half * (T::one() + state.r_z), T::zero()),
        a12: Complex::new(half * state.r_x, -half * state.r_y),
        a21: Complex::new(half * state.r_x, half * state.r_y),
        a22: Complex::new(half * (T::one() - state.r_z), T::zero()),
    }
}

/// Inverse of [`bloch_to_matrix`]: `r_k = Tr(ρ σ_k)`.
///
/// Rejects matrices that are not Hermitian or do not have unit trace (both
/// checked at `tol`).
pub fn matrix_to_bloch<T: Real>(rho: &ComplexMatrix2<T>, tol: T) -> Result<BlochState<T>> {
    let tr = rho.trace();
    if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
        return Err(QsdError::NotDensityMatrix(format!(
            "trace = {} + {}i",
            tr.re, tr.im
        )));
    }
    let herm = rho.sub(&rho.adjoint()).frobenius_norm();
    if herm > tol {
        return Err(QsdError::NotDensityMatrix(format!(
            "anti-Hermitian part has norm {herm}"
        )));
    }
    let r_x = (rho.a12 + rho.a21).re;
    let r_y = (rho.a21 - rho.a12).im;
    let r_z = (rho.a11 - rho.a22).re;
    BlochState::new(r_x, r_y, r_z)
}

/// Dense 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix2<T> {
    pub a11: Complex<T>,
    pub a12: Complex<T>,
    pub a21: Complex<T>,
    pub a22: Complex<T>,
}

impl<T: Real> ComplexMatrix2<T> {
    pub fn from_real(a11: T, a12: T, a21: T, a22: T) -> Self {
        let z = T::zero();
        Self {
            a11: Complex::new(a11, z),
            a12: Complex::new(a12, z),
            a21: Complex::new(a21, z),
            a22: Complex::new(a22, z),
        }
    }

    pub fn zero() -> Self {
        Self::from_real(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::from_real(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn pauli(axis: PauliAxis) -> Self {
        let (o, z) = (T::one(), T::zero());
        match axis {
            PauliAxis::X => Self::from_real(z, o, o, z),
            PauliAxis::Y => Self {
                a11: Complex::new(z, z),
                a12: Complex::new(z, -o),
                a21: Complex::new(z, o),
                a22: Complex::new(z, z),
            },
            PauliAxis::Z => Self::from_real(o, z, z, -o),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            a11: self.a11 * s,
            a12: self.a12 * s,
            a21: self.a21 * s,
            a22: self.a22 * s,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            a11: self.a11.conj(),
            a12: self.a21.conj(),
            a21: self.a12.conj(),
            a22: self.a22.conj(),
        }
    }

    pub fn trace(&self) -> Complex<T> {
        self.a11 + self.a22
    }

    pub fn matmul(&self, o: &Self) -> Self {
        Self {
            a11: self.a11 * o.a11 + self.a12 * o.a21,
            a12: self.a11 * o.a12 + self.a12 * o.a22,
            a21: self.a21 * o.a11 + self.a22 * o.a21,
            a22: self.a21 * o.a12 + self.a22 * o.a22,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            a11: self.a11 + o.a11,
            a12: self.a12 + o.a12,
            a21: self.a21 + o.a21,
            a22: self.a22 + o.a22,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            a11: self.a11 - o.a11,
            a12: self.a12 - o.a12,
            a21: self.a21 - o.a21,
            a22: self.a22 - o.a22,
        }
    }

    pub fn frobenius_norm(&self) -> T {
        (self.a11.norm_sqr() + self.a12.norm_sqr() + self.a21.norm_sqr() + self.a22.norm_sqr())
            .sqrt()
    }

    /// Spectral (operator 2-) norm: the largest singular value.
    pub fn operator_norm(&self) -> T {
        let g = self.adjoint().matmul(self);
        let (_, hi) = g.hermitian_eigenvalues();
        hi.max(T::zero()).sqrt()
    }

    /// Eigenvalues `(λ_min, λ_max)` of a Hermitian matrix, in closed form.
    pub fn hermitian_eigenvalues(&self) -> (T, T) {
        let a = self.a11.re;
        let d = self.a22.re;
        let mean = T::lit(0.5) * (a + d);
        let half_gap = (T::lit(0.25) * (a - d) * (a - d) + self.a12.norm_sqr()).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    /// `M ρ M†`.
    pub fn sandwich(&self, rho: &Self) -> Self {
        self.matmul(rho).matmul(&self.adjoint())
    }
}

impl<T: Real> Add for ComplexMatrix2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ComplexMatrix2::add(&self, &o)
    }
}

impl<T: Real> Sub for ComplexMatrix2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        ComplexMatrix2::sub(&self, &o)
    }
}

impl<T: Real> Mul for ComplexMatrix2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.matmul(&o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball_point() -> impl Strategy<Value = BlochState<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, z, s)| {
            let n = (x * x + y * y + z * z).sqrt().max(1e-12);
            BlochState::<f64>::new(s * x / n, s * y / n, s * z / n).unwrap()
        })
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&BlochState::<f64>::maximally_mixed()), 0.5);
        assert_eq!(purity(&BlochState::<f64>::on_z_axis(1.0).unwrap()), 1.0);
        let s = BlochState::<f64>::new(0.6, 0.0, 0.8).unwrap();
        assert!((purity(&s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn von_neumann_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((von_neumann_entropy(&BlochState::<f64>::maximally_mixed()) - ln2).abs() < 1e-15);
        assert_eq!(von_neumann_entropy(&BlochState::<f64>::on_z_axis(1.0).unwrap()), 0.0);
        let s = BlochState::<f64>::on_z_axis(0.5).unwrap();
        let expect = -0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln();
        assert!((von_neumann_entropy(&s) - expect).abs() < 1e-15);
        // independent route: eigenvalues of the explicit matrix
        let (lo, hi) = s.to_matrix().hermitian_eigenvalues();
        let oracle = -lo * lo.ln() - hi * hi.ln();
        assert!((von_neumann_entropy(&s) - oracle).abs() < 1e-12);
    }

    #[test]
    fn matrix_examples() {
        let m = bloch_to_matrix(&BlochState::<f64>::maximally_mixed());
        assert_eq!(m, ComplexMatrix2::identity().scale(0.5));
        let m = bloch_to_matrix(&BlochState::<f64>::on_z_axis(1.0).unwrap());
        assert_eq!(m, ComplexMatrix2::from_real(1.0, 0.0, 0.0, 0.0));
        let m = bloch_to_matrix(&BlochState::<f64>::new(1.0, 0.0, 0.0).unwrap());
        assert_eq!(m, ComplexMatrix2::from_real(0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn rejects_states_outside_ball() {
        assert!(BlochState::<f64>::new(0.8, 0.0, 0.8).is_err());
        // within slack: clamped onto the sphere
        let s = BlochState::<f64>::new(0.0, 0.0, 1.0 + 1e-13).unwrap();
        assert!(s.r_z <= 1.0);
        assert!(BlochState::<f64>::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn inverse_rejects_bad_matrices() {
        let not_unit = ComplexMatrix2::<f64>::identity();
        assert!(matrix_to_bloch(&not_unit, 1e-12).is_err());
        let not_herm = ComplexMatrix2::from_real(0.5, 0.3, 0.1, 0.5);
        assert!(matrix_to_bloch(&not_herm, 1e-12).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = BlochState::<f32>::new(0.0, 0.0, 0.5).unwrap();
        assert!((s.purity() - 0.625).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matrix_round_trip(s in ball_point()) {
            let back = matrix_to_bloch(&bloch_to_matrix(&s), 1e-12).unwrap();
            prop_assert!((back.r_x - s.r_x).abs() < 1e-14);
            prop_assert!((back.r_y - s.r_y).abs() < 1e-14);
            prop_assert!((back.r_z - s.r_z).abs() < 1e-14);
        }

        #[test]
        fn purity_matches_trace_of_square(s in ball_point()) {
            let m = bloch_to_matrix(&s);
            let tr = m.matmul(&m).trace().re;
            prop_assert!((purity(&s) - tr).abs() < 1e-12);
        }

        #[test]
        fn entropy_matches_eigendecomposition(s in ball_point()) {
            let (lo, hi) = bloch_to_matrix(&s).hermitian_eigenvalues();
            let f = |l: f64| if l <= 0.0 { 0.0 } else { -l * l.ln() };
            prop_assert!((von_neumann_entropy(&s) - (f(lo) + f(hi))).abs() < 1e-10);
        }

        #[test]
        fn pauli_expectations_recover_components(s in ball_point()) {
            let m = bloch_to_matrix(&s);
            for (axis, r) in [(PauliAxis::X, s.r_x), (PauliAxis::Y, s.r_y), (PauliAxis::Z, s.r_z)] {
                let e = m.matmul(&ComplexMatrix2::pauli(axis)).trace();
                prop_assert!((e.re - r).abs() < 1e-14);
                prop_assert!(e.im.abs() < 1e-14);
            }
        }
    }
}
