//! Itô processes for the measured qubit and their Euler–Maruyama integration.
//!
//! Every process is written as
//!
//! ```text
//! dx = (A_rev(x, t) + A_irr(x, t)) dt + B(x, t) dW
//! ```
//!
//! with the drift split by time-reversal parity, because the entropy engine
//! treats the two halves differently. The same coefficient functions drive
//! the integrators here, the Fokker–Planck solvers in [`crate::fpe`] and the
//! entropy formulas in [`crate::entropy`].

mod processes;
mod stepper;

pub use processes::{
    spec_rz, spec_theta, spec_xz, spec_y, spec_y_theta, BlochLindbladProcess, ConstantProcess,
    RzProcess, ThetaProcess, XzProcess, YProcess, YThetaProcess, Y_FLOOR,
};
pub use stepper::{
    euler_maruyama_step, integrate, simulate_trajectory, BoundaryPolicy, StepperConfig,
    TrajectoryRecord,
};
pub(crate) use stepper::wiener_increments;

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::{wrap_angle, Real};

/// Where a process lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain<T> {
    /// Closed interval `[lo, hi]` (one coordinate).
    Interval { lo: T, hi: T },
    /// The whole real line (one coordinate).
    Line,
    /// Circle `(lo, hi]` (one coordinate).
    Periodic { lo: T, hi: T },
    /// Closed unit ball over all coordinates.
    UnitBall,
    /// `(Y, θ)` chart: `Y ≥ floor`, `θ` periodic on `(−π, π]`.
    RadialAngular { floor: T },
}

impl<T: Real> Domain<T> {
    /// Characteristic length of coordinate `i`, used to scale finite-difference steps.
    pub fn span(&self, i: usize) -> T {
        match *self {
            Domain::Interval { lo, hi } | Domain::Periodic { lo, hi } => hi - lo,
            Domain::Line => T::one(),
            Domain::UnitBall => T::lit(2.0),
            Domain::RadialAngular { .. } => {
                if i == 0 {
                    T::one()
                } else {
                    T::TAU()
                }
            }
        }
    }

    /// Checks that `x` is a valid state.
    pub fn check(&self, x: &[T]) -> Result<()> {
        let bad = |v: T| QsdError::OutsideDomain {
            value: v.to_f64_lossless(),
            domain: format!("{self:?}"),
        };
        for &v in x {
            if !v.is_finite() {
                return Err(bad(v));
            }
        }
        match *self {
            Domain::Interval { lo, hi } => {
                if x[0] < lo || x[0] > hi {
                    return Err(bad(x[0]));
                }
            }
            Domain::Line | Domain::Periodic { .. } => {}
            Domain::UnitBall => {
                let r2: T = x.iter().map(|&v| v * v).sum();
                if r2 > T::one() + T::lit(crate::bloch::BLOCH_SLACK) {
                    return Err(bad(r2.sqrt()));
                }
            }
            Domain::RadialAngular { floor } => {
                if x[0] < floor {
                    return Err(bad(x[0]));
                }
            }
        }
        Ok(())
    }

    /// Applies the boundary policy in place. Periodic coordinates are always wrapped.
    pub fn enforce(&self, x: &mut [T], policy: BoundaryPolicy) {
        match *self {
            Domain::Interval { lo, hi } => match policy {
                BoundaryPolicy::Clamp => x[0] = x[0].max(lo).min(hi),
                BoundaryPolicy::Reflect => {
                    if x[0] > hi {
                        x[0] = hi + hi - x[0];
                    }
                    if x[0] < lo {
                        x[0] = lo + lo - x[0];
                    }
                    x[0] = x[0].max(lo).min(hi);
                }
                BoundaryPolicy::None => {}
            },
            Domain::Line => {}
            Domain::Periodic { lo, hi } => {
                x[0] = wrap_into(x[0], lo, hi);
            }
            Domain::UnitBall => {
                let r2: T = x.iter().map(|&v| v * v).sum();
                if r2 > T::one() {
                    let r = r2.sqrt();
                    let target = match policy {
                        BoundaryPolicy::Clamp => T::one(),
                        BoundaryPolicy::Reflect => (T::lit(2.0) - r).max(T::zero()),
                        BoundaryPolicy::None => r,
                    };
                    let s = target / r;
                    for v in x.iter_mut() {
                        *v = *v * s;
                    }
                }
            }
            Domain::RadialAngular { floor } => {
                if x[0] < floor {
                    match policy {
                        BoundaryPolicy::Clamp => x[0] = floor,
                        BoundaryPolicy::Reflect => x[0] = floor + floor - x[0],
                        BoundaryPolicy::None => {}
                    }
                }
                x[1] = wrap_angle(x[1]);
            }
        }
    }
}

/// Maps `x` into `(lo, hi]`.
pub fn wrap_into<T: Real>(x: T, lo: T, hi: T) -> T {
    if x > lo && x <= hi {
        return x;
    }
    let span = hi - lo;
    let mut w = x - span * ((x - lo) / span).floor();
    if w <= lo {
        w = w + span;
    }
    w
}

/// Spatial derivatives of the coefficients of one coordinate, with
/// `D = ½ B²` the diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives<T> {
    pub d_drift_rev: T,
    pub d_drift_irr: T,
    pub d_diffusion: T,
    pub d2_diffusion: T,
}

/// Coefficients of an Itô process in `D` coordinates driven by up to `D`
/// independent Wiener processes.
pub trait ItoProcess<T: Real, const D: usize>: Sync {
    /// Time-reversal-even part of the drift.
    fn drift_rev(&self, _x: &[T; D], _t: T) -> [T; D] {
        [T::zero(); D]
    }

    /// Time-reversal-odd part of the drift.
    fn drift_irr(&self, x: &[T; D], t: T) -> [T; D];

    /// Noise matrix: `noise[i][j]` multiplies `dW_j` in coordinate `i`.
    fn noise(&self, x: &[T; D], t: T) -> [[T; D]; D];

    /// Number of Wiener processes actually used (the rest of the noise
    /// columns must be zero).
    fn wiener_dim(&self) -> usize {
        D
    }

    fn domain(&self) -> Domain<T>;

    fn labels(&self) -> [&'static str; D];

    /// Analytic partial derivatives of coordinate `i`'s own coefficients with
    /// respect to `x_i`, when the process provides them.
    fn partials(&self, _x: &[T; D], _t: T, _i: usize) -> Option<Derivatives<T>> {
        None
    }

    /// `ln p_st(x)` for processes with a zero-current stationary density.
    fn stationary_ln_density(&self, _x: &[T; D]) -> Option<T> {
        None
    }

    /// True when no coefficient depends on time.
    fn is_autonomous(&self) -> bool {
        true
    }

    /// Total drift `A_rev + A_irr`.
    fn drift(&self, x: &[T; D], t: T) -> [T; D] {
        let r = self.drift_rev(x, t);
        let i = self.drift_irr(x, t);
        std::array::from_fn(|k| r[k] + i[k])
    }

    /// Diffusion coefficient `D_ii = ½ Σ_j B_ij²` of coordinate `i`.
    fn diffusion(&self, x: &[T; D], t: T, i: usize) -> T {
        let b = self.noise(x, t);
        T::lit(0.5) * b[i].iter().map(|&v| v * v).sum::<T>()
    }
}
