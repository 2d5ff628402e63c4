//! Discrete-time measurement maps built from Kraus operators.
//!
//! A channel `c = α σ_k` produces the pair `M± = ν (I − ½c†c dt ± c√dt)`.
//! Each step picks one branch with probability `Tr(M ρ M†)` and moves the
//! state to `M ρ M† / Tr(M ρ M†)`. This is the ground-truth dynamics that the
//! Itô integrators in [`crate::sde`] are validated against.
//!
//! For Pauli channels every map has a closed form on the Bloch vector. With
//! `a = 1 − ½α²dt` and `b = α√dt`, branch `s = ±1` gives
//!
//! ```text
//! w     = a² + b² + 2 s a b r_k
//! r'_k  = ((a² + b²) r_k + 2 s a b) / w
//! r'_j  = (a² − b²) r_j / w            (j ≠ k)
//! ```
//!
//! and `Tr(M ρ M†) = ν² w`. The fast paths below use these formulas; the
//! matrix routines are kept for validation and for arbitrary operators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{bloch_to_matrix, matrix_to_bloch, BlochState, ComplexMatrix2, PauliAxis};
use crate::error::{QsdError, Result};
use crate::num::Real;

/// Largest allowed `|C|·sqrt(dt)`, with `C = Tr(ρ(c + c†))`.
pub const STEP_GUARD: f64 = 0.5;

/// Below this `Tr(M ρ M†)` a map is considered degenerate.
pub const DEGENERATE_TRACE: f64 = 1e-30;

/// Continuous measurement of one Pauli observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementChannel<T> {
    pub axis: PauliAxis,
    /// Measurement strength α, units time^(-1/2).
    pub strength: T,
}

impl<T: Real> MeasurementChannel<T> {
    pub fn new(axis: PauliAxis, strength: T) -> Result<Self> {
        if !strength.is_finite() || strength < T::zero() {
            return Err(QsdError::InvalidParameter(format!(
                "measurement strength must be finite and non-negative, got {strength}"
            )));
        }
        Ok(Self { axis, strength })
    }

    pub fn z(strength: T) -> Result<Self> {
        Self::new(PauliAxis::Z, strength)
    }

    pub fn x(strength: T) -> Result<Self> {
        Self::new(PauliAxis::X, strength)
    }

    /// The Lindblad operator `c = α σ_k`.
    pub fn operator(&self) -> ComplexMatrix2<T> {
        ComplexMatrix2::pauli(self.axis).scale(self.strength)
    }
}

/// Prefactor convention for the Kraus set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// One pair, `ν = 1/√2`.
    OneChannel,
    /// Two pairs sharing one step, `ν = ½`.
    TwoChannel,
}

impl Normalization {
    pub fn prefactor<T: Real>(self) -> T {
        match self {
            Normalization::OneChannel => T::FRAC_1_SQRT_2(),
            Normalization::TwoChannel => T::lit(0.5),
        }
    }

    fn for_channels(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Normalization::OneChannel),
            2 => Ok(Normalization::TwoChannel),
            _ => Err(QsdError::InvalidParameter(format!(
                "one or two measurement channels supported, got {n}"
            ))),
        }
    }
}

/// `(M₊, M₋)` for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausPair<T> {
    pub plus: ComplexMatrix2<T>,
    pub minus: ComplexMatrix2<T>,
}

fn check_dt<T: Real>(dt: T) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(QsdError::NonPositiveTimeStep(dt.to_f64_lossless()));
    }
    Ok(())
}

/// `M± = ν (I − ½ c†c dt ± c √dt)`.
pub fn kraus_pair<T: Real>(
    channel: &MeasurementChannel<T>,
    dt: T,
    normalization: Normalization,
) -> Result<KrausPair<T>> {
    check_dt(dt)?;
    let c = channel.operator();
    let id = ComplexMatrix2::identity();
    let base = id.sub(&c.adjoint().matmul(&c).scale(T::lit(0.5) * dt));
    let kick = c.scale(dt.sqrt());
    let nu = normalization.prefactor::<T>();
    Ok(KrausPair {
        plus: base.add(&kick).scale(nu),
        minus: base.sub(&kick).scale(nu),
    })
}

/// Reverse operators: `after_plus` undoes a `+` move, `after_minus` a `−` move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseKraus<T> {
    /// `M̃₋`, applied to `ρ'⁺`.
    pub after_plus: ComplexMatrix2<T>,
    /// `M̃₊`, applied to `ρ'⁻`.
    pub after_minus: ComplexMatrix2<T>,
}

/// For Hermitian `c` the reverse of `M±` is `M̃∓ = M∓`.
pub fn reverse_kraus<T: Real>(
    channel: &MeasurementChannel<T>,
    dt: T,
    normalization: Normalization,
) -> Result<ReverseKraus<T>> {
    let pair = kraus_pair(channel, dt, normalization)?;
    Ok(ReverseKraus {
        after_plus: pair.minus,
        after_minus: pair.plus,
    })
}

/// `S(ρ) = MρM†/Tr(MρM†)`, evaluated with explicit matrices.
pub fn apply_map<T: Real>(state: &BlochState<T>, m: &ComplexMatrix2<T>) -> Result<BlochState<T>> {
    let out = m.sandwich(&bloch_to_matrix(state));
    let tr = out.trace().re;
    if !(tr > T::lit(DEGENERATE_TRACE)) {
        return Err(QsdError::DegenerateNormalization(tr.to_f64_lossless()));
    }
    let rho = out.scale(T::one() / tr);
    matrix_to_bloch(&rho, T::lit(1e-9))
}

/// Outcome probabilities `(p₊, p₋)` of a single-channel step.
///
/// These are the traces `Tr(M±ρM±†)` divided by their sum, so they add to one
/// exactly; the sum itself differs from one only at `O(dt²)`.
pub fn step_probabilities<T: Real>(
    state: &BlochState<T>,
    channel: &MeasurementChannel<T>,
    dt: T,
) -> Result<(T, T)> {
    check_dt(dt)?;
    let (a, b) = map_coefficients(channel.strength, dt);
    let s = a * a + b * b;
    let cross = T::lit(2.0) * a * b * state.along(channel.axis);
    let two_s = T::lit(2.0) * s;
    Ok(((s + cross) / two_s, (s - cross) / two_s))
}

/// `(a, b) = (1 − ½α²dt, α√dt)`.
#[inline]
fn map_coefficients<T: Real>(alpha: T, dt: T) -> (T, T) {
    (T::one() - T::lit(0.5) * alpha * alpha * dt, alpha * dt.sqrt())
}

/// Which operator of a pair fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign<T: Real>(self) -> T {
        match self {
            Branch::Plus => T::one(),
            Branch::Minus => -T::one(),
        }
    }
}

/// Result of one discrete step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausStepOutcome<T> {
    /// Index of the channel whose operator fired.
    pub channel: usize,
    pub branch: Branch,
    /// State after the move.
    pub state: BlochState<T>,
    /// Probability with which this move was selected.
    pub p_fwd: T,
    /// Probability `Tr(M̃ ρ' M̃†)` of the reverse move from the new state.
    pub p_bwd: T,
}

/// `ln(p_fwd / p_bwd)` for a recorded step.
pub fn log_prob_ratio<T: Real>(outcome: &KrausStepOutcome<T>) -> T {
    (outcome.p_fwd / outcome.p_bwd).ln()
}

#[derive(Debug, Clone, Copy)]
struct ChannelCoeffs<T> {
    axis: PauliAxis,
    a: T,
    b: T,
    sum_sq: T,
    diff_sq: T,
}

/// Precomputed Kraus set for one or two channels at a fixed `dt`.
///
/// With two channels all four operators act within one step. Each pair is
/// built with an internal step of `2·dt`, which gives every channel its full
/// rate in the continuum limit while keeping the four-operator completeness
/// prefactor `ν = ½`.
#[derive(Debug, Clone)]
pub struct KrausScheme<T> {
    channels: Vec<MeasurementChannel<T>>,
    coeffs: Vec<ChannelCoeffs<T>>,
    dt: T,
    inner_dt: T,
    nu_sq: T,
}

impl<T: Real> KrausScheme<T> {
    pub fn new(channels: &[MeasurementChannel<T>], dt: T) -> Result<Self> {
        check_dt(dt)?;
        let norm = Normalization::for_channels(channels.len())?;
        let n = T::from_usize(channels.len()).unwrap();
        let inner_dt = n * dt;
        let mut coeffs = Vec::with_capacity(channels.len());
        for ch in channels {
            let worst = T::lit(2.0) * ch.strength * inner_dt.sqrt();
            if worst >= T::lit(STEP_GUARD) {
                return Err(QsdError::StepTooLarge {
                    value: worst.to_f64_lossless(),
                    limit: STEP_GUARD,
                });
            }
            let (a, b) = map_coefficients(ch.strength, inner_dt);
            coeffs.push(ChannelCoeffs {
                axis: ch.axis,
                a,
                b,
                sum_sq: a * a + b * b,
                diff_sq: a * a - b * b,
            });
        }
        let nu = norm.prefactor::<T>();
        Ok(Self {
            channels: channels.to_vec(),
            coeffs,
            dt,
            inner_dt,
            nu_sq: nu * nu,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn channels(&self) -> &[MeasurementChannel<T>] {
        &self.channels
    }

    /// Step used inside each Kraus pair (`dt` times the number of channels).
    pub fn inner_dt(&self) -> T {
        self.inner_dt
    }

    /// The full operator list `[(channel, M₊, M₋)]` in matrix form.
    pub fn operators(&self) -> Result<Vec<KrausPair<T>>> {
        let norm = Normalization::for_channels(self.channels.len())?;
        self.channels
            .iter()
            .map(|ch| kraus_pair(ch, self.inner_dt, norm))
            .collect()
    }

    #[inline]
    fn weight(c: &ChannelCoeffs<T>, r_k: T, sign: T) -> T {
        c.sum_sq + T::lit(2.0) * sign * c.a * c.b * r_k
    }

    #[inline]
    fn moved(c: &ChannelCoeffs<T>, state: &BlochState<T>, sign: T) -> (BlochState<T>, T) {
        let r_k = state.along(c.axis);
        let w = Self::weight(c, r_k, sign);
        let inv = T::one() / w;
        let along = (c.sum_sq * r_k + T::lit(2.0) * sign * c.a * c.b) * inv;
        let shrink = c.diff_sq * inv;
        let out = match c.axis {
            PauliAxis::X => BlochState {
                r_x: along,
                r_y: state.r_y * shrink,
                r_z: state.r_z * shrink,
            },
            PauliAxis::Y => BlochState {
                r_x: state.r_x * shrink,
                r_y: along,
                r_z: state.r_z * shrink,
            },
            PauliAxis::Z => BlochState {
                r_x: state.r_x * shrink,
                r_y: state.r_y * shrink,
                r_z: along,
            },
        };
        (out, w)
    }

    /// Exact probabilities of every branch, as `(channel, branch, p)`, summing to one.
    pub fn branch_probabilities(&self, state: &BlochState<T>) -> Vec<(usize, Branch, T)> {
        let mut out = Vec::with_capacity(2 * self.coeffs.len());
        let mut total = T::zero();
        for (i, c) in self.coeffs.iter().enumerate() {
            let r_k = state.along(c.axis);
            for br in [Branch::Plus, Branch::Minus] {
                let w = self.nu_sq * Self::weight(c, r_k, br.sign());
                total = total + w;
                out.push((i, br, w));
            }
        }
        for e in &mut out {
            e.2 = e.2 / total;
        }
        out
    }

    /// Post-state of a given branch.
    pub fn branch_state(&self, state: &BlochState<T>, channel: usize, branch: Branch) -> BlochState<T> {
        Self::moved(&self.coeffs[channel], state, branch.sign()).0
    }

    /// Half the spread between the two branch increments of channel `channel`,
    /// measured along its own axis: `½(dr⁺ − dr⁻)`.
    pub fn phase_volume(&self, state: &BlochState<T>, channel: usize) -> T {
        let c = &self.coeffs[channel];
        let r = state.along(c.axis);
        let ab = c.a * c.b;
        let num = T::lit(2.0) * ab * c.sum_sq * (T::one() - r * r);
        let den = c.sum_sq * c.sum_sq - T::lit(4.0) * ab * ab * r * r;
        num / den
    }

    /// Samples one move by inverse CDF on the exact branch probabilities.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &BlochState<T>,
        rng: &mut R,
    ) -> Result<KrausStepOutcome<T>> {
        let u = T::unit_uniform(rng);
        self.step_with_uniform(state, u)
    }

    /// Deterministic variant of [`step`](Self::step) driven by `u ∈ [0, 1)`.
    pub fn step_with_uniform(&self, state: &BlochState<T>, u: T) -> Result<KrausStepOutcome<T>> {
        let mut total = T::zero();
        let mut weights = [T::zero(); 4];
        for (i, c) in self.coeffs.iter().enumerate() {
            let r_k = state.along(c.axis);
            weights[2 * i] = Self::weight(c, r_k, T::one());
            weights[2 * i + 1] = Self::weight(c, r_k, -T::one());
            total = total + weights[2 * i] + weights[2 * i + 1];
        }
        let target = u * total;
        let n = 2 * self.coeffs.len();
        let mut pick = n - 1;
        let mut acc = T::zero();
        for (j, w) in weights.iter().take(n).enumerate() {
            acc = acc + *w;
            if target < acc {
                pick = j;
                break;
            }
        }
        let channel = pick / 2;
        let branch = if pick.is_multiple_of(2) { Branch::Plus } else { Branch::Minus };
        let c = &self.coeffs[channel];
        let sign = branch.sign::<T>();
        let (next, w) = Self::moved(c, state, sign);
        if !(self.nu_sq * w > T::lit(DEGENERATE_TRACE)) {
            return Err(QsdError::DegenerateNormalization(
                (self.nu_sq * w).to_f64_lossless(),
            ));
        }
        let p_fwd = w / total;
        let p_bwd = self.nu_sq * Self::weight(c, next.along(c.axis), -sign);
        Ok(KrausStepOutcome {
            channel,
            branch,
            state: next,
            p_fwd,
            p_bwd,
        })
    }
}

/// One discrete step for one or two channels.
pub fn discrete_step<T: Real, R: Rng + ?Sized>(
    state: &BlochState<T>,
    channels: &[MeasurementChannel<T>],
    dt: T,
    rng: &mut R,
) -> Result<KrausStepOutcome<T>> {
    KrausScheme::new(channels, dt)?.step(state, rng)
}
