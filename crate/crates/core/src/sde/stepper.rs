use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::rng::StreamSeed;

use super::ItoProcess;

/// What to do with a state that an Euler–Maruyama step pushed out of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    #[default]
    Clamp,
    Reflect,
    None,
}

impl std::str::FromStr for BoundaryPolicy {
    type Err = QsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clamp" => Ok(Self::Clamp),
            "reflect" => Ok(Self::Reflect),
            "none" => Ok(Self::None),
            other => Err(QsdError::InvalidParameter(format!(
                "unknown boundary policy '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub t_max: T,
    pub t0: T,
    pub boundary: BoundaryPolicy,
}

impl<T: Real> StepperConfig<T> {
    pub fn new(dt: T, t_max: T) -> Result<Self> {
        let cfg = Self {
            dt,
            t_max,
            t0: T::zero(),
            boundary: BoundaryPolicy::Clamp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_start(mut self, t0: T) -> Self {
        self.t0 = t0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(QsdError::NonPositiveTimeStep(self.dt.to_f64_lossless()));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(QsdError::InvalidParameter(format!(
                "total time {} must be at least dt = {}",
                self.t_max, self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps, `round(t_max / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round().to_usize().unwrap_or(0)
    }

    pub fn time(&self, step: usize) -> T {
        self.t0 + T::from_usize(step).unwrap() * self.dt
    }
}

/// One Euler–Maruyama step `x + A dt + B dW`, followed by the boundary policy.
///
/// `dw` holds the Wiener increments (unused trailing entries are ignored by
/// processes whose noise columns are zero).
pub fn euler_maruyama_step<T: Real, P: ItoProcess<T, D> + ?Sized, const D: usize>(
    process: &P,
    x: &[T; D],
    t: T,
    dt: T,
    dw: &[T; D],
    policy: BoundaryPolicy,
) -> Result<[T; D]> {
    let a = process.drift(x, t);
    let b = process.noise(x, t);
    let mut out = *x;
    for i in 0..D {
        let mut inc = a[i] * dt;
        for j in 0..D {
            inc = inc + b[i][j] * dw[j];
        }
        if !inc.is_finite() {
            return Err(QsdError::NonFinite {
                what: "euler-maruyama increment",
                step: 0,
            });
        }
        out[i] = out[i] + inc;
    }
    process.domain().enforce(&mut out, policy);
    Ok(out)
}

/// Draws `dW ~ N(0, dt)` for the first `m` Wiener processes.
#[inline]
pub(crate) fn wiener_increments<T: Real, R: Rng + ?Sized, const D: usize>(
    rng: &mut R,
    m: usize,
    sqrt_dt: T,
) -> [T; D] {
    let mut dw = [T::zero(); D];
    for v in dw.iter_mut().take(m) {
        *v = T::standard_normal(rng) * sqrt_dt;
    }
    dw
}

/// Integrates from `x0`, calling `observe(step, t, x, dw)` after every step
/// (and once with step 0 and zero increments for the initial state).
pub fn integrate<T, P, R, F, const D: usize>(
    process: &P,
    x0: [T; D],
    config: &StepperConfig<T>,
    rng: &mut R,
    mut observe: F,
) -> Result<[T; D]>
where
    T: Real,
    P: ItoProcess<T, D> + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, T, &[T; D], &[T; D]),
{
    config.validate()?;
    process.domain().check(&x0)?;
    let n = config.n_steps();
    let m = process.wiener_dim().min(D);
    let sqrt_dt = config.dt.sqrt();
    let mut x = x0;
    observe(0, config.t0, &x, &[T::zero(); D]);
    for k in 0..n {
        let t = config.time(k);
        let dw = wiener_increments::<T, R, D>(rng, m, sqrt_dt);
        x = euler_maruyama_step(process, &x, t, config.dt, &dw, config.boundary).map_err(
            |e| match e {
                QsdError::NonFinite { what, .. } => QsdError::NonFinite { what, step: k },
                other => other,
            },
        )?;
        observe(k + 1, config.time(k + 1), &x, &dw);
    }
    Ok(x)
}

/// A stored sample path with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T, const D: usize> {
    pub labels: Vec<String>,
    pub t0: T,
    pub dt: T,
    /// `states[k]` is the state at `t0 + k·dt`.
    pub states: Vec<[T; D]>,
    /// `increments[k]` drove the move from `states[k]` to `states[k + 1]`.
    pub increments: Vec<[T; D]>,
    pub seed: StreamSeed,
}

impl<T: Real, const D: usize> TrajectoryRecord<T, D> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + T::from_usize(k).unwrap() * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.states.len()).map(|k| self.time(k)).collect()
    }

    pub fn final_state(&self) -> [T; D] {
        *self.states.last().expect("record holds at least the initial state")
    }

    /// Writes the rows `t, coordinates…, dW…, trajectory_id` (no header).
    pub fn write_csv_rows<W: std::io::Write>(
        &self,
        w: &mut csv::Writer<W>,
        trajectory_id: u64,
    ) -> Result<()> {
        for (k, x) in self.states.iter().enumerate() {
            let mut row = Vec::with_capacity(2 + 2 * D);
            row.push(fmt_num(self.time(k)));
            row.extend(x.iter().map(|&v| fmt_num(v)));
            let dw = if k == 0 {
                [T::zero(); D]
            } else {
                self.increments[k - 1]
            };
            row.extend(dw.iter().map(|&v| fmt_num(v)));
            row.push(trajectory_id.to_string());
            w.write_record(&row)?;
        }
        Ok(())
    }

    /// CSV header matching [`write_csv_rows`](Self::write_csv_rows).
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.labels.iter().cloned());
        h.extend(self.labels.iter().map(|l| format!("dW_{l}")));
        h.push("trajectory_id".into());
        h
    }
}

pub(crate) fn fmt_num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossless())
}

/// Simulates one path with the stream named by `seed`, keeping every state
/// and Wiener increment.
pub fn simulate_trajectory<T: Real, P: ItoProcess<T, D> + ?Sized, const D: usize>(
    process: &P,
    x0: [T; D],
    config: &StepperConfig<T>,
    seed: StreamSeed,
) -> Result<TrajectoryRecord<T, D>> {
    config.validate()?;
    let n = config.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut increments = Vec::with_capacity(n);
    let mut rng = seed.rng();
    integrate(process, x0, config, &mut rng, |k, _t, x, dw| {
        states.push(*x);
        if k > 0 {
            increments.push(*dw);
        }
    })?;
    Ok(TrajectoryRecord {
        labels: process.labels().iter().map(|s| s.to_string()).collect(),
        t0: config.t0,
        dt: config.dt,
        states,
        increments,
        seed,
    })
}
