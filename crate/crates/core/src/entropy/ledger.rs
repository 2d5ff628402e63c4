use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::sde::{ItoProcess, TrajectoryRecord};

use super::formula::displacement;
use super::{DerivativeMode, GeneralFormula, LogDensity};

/// Cumulative entropy production of one trajectory, sampled every `dt`
/// starting at `t0`. All three series start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyLedger<T> {
    pub trajectory_id: u64,
    pub t0: T,
    pub dt: T,
    pub s_tot: Vec<T>,
    pub s_sys: Vec<T>,
    pub s_meas: Vec<T>,
}

impl<T: Real> EntropyLedger<T> {
    /// Builds a ledger from system and measurement series; `s_tot` is their sum.
    pub fn from_parts(trajectory_id: u64, t0: T, dt: T, s_sys: Vec<T>, s_meas: Vec<T>) -> Result<Self> {
        if s_sys.len() != s_meas.len() || s_sys.is_empty() {
            return Err(QsdError::InvalidParameter(format!(
                "ledger parts of lengths {} and {}",
                s_sys.len(),
                s_meas.len()
            )));
        }
        let s_tot = s_sys.iter().zip(&s_meas).map(|(&a, &b)| a + b).collect();
        Ok(Self {
            trajectory_id,
            t0,
            dt,
            s_tot,
            s_sys,
            s_meas,
        })
    }

    pub fn len(&self) -> usize {
        self.s_tot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_tot.is_empty()
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + T::from_usize(k).unwrap() * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn final_total(&self) -> T {
        *self.s_tot.last().unwrap()
    }

    /// Largest `|s_tot − s_sys − s_meas|` over the ledger.
    pub fn identity_residual(&self) -> T {
        (0..self.len())
            .map(|k| (self.s_tot[k] - self.s_sys[k] - self.s_meas[k]).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Accumulates a ledger while a trajectory is being integrated.
///
/// The system part telescopes, so only `ln p` at recorded times is needed:
/// `s_sys(t) = ln p(x₀, t₀) − ln p(x_t, t)`.
#[derive(Debug, Clone)]
pub struct LedgerRecorder<T> {
    stride: usize,
    ln_p0: T,
    meas: T,
    id: u64,
    t0: T,
    row_dt: T,
    sys: Vec<T>,
    meas_rows: Vec<T>,
}

impl<T: Real> LedgerRecorder<T> {
    /// `step_dt` is the integration step; a row is kept every `stride` steps.
    pub fn new(trajectory_id: u64, t0: T, step_dt: T, stride: usize, ln_p0: T) -> Self {
        let stride = stride.max(1);
        Self {
            stride,
            ln_p0,
            meas: T::zero(),
            id: trajectory_id,
            t0,
            row_dt: step_dt * T::from_usize(stride).unwrap(),
            sys: vec![T::zero()],
            meas_rows: vec![T::zero()],
        }
    }

    pub fn add_meas(&mut self, increment: T) {
        self.meas = self.meas + increment;
    }

    pub fn meas_so_far(&self) -> T {
        self.meas
    }

    /// True if step `step` (counted from the start, `> 0`) produces a row.
    pub fn wants(&self, step: usize) -> bool {
        step > 0 && step.is_multiple_of(self.stride)
    }

    /// Stores a row with the current `ln p(x_t, t)`.
    pub fn record(&mut self, ln_p: T) {
        self.sys.push(self.ln_p0 - ln_p);
        self.meas_rows.push(self.meas);
    }

    pub fn finish(self) -> EntropyLedger<T> {
        EntropyLedger::from_parts(self.id, self.t0, self.row_dt, self.sys, self.meas_rows)
            .expect("recorder keeps both series the same length")
    }
}

/// Ledger of a stored trajectory using the general formula for the
/// measurement part and `pdf` for the system part.
pub fn ledger_from_record<T, P, L, const D: usize>(
    process: &P,
    record: &TrajectoryRecord<T, D>,
    pdf: &L,
    mode: DerivativeMode,
    stride: usize,
    trajectory_id: u64,
) -> Result<EntropyLedger<T>>
where
    T: Real,
    P: ItoProcess<T, D> + ?Sized,
    L: LogDensity<T, D> + ?Sized,
{
    let formula = GeneralFormula::new(process, mode);
    let domain = process.domain();
    let x0 = record.states[0];
    let mut rec = LedgerRecorder::new(
        trajectory_id,
        record.t0,
        record.dt,
        stride,
        pdf.ln_density(&x0, record.t0)?,
    );
    for k in 0..record.increments.len() {
        let (x, y) = (&record.states[k], &record.states[k + 1]);
        let dx = displacement(&domain, x, y);
        rec.add_meas(formula.meas_increment(x, record.time(k), &dx, record.dt)?);
        if rec.wants(k + 1) {
            rec.record(pdf.ln_density(y, record.time(k + 1))?);
        }
    }
    Ok(rec.finish())
}

/// Writes ledgers as `t,s_tot,s_sys,s_meas,trajectory_id` with a header.
pub fn write_ledgers_csv<T: Real, W: Write>(w: W, ledgers: &[EntropyLedger<T>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "s_tot", "s_sys", "s_meas", "trajectory_id"])?;
    let f = |v: T| format!("{:.16e}", v.to_f64_lossless());
    for l in ledgers {
        let id = l.trajectory_id.to_string();
        for k in 0..l.len() {
            out.write_record([
                f(l.time(k)),
                f(l.s_tot[k]),
                f(l.s_sys[k]),
                f(l.s_meas[k]),
                id.clone(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
