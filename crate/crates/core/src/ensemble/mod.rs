//! Monte Carlo ensembles of trajectories.
//!
//! Trajectory `i` draws every random number (initial state included) from
//! stream `(master_seed, i)` and results are stored by index, so all outputs
//! are the same for any thread count or scheduling order.

mod analysis;
pub mod experiments;

pub use analysis::{
    born_fractions, histogram_vs_pdf, ks_two_sample, mean_and_se, vn_entropy_curves,
    BornFractions, HistogramComparison, InverseCdfSampler, KsResult, VnCurves,
};

use std::io::Write;
use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochState;
use crate::entropy::{
    displacement, discrete_meas_increment, ensemble_mean, DerivativeMode,
    EntropyLedger, GeneralFormula, LedgerRecorder, LedgerSummary, LogDensity,
    RadialAngularAsymptotic, RzFromY,
};
use crate::error::{QsdError, Result};
use crate::fpe::{AsymptoticPdf, PdfField, StationaryThetaPdf};
use crate::kraus::{KrausScheme, MeasurementChannel};
use crate::num::Real;
use crate::rng::stream_rng;
use crate::sde::{
    euler_maruyama_step, spec_rz, spec_theta, spec_xz, spec_y, spec_y_theta, wiener_increments,
    ItoProcess, StepperConfig,
};

/// `|r_z|` above which a trajectory counts as absorbed in an eigenstate.
pub const ABSORPTION_THRESHOLD: f64 = 0.99;

/// Largest `r²` handed to the `(Y, θ)` chart when switching over.
const RADIAL_SWITCH_MAX_R2: f64 = 1.0 - 1e-12;

/// Runs `f(0..n)` in parallel and returns the results in index order.
///
/// `threads = None` uses the global rayon pool. The error reported is the one
/// from the lowest failing index, wrapped with that index.
pub fn par_map_indexed<R, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    let run = || -> Vec<Result<R>> { (0..n).into_par_iter().map(&f).collect() };
    let results = match threads {
        Some(0) => {
            return Err(QsdError::InvalidParameter(
                "thread count must be at least 1".into(),
            ))
        }
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| QsdError::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut out = Vec::with_capacity(n);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(QsdError::Trajectory {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Dynamics simulated by an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    /// `r_z` under σ_z measurement.
    Rz { alpha_z: f64 },
    /// `y = atanh r_z` under σ_z measurement.
    Y { alpha_z: f64 },
    /// `(r_x, r_z)` under simultaneous measurement. With `radial_after` set
    /// (equal strengths only) the path continues in `(Y, θ)` from that time.
    TwoChannel {
        alpha_x: f64,
        alpha_z: f64,
        radial_after: Option<f64>,
    },
    /// Pure-state angle under simultaneous measurement.
    Theta { alpha_x: f64, alpha_z: f64 },
    /// Discrete Kraus chain with σ_z and/or σ_x channels (zero strength drops
    /// a channel).
    Kraus { alpha_x: f64, alpha_z: f64 },
}

impl Model {
    /// Names of the coordinates written for retained trajectories.
    pub fn coordinate_labels(&self) -> Vec<String> {
        let l: &[&str] = match self {
            Model::Rz { .. } => &["r_z"],
            Model::Y { .. } => &["y"],
            Model::TwoChannel { .. } => &["r_x", "r_z"],
            Model::Theta { .. } => &["theta"],
            Model::Kraus { .. } => &["r_x", "r_y", "r_z"],
        };
        l.iter().map(|s| s.to_string()).collect()
    }

    /// Names of the noise columns: Wiener increments for diffusions,
    /// measurement-record increments `±√dt` per channel for Kraus chains.
    pub fn noise_labels(&self) -> Vec<String> {
        match *self {
            Model::Kraus { alpha_x, alpha_z } => {
                let mut v = Vec::new();
                if alpha_z > 0.0 {
                    v.push("dY_z".to_string());
                }
                if alpha_x > 0.0 {
                    v.push("dY_x".to_string());
                }
                v
            }
            _ => self
                .coordinate_labels()
                .iter()
                .map(|l| format!("dW_{l}"))
                .collect(),
        }
    }
}

/// How each trajectory's initial state is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// The same Bloch vector for every trajectory.
    Bloch { r_x: f64, r_y: f64, r_z: f64 },
    /// `r_z` drawn from a gaussian truncated to `(−1, 1)`, `r_x = r_y = 0`.
    GaussianRz { mean: f64, sigma: f64 },
    /// Pure state in the x–z plane with uniformly distributed angle.
    UniformAngle,
}

impl InitialCondition {
    pub fn on_z_axis(r_z: f64) -> Self {
        InitialCondition::Bloch {
            r_x: 0.0,
            r_y: 0.0,
            r_z,
        }
    }

    pub fn maximally_mixed() -> Self {
        Self::on_z_axis(0.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<BlochState<f64>> {
        match *self {
            InitialCondition::Bloch { r_x, r_y, r_z } => BlochState::new(r_x, r_y, r_z),
            InitialCondition::GaussianRz { mean, sigma } => {
                if !(sigma > 0.0) || !(mean.abs() < 1.0) {
                    return Err(QsdError::InvalidParameter(format!(
                        "gaussian start needs sigma > 0 and |mean| < 1, got {mean}, {sigma}"
                    )));
                }
                for _ in 0..10_000 {
                    let r = mean + sigma * f64::standard_normal(rng);
                    if r.abs() < 1.0 {
                        return BlochState::on_z_axis(r);
                    }
                }
                Err(QsdError::InvalidParameter(format!(
                    "gaussian ({mean}, {sigma}) has almost no mass inside (−1, 1)"
                )))
            }
            InitialCondition::UniformAngle => {
                let th = std::f64::consts::PI * (2.0 * f64::unit_uniform(rng) - 1.0);
                BlochState::in_xz_plane(th.sin(), th.cos())
            }
        }
    }
}

/// Quantities tracked at every recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Bloch components `r_x, r_y, r_z`.
    State,
    Purity,
    VonNeumann,
    /// Entropy ledgers (needs [`LedgerSetup`]).
    Ledger,
}

/// Density supplying the system part of the ledgers.
#[derive(Debug, Clone)]
pub enum LedgerDensity {
    /// Field in the ledger chart of the model (`r_z`, `y` or `θ`).
    Native(PdfField<f64>),
    /// Field in `y`; used directly by `Y` and mapped to `r_z` for `Rz` and
    /// `Kraus`.
    FromY(PdfField<f64>),
    /// Late-time gaussian pair in `y` (mapped like [`FromY`](Self::FromY)).
    AsymptoticY,
    /// Late-time radial gaussian times uniform angle on `(Y, θ)`.
    AsymptoticRadial,
    /// `ln p = 0`; the system part stays zero.
    Flat,
}

/// Source of the measurement part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LedgerMethod {
    General(DerivativeMode),
    /// `Δ ln p_st` (θ model only).
    StationaryShortcut,
    /// Forward/backward Kraus probabilities (single σ_z Kraus chains).
    Discrete,
}

#[derive(Debug, Clone)]
pub struct LedgerSetup {
    pub density: LedgerDensity,
    pub method: LedgerMethod,
    /// Time of the first ledger row; must sit on the recording grid.
    pub start: f64,
}

impl LedgerSetup {
    pub fn new(density: LedgerDensity, method: LedgerMethod) -> Self {
        Self {
            density,
            method,
            start: 0.0,
        }
    }

    pub fn starting_at(mut self, t: f64) -> Self {
        self.start = t;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub stepper: StepperConfig<f64>,
    pub model: Model,
    pub initial: InitialCondition,
    pub master_seed: u64,
    pub observables: Vec<Observable>,
    /// Steps between recorded rows.
    pub record_every: usize,
    /// Number of trajectories (lowest indices) kept in full.
    pub retain: usize,
    pub threads: Option<usize>,
    pub ledger: Option<LedgerSetup>,
    pub absorption_threshold: f64,
}

impl EnsembleConfig {
    pub fn new(
        model: Model,
        initial: InitialCondition,
        stepper: StepperConfig<f64>,
        n_traj: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            n_traj,
            stepper,
            model,
            initial,
            master_seed,
            observables: vec![Observable::State],
            record_every: 1,
            retain: 0,
            threads: None,
            ledger: None,
            absorption_threshold: ABSORPTION_THRESHOLD,
        }
    }

    pub fn observing(mut self, observables: &[Observable]) -> Self {
        self.observables = observables.to_vec();
        self
    }

    pub fn recording_every(mut self, steps: usize) -> Self {
        self.record_every = steps;
        self
    }

    pub fn retaining(mut self, n: usize) -> Self {
        self.retain = n;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    /// Adds a ledger setup and the [`Observable::Ledger`] observable.
    pub fn with_ledger(mut self, setup: LedgerSetup) -> Self {
        self.ledger = Some(setup);
        if !self.observables.contains(&Observable::Ledger) {
            self.observables.push(Observable::Ledger);
        }
        self
    }

    fn wants(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }

    fn n_steps(&self) -> usize {
        self.stepper.n_steps()
    }

    /// Step index of time `t`, which must lie on the recording grid.
    fn grid_step(&self, t: f64, what: &str) -> Result<usize> {
        let s = (t - self.stepper.t0) / self.stepper.dt;
        let k = s.round();
        if !(k >= 0.0) || (s - k).abs() > 1e-6 || k as usize > self.n_steps() {
            return Err(QsdError::InvalidParameter(format!(
                "{what} time {t} is not a step of the run"
            )));
        }
        let k = k as usize;
        if !k.is_multiple_of(self.record_every) {
            return Err(QsdError::InvalidParameter(format!(
                "{what} time {t} is not on the recording grid"
            )));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        self.stepper.validate()?;
        if self.n_traj == 0 {
            return Err(QsdError::InvalidParameter("need at least one trajectory".into()));
        }
        if self.record_every == 0 {
            return Err(QsdError::InvalidParameter("record_every must be at least 1".into()));
        }
        if !(self.absorption_threshold > 0.0 && self.absorption_threshold < 1.0) {
            return Err(QsdError::InvalidParameter(format!(
                "absorption threshold must lie in (0, 1), got {}",
                self.absorption_threshold
            )));
        }
        let positive = |name: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(QsdError::InvalidParameter(format!("{name} must be ≥ 0, got {v}")))
            }
        };
        match self.model {
            Model::Rz { alpha_z } | Model::Y { alpha_z } => positive("alpha_z", alpha_z)?,
            Model::TwoChannel {
                alpha_x,
                alpha_z,
                radial_after,
            } => {
                positive("alpha_x", alpha_x)?;
                positive("alpha_z", alpha_z)?;
                if let Some(t) = radial_after {
                    if alpha_x != alpha_z || alpha_x == 0.0 {
                        return Err(QsdError::InvalidParameter(
                            "the (Y, θ) chart needs equal positive strengths".into(),
                        ));
                    }
                    self.grid_step(t, "radial switch")?;
                }
            }
            Model::Theta { alpha_x, alpha_z } | Model::Kraus { alpha_x, alpha_z } => {
                positive("alpha_x", alpha_x)?;
                positive("alpha_z", alpha_z)?;
                if alpha_x == 0.0 && alpha_z == 0.0 {
                    return Err(QsdError::InvalidParameter(
                        "at least one measurement strength must be positive".into(),
                    ));
                }
            }
        }
        if self.wants(Observable::Ledger) {
            let setup = self.ledger.as_ref().ok_or_else(|| {
                QsdError::InvalidParameter("ledger observable needs a ledger setup".into())
            })?;
            let start = self.grid_step(setup.start, "ledger start")?;
            let method_ok = match (self.model, setup.method) {
                (Model::Kraus { alpha_x, .. }, LedgerMethod::Discrete) => alpha_x == 0.0,
                (Model::Kraus { .. }, _) | (_, LedgerMethod::Discrete) => false,
                (Model::Theta { .. }, _) => true,
                (_, LedgerMethod::StationaryShortcut) => false,
                (Model::TwoChannel { radial_after, .. }, _) => match radial_after {
                    Some(t) => start >= self.grid_step(t, "radial switch")?,
                    None => false,
                },
                _ => true,
            };
            if !method_ok {
                return Err(QsdError::InvalidParameter(format!(
                    "ledger method {:?} is not available for {:?}",
                    setup.method, self.model
                )));
            }
            let density_ok = match (&setup.density, self.model) {
                (LedgerDensity::Flat, _) => true,
                (LedgerDensity::AsymptoticRadial, Model::TwoChannel { .. }) => true,
                (LedgerDensity::Native(_), Model::TwoChannel { .. }) => false,
                (LedgerDensity::Native(_), _) => true,
                (
                    LedgerDensity::FromY(_) | LedgerDensity::AsymptoticY,
                    Model::Rz { .. } | Model::Y { .. } | Model::Kraus { .. },
                ) => true,
                _ => false,
            };
            if !density_ok {
                return Err(QsdError::InvalidParameter(format!(
                    "ledger density is not defined on the chart of {:?}",
                    self.model
                )));
            }
        }
        if let Model::Rz { .. } | Model::Y { .. } = self.model {
            if let InitialCondition::Bloch { r_x, r_y, .. } = self.initial {
                if r_x != 0.0 || r_y != 0.0 {
                    return Err(QsdError::InvalidParameter(
                        "single-channel diffusions start on the z axis".into(),
                    ));
                }
            }
            if self.initial == InitialCondition::UniformAngle {
                return Err(QsdError::InvalidParameter(
                    "single-channel diffusions start on the z axis".into(),
                ));
            }
        }
        if let Model::Theta { .. } = self.model {
            if let InitialCondition::GaussianRz { .. } = self.initial {
                return Err(QsdError::InvalidParameter(
                    "the angle model needs a pure initial state".into(),
                ));
            }
        }
        Ok(())
    }

    /// Recorded times.
    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.n_steps())
            .step_by(self.record_every)
            .map(|k| self.stepper.time(k))
            .collect()
    }
}

/// A trajectory kept in full at the recording resolution. Noise columns hold
/// the increments accumulated since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedTrajectory {
    pub trajectory_id: u64,
    pub labels: Vec<String>,
    pub noise_labels: Vec<String>,
    pub t: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
}

/// Result of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub index: usize,
    /// Bloch vector at every recorded time.
    pub bloch: Vec<[f64; 3]>,
    /// Final state in the coordinates of the model.
    pub final_coords: Vec<f64>,
    pub ledger: Option<EntropyLedger<f64>>,
    pub retained: Option<RetainedTrajectory>,
}

impl TrajectoryOutcome {
    pub fn final_bloch(&self) -> [f64; 3] {
        *self.bloch.last().expect("at least the initial row is recorded")
    }
}

/// Per-time statistics over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub t: Vec<f64>,
    pub columns: Vec<String>,
    /// `mean[c][k]` for column `c` at row `k`.
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub absorption_threshold: f64,
    /// Final `r_z > threshold`.
    pub absorbed_plus: usize,
    /// Final `r_z < −threshold`.
    pub absorbed_minus: usize,
    pub undecided: usize,
    pub ledger: Option<LedgerSummary>,
}

impl EnsembleStats {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Writes `t` and `<column>_mean, <column>_var, <column>_se` per column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for c in &self.columns {
            header.push(format!("{c}_mean"));
            header.push(format!("{c}_var"));
            header.push(format!("{c}_se"));
        }
        out.write_record(&header)?;
        for k in 0..self.t.len() {
            let mut row = vec![fmt(self.t[k])];
            for c in 0..self.columns.len() {
                row.push(fmt(self.mean[c][k]));
                row.push(fmt(self.variance[c][k]));
                row.push(fmt(self.std_error[c][k]));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub stats: EnsembleStats,
    /// In trajectory order.
    pub trajectories: Vec<TrajectoryOutcome>,
}

impl EnsembleOutput {
    pub fn ledgers(&self) -> Vec<EntropyLedger<f64>> {
        self.trajectories
            .iter()
            .filter_map(|t| t.ledger.clone())
            .collect()
    }

    pub fn final_bloch(&self) -> Vec<[f64; 3]> {
        self.trajectories.iter().map(|t| t.final_bloch()).collect()
    }

    pub fn retained(&self) -> Vec<&RetainedTrajectory> {
        self.trajectories
            .iter()
            .filter_map(|t| t.retained.as_ref())
            .collect()
    }
}

/// Writes retained trajectories as `t, coordinates…, noise…, trajectory_id`.
pub fn write_retained_csv<W: Write>(w: W, trajectories: &[&RetainedTrajectory]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = trajectories.first() else {
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["t".to_string()];
    header.extend(first.labels.iter().cloned());
    header.extend(first.noise_labels.iter().cloned());
    header.push("trajectory_id".into());
    out.write_record(&header)?;
    for tr in trajectories {
        if tr.labels != first.labels || tr.noise_labels != first.noise_labels {
            return Err(QsdError::Format(
                "retained trajectories use different columns".into(),
            ));
        }
        let id = tr.trajectory_id.to_string();
        for k in 0..tr.t.len() {
            let mut row = vec![fmt(tr.t[k])];
            row.extend(tr.coords[k].iter().map(|&v| fmt(v)));
            row.extend(tr.noise[k].iter().map(|&v| fmt(v)));
            row.push(id.clone());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Runs the ensemble described by `config`.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleOutput> {
    config.validate()?;
    let prepared = Prepared::new(config)?;
    let trajectories = par_map_indexed(config.n_traj, config.threads, |i| {
        prepared.run(config, i)
    })?;
    let stats = summarize(config, &trajectories)?;
    Ok(EnsembleOutput {
        stats,
        trajectories,
    })
}

fn summarize(config: &EnsembleConfig, trajectories: &[TrajectoryOutcome]) -> Result<EnsembleStats> {
    type Extract = fn(&[f64; 3]) -> f64;
    let mut columns: Vec<(String, Extract)> = Vec::new();
    if config.wants(Observable::State) {
        columns.push(("r_x".into(), |b| b[0]));
        columns.push(("r_y".into(), |b| b[1]));
        columns.push(("r_z".into(), |b| b[2]));
    }
    if config.wants(Observable::Purity) {
        columns.push(("purity".into(), |b| {
            0.5 * (1.0 + b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
        }));
    }
    if config.wants(Observable::VonNeumann) {
        columns.push(("s_vn".into(), |b| bloch_entropy(b)));
    }
    let t = config.record_times();
    let rows = t.len();
    let n = trajectories.len() as f64;
    let mut mean = vec![vec![0.0; rows]; columns.len()];
    let mut variance = vec![vec![0.0; rows]; columns.len()];
    let mut std_error = vec![vec![0.0; rows]; columns.len()];
    for (c, (_, f)) in columns.iter().enumerate() {
        for k in 0..rows {
            let m = trajectories.iter().map(|tr| f(&tr.bloch[k])).sum::<f64>() / n;
            let v = if trajectories.len() > 1 {
                trajectories
                    .iter()
                    .map(|tr| {
                        let d = f(&tr.bloch[k]) - m;
                        d * d
                    })
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            mean[c][k] = m;
            variance[c][k] = v;
            std_error[c][k] = (v / n).sqrt();
        }
    }
    let thr = config.absorption_threshold;
    let finals: Vec<f64> = trajectories.iter().map(|tr| tr.final_bloch()[2]).collect();
    let absorbed_plus = finals.iter().filter(|&&r| r > thr).count();
    let absorbed_minus = finals.iter().filter(|&&r| r < -thr).count();
    let ledger = if config.wants(Observable::Ledger) {
        let ls: Vec<EntropyLedger<f64>> = trajectories
            .iter()
            .filter_map(|tr| tr.ledger.clone())
            .collect();
        Some(ensemble_mean(&ls)?)
    } else {
        None
    };
    Ok(EnsembleStats {
        n_traj: trajectories.len(),
        t,
        columns: columns.into_iter().map(|c| c.0).collect(),
        mean,
        variance,
        std_error,
        absorption_threshold: thr,
        absorbed_plus,
        absorbed_minus,
        undecided: finals.len() - absorbed_plus - absorbed_minus,
        ledger,
    })
}

pub(crate) fn bloch_entropy(b: &[f64; 3]) -> f64 {
    let r = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt().min(1.0);
    let term = |l: f64| if l > 0.0 { -l * l.ln() } else { 0.0 };
    term(0.5 * (1.0 + r)) + term(0.5 * (1.0 - r))
}

/// `ln p = 0` everywhere.
struct Flat;

impl<const D: usize> LogDensity<f64, D> for Flat {
    fn ln_density(&self, _x: &[f64; D], _t: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Per-model objects shared by every trajectory.
struct Prepared {
    density_1d: Option<Box<dyn LogDensity<f64, 1>>>,
    density_2d: Option<Box<dyn LogDensity<f64, 2>>>,
    kraus: Option<KrausScheme<f64>>,
    stationary: Option<StationaryThetaPdf<f64>>,
}

impl Prepared {
    fn new(config: &EnsembleConfig) -> Result<Self> {
        let mut p = Prepared {
            density_1d: None,
            density_2d: None,
            kraus: None,
            stationary: None,
        };
        if let (Model::Theta { alpha_x, alpha_z }, Some(setup)) = (config.model, &config.ledger) {
            if setup.method == LedgerMethod::StationaryShortcut {
                p.stationary = Some(spec_theta(alpha_x, alpha_z)?.stationary_pdf()?);
            }
        }
        if let Model::Kraus { alpha_x, alpha_z } = config.model {
            let mut chs = Vec::new();
            if alpha_z > 0.0 {
                chs.push(MeasurementChannel::z(alpha_z)?);
            }
            if alpha_x > 0.0 {
                chs.push(MeasurementChannel::x(alpha_x)?);
            }
            p.kraus = Some(KrausScheme::new(&chs, config.stepper.dt)?);
        }
        if let (true, Some(setup)) = (config.wants(Observable::Ledger), &config.ledger) {
            let y_chart = matches!(config.model, Model::Y { .. });
            let alpha_z = match config.model {
                Model::Rz { alpha_z } | Model::Y { alpha_z } | Model::Kraus { alpha_z, .. } => {
                    alpha_z
                }
                Model::TwoChannel { alpha_z, .. } | Model::Theta { alpha_z, .. } => alpha_z,
            };
            match &setup.density {
                LedgerDensity::Flat => {
                    p.density_1d = Some(Box::new(Flat));
                    p.density_2d = Some(Box::new(Flat));
                }
                LedgerDensity::Native(f) => p.density_1d = Some(Box::new(f.clone())),
                LedgerDensity::FromY(f) if y_chart => p.density_1d = Some(Box::new(f.clone())),
                LedgerDensity::FromY(f) => {
                    p.density_1d = Some(Box::new(RzFromY {
                        y_density: f.clone(),
                    }))
                }
                LedgerDensity::AsymptoticY => {
                    let a = AsymptoticPdf::YPair { alpha: alpha_z };
                    if y_chart {
                        p.density_1d = Some(Box::new(a));
                    } else {
                        p.density_1d = Some(Box::new(RzFromY { y_density: a }));
                    }
                }
                LedgerDensity::AsymptoticRadial => {
                    p.density_2d = Some(Box::new(RadialAngularAsymptotic { alpha: alpha_z }))
                }
            }
        }
        Ok(p)
    }

    fn run(&self, config: &EnsembleConfig, index: usize) -> Result<TrajectoryOutcome> {
        let mut rng = stream_rng(config.master_seed, index as u64);
        let start = config.initial.sample(&mut rng)?;
        let mut sink = Sink::new(config, index);
        let ledger_start = config
            .ledger
            .as_ref()
            .filter(|_| config.wants(Observable::Ledger))
            .map(|s| config.grid_step(s.start, "ledger start"))
            .transpose()?;
        let method = config.ledger.as_ref().map(|s| s.method);
        let n = config.n_steps();
        let st = &config.stepper;
        let (final_coords, ledger) = match config.model {
            Model::Rz { alpha_z } => {
                let p = spec_rz(alpha_z)?;
                let mut x = [start.r_z];
                let mut track = LedgerTrack::new(self.density_1d.as_deref(), ledger_start, config, index);
                sink.observe(0, [0.0, 0.0, x[0]], &x, &[0.0]);
                track.begin_if_due(0, &x)?;
                drive(&p, &mut x, 0..n, st, &mut rng, |k, before, after, dw| {
                    sink.observe(k, [0.0, 0.0, after[0]], after, dw);
                    track.after_step(k, before, after, |b, a| meas_general(&p, method, b, a, st, k))
                })?;
                (x.to_vec(), track.finish())
            }
            Model::Y { alpha_z } => {
                let p = spec_y(alpha_z)?;
                if !(start.r_z.abs() < 1.0) {
                    return Err(QsdError::InvalidParameter(
                        "the y chart cannot start in an eigenstate".into(),
                    ));
                }
                let mut x = [start.r_z.atanh()];
                let mut track = LedgerTrack::new(self.density_1d.as_deref(), ledger_start, config, index);
                sink.observe(0, [0.0, 0.0, x[0].tanh()], &x, &[0.0]);
                track.begin_if_due(0, &x)?;
                drive(&p, &mut x, 0..n, st, &mut rng, |k, before, after, dw| {
                    sink.observe(k, [0.0, 0.0, after[0].tanh()], after, dw);
                    track.after_step(k, before, after, |b, a| meas_general(&p, method, b, a, st, k))
                })?;
                (x.to_vec(), track.finish())
            }
            Model::Theta { alpha_x, alpha_z } => {
                let p = spec_theta(alpha_x, alpha_z)?;
                let r = start.norm();
                if (r - 1.0).abs() > 1e-9 || start.r_y.abs() > 1e-12 {
                    return Err(QsdError::InvalidParameter(
                        "the angle model needs a pure state in the x–z plane".into(),
                    ));
                }
                let mut x = [start.r_x.atan2(start.r_z)];
                let to_bloch = |th: f64| [th.sin(), 0.0, th.cos()];
                let mut track = LedgerTrack::new(self.density_1d.as_deref(), ledger_start, config, index);
                sink.observe(0, to_bloch(x[0]), &x, &[0.0]);
                track.begin_if_due(0, &x)?;
                drive(&p, &mut x, 0..n, st, &mut rng, |k, before, after, dw| {
                    sink.observe(k, to_bloch(after[0]), after, dw);
                    track.after_step(k, before, after, |b, a| match method {
                        Some(LedgerMethod::StationaryShortcut) => {
                            let st = self.stationary.as_ref().ok_or(QsdError::NoStationaryState)?;
                            Ok(st.ln_density(a[0]) - st.ln_density(b[0]))
                        }
                        _ => meas_general(&p, method, b, a, st, k),
                    })
                })?;
                (x.to_vec(), track.finish())
            }
            Model::TwoChannel {
                alpha_x,
                alpha_z,
                radial_after,
            } => {
                let p = spec_xz(alpha_x, alpha_z)?;
                let switch = match radial_after {
                    Some(t) => config.grid_step(t, "radial switch")?,
                    None => n,
                };
                let mut x = [start.r_x, start.r_z];
                let b0 = [start.r_x, start.r_y, start.r_z];
                sink.observe(0, b0, &x, &[0.0, 0.0]);
                drive(&p, &mut x, 0..switch, st, &mut rng, |k, _before, after, dw| {
                    sink.observe(k, [after[0], 0.0, after[1]], after, dw);
                    Ok(())
                })?;
                if switch < n {
                    let q = spec_y_theta(alpha_x)?;
                    let r2 = (x[0] * x[0] + x[1] * x[1]).min(RADIAL_SWITCH_MAX_R2);
                    let th = x[0].atan2(x[1]);
                    let mut z = [r2.atanh().max(q.floor), th];
                    let mut track = LedgerTrack::new(self.density_2d.as_deref(), ledger_start, config, index);
                    track.begin_if_due(switch, &z)?;
                    drive(&q, &mut z, switch..n, st, &mut rng, |k, before, after, dw| {
                        let (rx, rz) = radial_to_xz(after);
                        // report the noise in the (dW_x, dW_z) frame
                        let (s, c) = before[1].sin_cos();
                        let dwx = s * dw[0] + c * dw[1];
                        let dwz = c * dw[0] - s * dw[1];
                        sink.observe(k, [rx, 0.0, rz], &[rx, rz], &[dwx, dwz]);
                        track.after_step(k, before, after, |b, a| meas_general(&q, method, b, a, st, k))
                    })?;
                    let (rx, rz) = radial_to_xz(&z);
                    (vec![rx, rz], track.finish())
                } else {
                    (x.to_vec(), None)
                }
            }
            Model::Kraus { .. } => {
                let scheme = self.kraus.as_ref().expect("scheme is built for Kraus models");
                let mut state = start;
                let d1 = self.density_1d.as_deref();
                let mut track = LedgerTrack::new(d1, ledger_start, config, index);
                let nch = scheme.channels().len();
                let mut rec = vec![0.0; nch];
                let step_rec = scheme.inner_dt().sqrt();
                sink.observe(0, state.components(), &state.components(), &rec);
                track.begin_if_due(0, &[state.r_z])?;
                for k in 1..=n {
                    let out = scheme.step(&state, &mut rng)?;
                    let before = state;
                    state = out.state;
                    for (c, v) in rec.iter_mut().enumerate() {
                        *v = if c == out.channel {
                            out.branch.sign::<f64>() * step_rec
                        } else {
                            0.0
                        };
                    }
                    sink.observe(k, state.components(), &state.components(), &rec);
                    track.after_step(k, &[before.r_z], &[state.r_z], |_, _| {
                        Ok(discrete_meas_increment(scheme, &before, &out))
                    })?;
                }
                (state.components().to_vec(), track.finish())
            }
        };
        Ok(TrajectoryOutcome {
            index,
            bloch: sink.bloch,
            final_coords,
            ledger,
            retained: sink.retained,
        })
    }
}

fn radial_to_xz(z: &[f64; 2]) -> (f64, f64) {
    let r = z[0].tanh().sqrt();
    let (s, c) = z[1].sin_cos();
    (r * s, r * c)
}

fn meas_general<P: ItoProcess<f64, D>, const D: usize>(
    process: &P,
    method: Option<LedgerMethod>,
    before: &[f64; D],
    after: &[f64; D],
    stepper: &StepperConfig<f64>,
    step_after: usize,
) -> Result<f64> {
    let mode = match method {
        Some(LedgerMethod::General(m)) => m,
        _ => DerivativeMode::Analytic,
    };
    let dx = displacement(&process.domain(), before, after);
    GeneralFormula::new(process, mode).meas_increment(
        before,
        stepper.time(step_after - 1),
        &dx,
        stepper.dt,
    )
}

/// Euler–Maruyama over `steps`, calling `after(k + 1, x_k, x_{k+1}, dW_k)`.
fn drive<P, F, const D: usize>(
    process: &P,
    x: &mut [f64; D],
    steps: Range<usize>,
    stepper: &StepperConfig<f64>,
    rng: &mut ChaCha8Rng,
    mut after: F,
) -> Result<()>
where
    P: ItoProcess<f64, D>,
    F: FnMut(usize, &[f64; D], &[f64; D], &[f64; D]) -> Result<()>,
{
    let m = process.wiener_dim().min(D);
    let sqrt_dt = stepper.dt.sqrt();
    for k in steps {
        let dw: [f64; D] = wiener_increments(rng, m, sqrt_dt);
        let next = euler_maruyama_step(process, x, stepper.time(k), stepper.dt, &dw, stepper.boundary)
            .map_err(|e| match e {
                QsdError::NonFinite { what, .. } => QsdError::NonFinite { what, step: k },
                other => other,
            })?;
        after(k + 1, x, &next, &dw)?;
        *x = next;
    }
    Ok(())
}

/// Recorded rows and the retained copy of one trajectory.
struct Sink {
    every: usize,
    bloch: Vec<[f64; 3]>,
    retained: Option<RetainedTrajectory>,
    noise: Vec<f64>,
    t0: f64,
    dt: f64,
}

impl Sink {
    fn new(config: &EnsembleConfig, index: usize) -> Self {
        let rows = config.n_steps() / config.record_every + 1;
        let retained = (index < config.retain).then(|| RetainedTrajectory {
            trajectory_id: index as u64,
            labels: config.model.coordinate_labels(),
            noise_labels: config.model.noise_labels(),
            t: Vec::with_capacity(rows),
            coords: Vec::with_capacity(rows),
            noise: Vec::with_capacity(rows),
        });
        Self {
            every: config.record_every,
            bloch: Vec::with_capacity(rows),
            retained,
            noise: Vec::new(),
            t0: config.stepper.t0,
            dt: config.stepper.dt,
        }
    }

    #[inline]
    fn observe(&mut self, step: usize, bloch: [f64; 3], coords: &[f64], dw: &[f64]) {
        if let Some(r) = &mut self.retained {
            if self.noise.len() != dw.len() {
                self.noise = vec![0.0; dw.len()];
            }
            for (a, d) in self.noise.iter_mut().zip(dw) {
                *a += d;
            }
            if step.is_multiple_of(self.every) {
                r.t.push(self.t0 + step as f64 * self.dt);
                r.coords.push(coords.to_vec());
                r.noise.push(std::mem::take(&mut self.noise));
            }
        }
        if step.is_multiple_of(self.every) {
            self.bloch.push(bloch);
        }
    }
}

/// Ledger accumulation for one trajectory in an `E`-dimensional chart.
struct LedgerTrack<'a, const E: usize> {
    density: Option<&'a dyn LogDensity<f64, E>>,
    start: Option<usize>,
    rec: Option<LedgerRecorder<f64>>,
    id: u64,
    stride: usize,
    stepper: StepperConfig<f64>,
}

impl<'a, const E: usize> LedgerTrack<'a, E> {
    fn new(
        density: Option<&'a dyn LogDensity<f64, E>>,
        start: Option<usize>,
        config: &EnsembleConfig,
        index: usize,
    ) -> Self {
        Self {
            density,
            start: start.filter(|_| density.is_some()),
            rec: None,
            id: index as u64,
            stride: config.record_every,
            stepper: config.stepper,
        }
    }

    fn begin_if_due(&mut self, step: usize, x: &[f64; E]) -> Result<()> {
        if let (Some(s), Some(d), None) = (self.start, self.density, &self.rec) {
            if s == step {
                let t = self.stepper.time(step);
                self.rec = Some(LedgerRecorder::new(
                    self.id,
                    t,
                    self.stepper.dt,
                    self.stride,
                    d.ln_density(x, t)?,
                ));
            }
        }
        Ok(())
    }

    #[inline]
    fn after_step<M>(&mut self, step: usize, before: &[f64; E], after: &[f64; E], meas: M) -> Result<()>
    where
        M: FnOnce(&[f64; E], &[f64; E]) -> Result<f64>,
    {
        if let (Some(rec), Some(d), Some(s)) = (&mut self.rec, self.density, self.start) {
            rec.add_meas(meas(before, after)?);
            if rec.wants(step - s) {
                rec.record(d.ln_density(after, self.stepper.time(step))?);
            }
        } else {
            self.begin_if_due(step, after)?;
        }
        Ok(())
    }

    fn finish(self) -> Option<EntropyLedger<f64>> {
        self.rec.map(|r| r.finish())
    }
}
