//! Ready-made ensemble experiments shared by the command-line tool and the
//! acceptance suite.

use serde::{Deserialize, Serialize};

use crate::entropy::{
    asymptotic_mean_rate, ensemble_mean, quench_production, DerivativeMode, EntropyLedger,
    LedgerSummary, RateEstimate,
};
use crate::error::{QsdError, Result};
use crate::fpe::{evolve_fpe, FpeOptions, Grid1D, PdfField};
use crate::sde::{spec_rz, spec_theta, spec_y, BoundaryPolicy, StepperConfig};

use super::analysis::{born_fractions, histogram_vs_pdf, ks_two_sample, mean_and_se, vn_entropy_curves};
use super::{
    run_ensemble, BornFractions, EnsembleConfig, EnsembleOutput, HistogramComparison,
    InitialCondition, KsResult, LedgerDensity, LedgerMethod, LedgerSetup, Model, Observable,
    VnCurves,
};

/// Seed and parallelism shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            threads: None,
        }
    }
}

fn steps_per(row_dt: f64, dt: f64) -> Result<usize> {
    let k = (row_dt / dt).round();
    if !(k >= 1.0) || ((row_dt / dt) - k).abs() > 1e-6 {
        return Err(QsdError::InvalidParameter(format!(
            "row spacing {row_dt} is not a multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

/// Density in `y = atanh r_z` under σ_z measurement, starting from a gaussian
/// of width `sigma0` in `r_z`. The grid is wide enough to hold both drifting
/// lobes out to `t_max`.
pub fn y_density_from_rz_gaussian(
    alpha_z: f64,
    mean: f64,
    sigma0: f64,
    t_max: f64,
    grid_n: usize,
    dt_store: f64,
) -> Result<PdfField<f64>> {
    if !(sigma0 > 0.0) || !(mean.abs() < 1.0) {
        return Err(QsdError::InvalidParameter(format!(
            "initial gaussian needs sigma0 > 0 and |mean| < 1, got {mean}, {sigma0}"
        )));
    }
    let a2 = alpha_z * alpha_z;
    let reach = (mean.abs() + 8.0 * sigma0).min(1.0 - 1e-9).atanh();
    let half = 4.0 * a2 * t_max + 10.0 * 2.0 * alpha_z * t_max.sqrt() + reach + 1.0;
    let grid = Grid1D::truncated_line(half, grid_n)?;
    let init = grid.sample_density(|y| {
        let r = y.tanh();
        let d = (r - mean) / sigma0;
        (-0.5 * d * d).exp() * (1.0 - r * r)
    })?;
    evolve_fpe(&spec_y(alpha_z)?, &grid, &init, 0.0, t_max, dt_store, FpeOptions::default())
}

/// Density of `r_z` from a gaussian start (zero-flux walls at `±1`).
pub fn rz_density(
    alpha_z: f64,
    mean: f64,
    sigma0: f64,
    t_max: f64,
    grid_n: usize,
    dt_store: f64,
) -> Result<PdfField<f64>> {
    let grid = Grid1D::bounded(-1.0, 1.0, grid_n)?;
    let init = grid.gaussian(mean, sigma0)?;
    evolve_fpe(&spec_rz(alpha_z)?, &grid, &init, 0.0, t_max, dt_store, FpeOptions::default())
}

/// Density of the pure-state angle starting from the uniform density.
pub fn theta_density_from_uniform(
    alpha_x: f64,
    alpha_z: f64,
    t_max: f64,
    grid_n: usize,
    dt_store: f64,
) -> Result<PdfField<f64>> {
    let grid = Grid1D::periodic(grid_n)?;
    let init = grid.uniform();
    evolve_fpe(
        &spec_theta(alpha_x, alpha_z)?,
        &grid,
        &init,
        0.0,
        t_max,
        dt_store,
        FpeOptions::default(),
    )
}

/// Parameters of an asymptotic entropy-rate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub alpha: f64,
    pub n_traj: usize,
    pub dt: f64,
    pub t_max: f64,
    pub fit_from: f64,
    pub fit_to: f64,
    /// Spacing of ledger rows.
    pub row_dt: f64,
    /// Width of the initial `r_z` gaussian (single channel only).
    pub sigma0: f64,
    /// FPE nodes for the system part (single channel only).
    pub grid_n: usize,
    /// Time at which two-channel paths move to the `(Y, θ)` chart.
    pub radial_after: f64,
}

impl RateParams {
    pub fn single_channel(alpha: f64, n_traj: usize) -> Self {
        Self {
            alpha,
            n_traj,
            dt: 1e-4,
            t_max: 2.0,
            fit_from: 1.0,
            fit_to: 2.0,
            row_dt: 0.01,
            sigma0: 0.1,
            grid_n: 4096,
            radial_after: 0.25,
        }
    }

    pub fn two_channel(alpha: f64, n_traj: usize) -> Self {
        Self::single_channel(alpha, n_traj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub expected_rate: f64,
    pub estimate: RateEstimate,
    pub summary: LedgerSummary,
    #[serde(skip)]
    pub ledgers: Vec<EntropyLedger<f64>>,
}

impl RateReport {
    pub fn relative_error(&self) -> f64 {
        (self.estimate.rate - self.expected_rate).abs() / self.expected_rate
    }
}

/// σ_z measurement simulated in `y`, starting from a narrow gaussian in
/// `r_z` around zero. The system part uses the FPE density of `y`; the
/// measurement part the general formula. Expected late-time rate `8α²`.
pub fn single_channel_rate(p: &RateParams, run: RunOptions) -> Result<RateReport> {
    let every = steps_per(p.row_dt, p.dt)?;
    let field = y_density_from_rz_gaussian(p.alpha, 0.0, p.sigma0, p.t_max, p.grid_n, p.row_dt)?;
    let config = EnsembleConfig::new(
        Model::Y { alpha_z: p.alpha },
        InitialCondition::GaussianRz {
            mean: 0.0,
            sigma: p.sigma0,
        },
        StepperConfig::new(p.dt, p.t_max)?,
        p.n_traj,
        run.seed,
    )
    .observing(&[Observable::State])
    .recording_every(every)
    .with_threads(run.threads)
    .with_ledger(LedgerSetup::new(
        LedgerDensity::Native(field),
        LedgerMethod::General(DerivativeMode::Analytic),
    ));
    let out = run_ensemble(&config)?;
    rate_report(out, p, 8.0 * p.alpha * p.alpha)
}

/// Equal-strength σ_x and σ_z measurement from the maximally mixed state.
/// Paths start in `(r_x, r_z)` and continue in `(Y, θ)`; ledgers begin at
/// `fit_from` with the late-time density. Expected rate `18α²`.
pub fn two_channel_rate(p: &RateParams, run: RunOptions) -> Result<RateReport> {
    let every = steps_per(p.row_dt, p.dt)?;
    let config = EnsembleConfig::new(
        Model::TwoChannel {
            alpha_x: p.alpha,
            alpha_z: p.alpha,
            radial_after: Some(p.radial_after),
        },
        InitialCondition::maximally_mixed(),
        StepperConfig::new(p.dt, p.t_max)?,
        p.n_traj,
        run.seed,
    )
    .observing(&[Observable::State, Observable::Purity])
    .recording_every(every)
    .with_threads(run.threads)
    .with_ledger(
        LedgerSetup::new(
            LedgerDensity::AsymptoticRadial,
            LedgerMethod::General(DerivativeMode::Analytic),
        )
        .starting_at(p.fit_from),
    );
    let out = run_ensemble(&config)?;
    rate_report(out, p, 18.0 * p.alpha * p.alpha)
}

fn rate_report(out: EnsembleOutput, p: &RateParams, expected_rate: f64) -> Result<RateReport> {
    let ledgers = out.ledgers();
    let estimate = asymptotic_mean_rate(&ledgers, p.fit_from, p.fit_to, p.dt)?;
    let summary = ensemble_mean(&ledgers)?;
    Ok(RateReport {
        expected_rate,
        estimate,
        summary,
        ledgers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornReport {
    pub r0: f64,
    pub expected_plus: f64,
    pub fractions: BornFractions,
    pub z_score: f64,
}

/// Absorption statistics of `r_z` paths started at `r0`.
pub fn born_rule(
    alpha_z: f64,
    r0: f64,
    n_traj: usize,
    dt: f64,
    t_max: f64,
    run: RunOptions,
) -> Result<BornReport> {
    let n_steps = (t_max / dt).round() as usize;
    let config = EnsembleConfig::new(
        Model::Rz { alpha_z },
        InitialCondition::on_z_axis(r0),
        StepperConfig::new(dt, t_max)?,
        n_traj,
        run.seed,
    )
    .recording_every(n_steps)
    .with_threads(run.threads);
    let out = run_ensemble(&config)?;
    let finals: Vec<f64> = out.final_bloch().iter().map(|b| b[2]).collect();
    let fractions = born_fractions(&finals, config.absorption_threshold);
    Ok(BornReport {
        r0,
        expected_plus: 0.5 * (1.0 + r0),
        fractions,
        z_score: fractions.z_score(r0),
    })
}

/// Parameters of the Kraus-vs-diffusion comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub alpha_z: f64,
    pub n_traj: usize,
    pub dt: f64,
    pub t_max: f64,
    pub sigma0: f64,
    pub row_dt: f64,
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub ks: KsResult,
    pub kraus: LedgerSummary,
    pub diffusion: LedgerSummary,
    /// `|Δ mean| / √(se₁² + se₂²)` of `Δs_tot` at each ledger row.
    pub ledger_z: Vec<f64>,
}

impl OracleReport {
    pub fn max_ledger_z(&self) -> f64 {
        self.ledger_z.iter().fold(0.0, |a, z| a.max(*z))
    }
}

/// Discrete Kraus chains against Euler–Maruyama chains in `y` from the same
/// initial gaussian in `r_z`. Compares final `r_z` by a two-sample KS test
/// and the ensemble-mean total entropy production row by row. Both ledgers
/// take their system part from the same FPE density (in `r_z` for the
/// chains, in `y` for the diffusion).
pub fn kraus_vs_diffusion(p: &OracleParams, run: RunOptions) -> Result<OracleReport> {
    let every = steps_per(p.row_dt, p.dt)?;
    let field = y_density_from_rz_gaussian(p.alpha_z, 0.0, p.sigma0, p.t_max, p.grid_n, p.row_dt)?;
    let initial = InitialCondition::GaussianRz {
        mean: 0.0,
        sigma: p.sigma0,
    };
    let stepper = StepperConfig::new(p.dt, p.t_max)?;
    let kraus = EnsembleConfig::new(
        Model::Kraus {
            alpha_x: 0.0,
            alpha_z: p.alpha_z,
        },
        initial,
        stepper,
        p.n_traj,
        run.seed,
    )
    .recording_every(every)
    .with_threads(run.threads)
    .with_ledger(LedgerSetup::new(
        LedgerDensity::FromY(field.clone()),
        LedgerMethod::Discrete,
    ));
    // a different master seed keeps the two samples independent
    let diffusion = EnsembleConfig::new(
        Model::Y { alpha_z: p.alpha_z },
        initial,
        stepper,
        p.n_traj,
        run.seed ^ 0x9e37_79b9_7f4a_7c15,
    )
    .recording_every(every)
    .with_threads(run.threads)
    .with_ledger(LedgerSetup::new(
        LedgerDensity::Native(field),
        LedgerMethod::General(DerivativeMode::Analytic),
    ));
    let a = run_ensemble(&kraus)?;
    let b = run_ensemble(&diffusion)?;
    let fa: Vec<f64> = a.final_bloch().iter().map(|v| v[2]).collect();
    let fb: Vec<f64> = b.final_bloch().iter().map(|v| v[2]).collect();
    let ks = ks_two_sample(&fa, &fb)?;
    let sa = a.stats.ledger.clone().expect("ledger requested");
    let sb = b.stats.ledger.clone().expect("ledger requested");
    let ledger_z = (0..sa.t.len())
        .map(|k| {
            let se = (sa.se_tot[k].powi(2) + sb.se_tot[k].powi(2)).sqrt();
            if se > 0.0 {
                (sa.mean_tot[k] - sb.mean_tot[k]).abs() / se
            } else {
                0.0
            }
        })
        .collect();
    Ok(OracleReport {
        ks,
        kraus: sa,
        diffusion: sb,
        ledger_z,
    })
}

/// Final angles of `n_traj` θ paths started at `theta0`, or at uniformly
/// random angles when `None` (`α_x = μ α_z`).
pub fn theta_samples(
    mu: f64,
    alpha_z: f64,
    theta0: Option<f64>,
    n_traj: usize,
    dt: f64,
    t_max: f64,
    run: RunOptions,
) -> Result<Vec<f64>> {
    let n_steps = (t_max / dt).round() as usize;
    let initial = match theta0 {
        Some(th) => InitialCondition::Bloch {
            r_x: th.sin(),
            r_y: 0.0,
            r_z: th.cos(),
        },
        None => InitialCondition::UniformAngle,
    };
    let config = EnsembleConfig::new(
        Model::Theta {
            alpha_x: mu * alpha_z,
            alpha_z,
        },
        initial,
        StepperConfig::new(dt, t_max)?,
        n_traj,
        run.seed,
    )
    .recording_every(n_steps)
    .with_threads(run.threads);
    let out = run_ensemble(&config)?;
    Ok(out.trajectories.iter().map(|t| t.final_coords[0]).collect())
}

/// Histogram of θ at `t_max` against the stationary density for ratio `μ`.
pub fn theta_histogram(
    mu: f64,
    samples: &[f64],
    bins: usize,
) -> Result<HistogramComparison> {
    let pdf = crate::fpe::StationaryThetaPdf::new(mu)?;
    let pi = std::f64::consts::PI;
    histogram_vs_pdf(samples, |t| pdf.density(t), -pi, pi, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchReport {
    pub mu: f64,
    /// `KL(uniform ‖ p_st(μ))`.
    pub predicted: f64,
    pub mean: f64,
    pub std_error: f64,
    pub summary: LedgerSummary,
}

impl QuenchReport {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.predicted) / self.std_error
    }
}

/// Switches the strength ratio from 1 to `μ` with the angle uniformly
/// distributed and follows `Δs_tot = −Δ ln(p / p_st)` along θ paths, with
/// `p(θ, t)` from the FPE.
#[allow(clippy::too_many_arguments)]
pub fn quench(
    mu: f64,
    alpha_z: f64,
    n_traj: usize,
    dt: f64,
    t_max: f64,
    row_dt: f64,
    grid_n: usize,
    run: RunOptions,
) -> Result<QuenchReport> {
    let every = steps_per(row_dt, dt)?;
    let alpha_x = mu * alpha_z;
    let field = theta_density_from_uniform(alpha_x, alpha_z, t_max, grid_n, row_dt)?;
    let config = EnsembleConfig::new(
        Model::Theta { alpha_x, alpha_z },
        InitialCondition::UniformAngle,
        StepperConfig::new(dt, t_max)?,
        n_traj,
        run.seed,
    )
    .recording_every(every)
    .with_threads(run.threads)
    .with_ledger(LedgerSetup::new(
        LedgerDensity::Native(field),
        LedgerMethod::StationaryShortcut,
    ));
    let out = run_ensemble(&config)?;
    let finals: Vec<f64> = out.ledgers().iter().map(|l| l.final_total()).collect();
    let (mean, std_error) = mean_and_se(&finals);
    Ok(QuenchReport {
        mu,
        predicted: quench_production(1.0, mu)?,
        mean,
        std_error,
        summary: out.stats.ledger.clone().expect("ledger requested"),
    })
}

/// Von Neumann entropy curves of σ_z-measured paths from the maximally mixed
/// state, simulated in `y`.
pub fn vn_decay(
    alpha_z: f64,
    n_traj: usize,
    dt: f64,
    t_max: f64,
    row_dt: f64,
    run: RunOptions,
) -> Result<VnCurves> {
    let config = EnsembleConfig::new(
        Model::Y { alpha_z },
        InitialCondition::maximally_mixed(),
        StepperConfig::new(dt, t_max)?,
        n_traj,
        run.seed,
    )
    .observing(&[Observable::State, Observable::VonNeumann])
    .recording_every(steps_per(row_dt, dt)?)
    .with_threads(run.threads);
    Ok(vn_entropy_curves(&run_ensemble(&config)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPreservation {
    /// Largest `|⟨r_z⟩(t) − ⟨r_z⟩(0)|` of the FPE density.
    pub fpe_max_drift: f64,
    /// Largest `|⟨r_z⟩(t) − r₀| / SE` over recorded times of the ensemble.
    pub mc_max_z: f64,
}

/// `⟨r_z⟩` over time from the FPE (gaussian start of width `sigma0` around
/// `r0`) and from an ensemble started at `r0`.
#[allow(clippy::too_many_arguments)]
pub fn mean_preservation(
    alpha_z: f64,
    r0: f64,
    sigma0: f64,
    grid_n: usize,
    n_traj: usize,
    dt: f64,
    t_max: f64,
    row_dt: f64,
    run: RunOptions,
) -> Result<MeanPreservation> {
    let field = rz_density(alpha_z, r0, sigma0, t_max, grid_n, row_dt)?;
    let g = field.grid();
    let m0 = g.mean(field.slice(0));
    let fpe_max_drift = (0..field.n_times())
        .map(|k| (g.mean(field.slice(k)) - m0).abs())
        .fold(0.0, f64::max);
    let config = EnsembleConfig::new(
        Model::Rz { alpha_z },
        InitialCondition::on_z_axis(r0),
        StepperConfig::new(dt, t_max)?.with_boundary(BoundaryPolicy::Clamp),
        n_traj,
        run.seed,
    )
    .recording_every(steps_per(row_dt, dt)?)
    .with_threads(run.threads);
    let out = run_ensemble(&config)?;
    let c = out.stats.column("r_z").expect("state is observed");
    let mc_max_z = (1..out.stats.t.len())
        .map(|k| {
            let se = out.stats.std_error[c][k];
            let d = (out.stats.mean[c][k] - r0).abs();
            if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(MeanPreservation {
        fpe_max_drift,
        mc_max_z,
    })
}
