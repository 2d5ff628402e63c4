//! One function per experiment. Each writes its CSV files into the output
//! directory and returns their names.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use qsd_core::ensemble::experiments::*;
use qsd_core::ensemble::{
    run_ensemble, EnsembleConfig, InitialCondition, Model, Observable,
};
use qsd_core::entropy::{quench_production, write_ledgers_csv};
use qsd_core::fpe::{stationary_moments, PdfField, StationaryThetaPdf};
use qsd_core::sde::StepperConfig;

use crate::config::Settings;
use crate::error::CliError;

type Outputs = Vec<String>;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn table(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record(header)?;
    Ok(w)
}

/// Steps between recorded rows; by default rows are `row_dt` apart.
fn record_every(s: &Settings, dt: f64, row_dt: f64) -> Result<usize, CliError> {
    let default = ((row_dt / dt).round() as usize).max(1);
    s.count("record-every", default, 1)
}

fn run_options(s: &Settings) -> Result<RunOptions, CliError> {
    Ok(RunOptions {
        seed: s.u64("seed", 1)?,
        threads: s.threads()?,
    })
}

fn default_mu_list() -> Vec<f64> {
    [0.2f64, 1.0, 2.0, 5.0].iter().map(|m| m.sqrt()).collect()
}

/// Sample paths `r(t)` with purity, and per-time ensemble statistics.
pub fn trajectories(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let run = run_options(s)?;
    let chart = s.string("chart", "rz")?;
    let alpha_z = s.number("alpha-z", 1.0, true)?;
    let dt = s.number("dt", 1e-3, true)?;
    let t_max = s.number("t-max", 4.0, true)?;
    let n = s.count("n-traj", 4, 1)?;
    let every = record_every(s, dt, 0.01)?;
    let r0 = s.number("r0", 0.0, false)?;
    let on_axis = InitialCondition::on_z_axis(r0);
    let (model, initial) = match chart.as_str() {
        "rz" => (Model::Rz { alpha_z }, on_axis),
        "y" => (Model::Y { alpha_z }, on_axis),
        "xz" => {
            let alpha_x = s.number("alpha-x", alpha_z, false)?;
            let m = Model::TwoChannel {
                alpha_x,
                alpha_z,
                radial_after: None,
            };
            (m, on_axis)
        }
        "theta" => {
            let mu = s.number("mu", 1.0, true)?;
            let alpha_x = s.number("alpha-x", mu * alpha_z, false)?;
            let initial = if s.is_set("r0") {
                InitialCondition::Bloch {
                    r_x: (1.0 - r0 * r0).max(0.0).sqrt(),
                    r_y: 0.0,
                    r_z: r0,
                }
            } else {
                InitialCondition::UniformAngle
            };
            (Model::Theta { alpha_x, alpha_z }, initial)
        }
        "kraus" => {
            let alpha_x = s.number("alpha-x", 0.0, false)?;
            (Model::Kraus { alpha_x, alpha_z }, on_axis)
        }
        other => {
            return Err(CliError::Config(format!(
                "chart '{other}' is not one of rz, y, xz, theta, kraus"
            )))
        }
    };
    let config = EnsembleConfig::new(model, initial, StepperConfig::new(dt, t_max)?, n, run.seed)
        .observing(&[Observable::State, Observable::Purity, Observable::VonNeumann])
        .recording_every(every)
        .with_threads(run.threads);
    let out = run_ensemble(&config)?;

    let mut w = table(dir, "paths.csv", &["trajectory_id", "t", "r_x", "r_y", "r_z", "purity"])?;
    for tr in &out.trajectories {
        let id = tr.index.to_string();
        for (t, b) in out.stats.t.iter().zip(&tr.bloch) {
            let purity = 0.5 * (1.0 + b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
            w.write_record([id.clone(), fmt(*t), fmt(b[0]), fmt(b[1]), fmt(b[2]), fmt(purity)])?;
        }
    }
    w.flush()?;
    out.stats.write_csv(create(dir, "summary.csv")?)?;
    Ok(vec!["paths.csv".into(), "summary.csv".into()])
}

type SnapshotSummary = dyn Fn(&PdfField<f64>, usize) -> Vec<f64>;

/// Fokker–Planck snapshots in `r_z`, `y` or `θ` with per-snapshot summaries.
pub fn fpe(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let chart = s.string("chart", "rz")?;
    let alpha_z = s.number("alpha-z", 1.0, true)?;
    let t_max = s.number("t-max", 2.0, true)?;
    let dt_store = s.number("dt", 0.05, true)?;
    let grid_n = s.count("grid-n", 512, 8)?;
    let (field, summary): (PdfField<f64>, Box<SnapshotSummary>) =
        match chart.as_str() {
            "rz" | "y" => {
                let r0 = s.number("r0", 0.0, false)?;
                let sigma0 = s.number("sigma0", 0.1, true)?;
                // mass within 0.05 of each eigenstate
                let near = |f: &PdfField<f64>, k: usize, to_rz: fn(f64) -> f64| {
                    let g = f.grid();
                    let p = g.integrate_with(f.slice(k), |x| (to_rz(x) > 0.95) as u8 as f64);
                    let m = g.integrate_with(f.slice(k), |x| (to_rz(x) < -0.95) as u8 as f64);
                    (p, m)
                };
                if chart == "rz" {
                    let f = rz_density(alpha_z, r0, sigma0, t_max, grid_n, dt_store)?;
                    (
                        f,
                        Box::new(move |f, k| {
                            let g = f.grid();
                            let (p, m) = near(f, k, |x| x);
                            vec![g.mass(f.slice(k)), g.mean(f.slice(k)), p, m]
                        }),
                    )
                } else {
                    let f = y_density_from_rz_gaussian(alpha_z, r0, sigma0, t_max, grid_n, dt_store)?;
                    (
                        f,
                        Box::new(move |f, k| {
                            let g = f.grid();
                            let rz = g.integrate_with(f.slice(k), |y| y.tanh());
                            let (p, m) = near(f, k, f64::tanh);
                            vec![g.mass(f.slice(k)), rz, p, m]
                        }),
                    )
                }
            }
            "theta" => {
                let mu = s.number("mu", 2f64.sqrt(), true)?;
                let alpha_x = s.number("alpha-x", mu * alpha_z, false)?;
                let f = theta_density_from_uniform(alpha_x, alpha_z, t_max, grid_n, dt_store)?;
                let st = StationaryThetaPdf::new(alpha_x / alpha_z)?;
                (
                    f,
                    Box::new(move |f, k| {
                        let g = f.grid();
                        vec![g.mass(f.slice(k)), g.total_variation(f.slice(k), |t| st.density(t))]
                    }),
                )
            }
            other => {
                return Err(CliError::Config(format!(
                    "chart '{other}' is not one of rz, y, theta"
                )))
            }
        };
    field.write_csv(create(dir, "density.csv")?)?;
    let header: &[&str] = match chart.as_str() {
        "theta" => &["t", "mass", "tv_stationary"],
        _ => &["t", "mass", "mean_r_z", "mass_near_plus", "mass_near_minus"],
    };
    let mut w = table(dir, "fpe_summary.csv", header)?;
    for k in 0..field.n_times() {
        let mut row = vec![fmt(field.time(k))];
        row.extend(summary(&field, k).into_iter().map(fmt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(vec!["density.csv".into(), "fpe_summary.csv".into()])
}

/// Entropy ledgers and the fitted late-time rate for one (`y`) or two
/// (`xz`) measured observables.
pub fn entropy(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let run = run_options(s)?;
    let chart = s.string("chart", "y")?;
    let two = match chart.as_str() {
        "y" => false,
        "xz" => true,
        other => return Err(CliError::Config(format!("chart '{other}' is not one of y, xz"))),
    };
    let alpha = s.number("alpha-z", 1.0, true)?;
    if two && s.is_set("alpha-x") && s.number("alpha-x", alpha, true)? != alpha {
        return Err(CliError::Config(
            "the two-channel ledger needs alpha-x equal to alpha-z".into(),
        ));
    }
    let mut p = if two {
        RateParams::two_channel(alpha, 100)
    } else {
        RateParams::single_channel(alpha, 40)
    };
    p.n_traj = s.count("n-traj", p.n_traj, 2)?;
    p.dt = s.number("dt", p.dt, true)?;
    p.t_max = s.number("t-max", p.t_max, true)?;
    p.fit_from = s.number("fit-from", p.fit_from, false)?;
    p.fit_to = s.number("fit-to", p.fit_to, true)?;
    p.row_dt = record_every(s, p.dt, p.row_dt)? as f64 * p.dt;
    if two {
        p.radial_after = p.row_dt * (p.radial_after / p.row_dt).round().max(1.0);
    } else {
        p.sigma0 = s.number("sigma0", p.sigma0, true)?;
        p.grid_n = s.count("grid-n", p.grid_n, 8)?;
    }
    let r = if two {
        two_channel_rate(&p, run)?
    } else {
        single_channel_rate(&p, run)?
    };
    write_ledgers_csv(create(dir, "ledgers.csv")?, &r.ledgers)?;
    let mut w = table(
        dir,
        "entropy_mean.csv",
        &["t", "s_tot_mean", "s_tot_se", "s_sys_mean", "s_meas_mean", "identity_max_abs"],
    )?;
    let sm = &r.summary;
    for k in 0..sm.t.len() {
        let resid = r
            .ledgers
            .iter()
            .map(|l| (l.s_tot[k] - l.s_sys[k] - l.s_meas[k]).abs())
            .fold(0.0, f64::max);
        w.write_record([
            fmt(sm.t[k]),
            fmt(sm.mean_tot[k]),
            fmt(sm.se_tot[k]),
            fmt(sm.mean_sys[k]),
            fmt(sm.mean_meas[k]),
            fmt(resid),
        ])?;
    }
    w.flush()?;
    let rate = serde_json::json!({
        "expected_rate": r.expected_rate,
        "rate": r.estimate.rate,
        "std_error": r.estimate.std_error,
        "relative_error": r.relative_error(),
        "n_ledgers": r.estimate.n_ledgers,
        "fit_from": p.fit_from,
        "fit_to": p.fit_to,
        "min_mean_over_se": sm.min_standardized_mean(),
    });
    serde_json::to_writer_pretty(create(dir, "rate.json")?, &rate)?;
    println!(
        "fitted rate {:.4} ± {:.4} (late-time value {})",
        r.estimate.rate, r.estimate.std_error, r.expected_rate
    );
    Ok(vec!["ledgers.csv".into(), "entropy_mean.csv".into(), "rate.json".into()])
}

/// Stationary angle densities and their moments for each ratio in `mu-list`.
pub fn stationary(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let mus = s.list("mu-list", &default_mu_list())?;
    let points = s.count("grid-n", 720, 4)?;
    let pi = std::f64::consts::PI;
    let mut w = table(dir, "stationary.csv", &["mu", "theta", "p"])?;
    let mut m = table(
        dir,
        "moments.csv",
        &["mu", "mass", "mean_r_x", "mean_r_z", "var_r_x", "var_r_z", "var_sum"],
    )?;
    for &mu in &mus {
        let pdf = StationaryThetaPdf::new(mu)?;
        for i in 0..=points {
            let th = -pi + 2.0 * pi * i as f64 / points as f64;
            w.write_record([fmt(mu), fmt(th), fmt(pdf.density(th))])?;
        }
        let mo = stationary_moments(mu)?;
        m.write_record([
            fmt(mu),
            fmt(pdf.total_mass()?),
            fmt(mo.mean_rx),
            fmt(mo.mean_rz),
            fmt(mo.var_rx),
            fmt(mo.var_rz),
            fmt(mo.var_rx + mo.var_rz),
        ])?;
    }
    w.flush()?;
    m.flush()?;
    Ok(vec!["stationary.csv".into(), "moments.csv".into()])
}

/// Asymptotic mean production after a quench of the strength ratio from 1
/// to `μ`; with `n-traj > 0` also a simulated quench per ratio.
pub fn quench_cmd(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let run = run_options(s)?;
    let mus = s.list("mu-list", &[0.25, 0.5, 2f64.sqrt(), 1.0, 2.0, 5f64.sqrt(), 4.0])?;
    let mut w = table(dir, "quench.csv", &["mu", "delta_s_tot", "delta_s_tot_inverse_mu"])?;
    for &mu in &mus {
        w.write_record([
            fmt(mu),
            fmt(quench_production(1.0, mu)?),
            fmt(quench_production(1.0, 1.0 / mu)?),
        ])?;
    }
    w.flush()?;
    let mut outputs = vec!["quench.csv".to_string()];
    let n = s.count("n-traj", 0, 0)?;
    if n > 0 {
        let alpha_z = s.number("alpha-z", 1.0, true)?;
        let dt = s.number("dt", 1e-3, true)?;
        let t_max = s.number("t-max", 5.0 / (alpha_z * alpha_z), true)?;
        let every = record_every(s, dt, 0.05)?;
        let grid_n = s.count("grid-n", 512, 8)?;
        let mut w = table(
            dir,
            "quench_simulation.csv",
            &["mu", "predicted", "mean", "std_error", "z_score"],
        )?;
        for &mu in &mus {
            let q = quench(mu, alpha_z, n, dt, t_max, every as f64 * dt, grid_n, run)?;
            w.write_record([
                fmt(mu),
                fmt(q.predicted),
                fmt(q.mean),
                fmt(q.std_error),
                fmt(if q.std_error > 0.0 { q.z_score() } else { 0.0 }),
            ])?;
        }
        w.flush()?;
        outputs.push("quench_simulation.csv".into());
    }
    Ok(outputs)
}

/// Von Neumann entropy of σ_z-measured paths from the maximally mixed state.
pub fn vn(s: &Settings, dir: &Path) -> Result<Outputs, CliError> {
    let run = run_options(s)?;
    let alpha_z = s.number("alpha-z", 1.0, true)?;
    let n = s.count("n-traj", 1000, 1)?;
    let dt = s.number("dt", 1e-3, true)?;
    let t_max = s.number("t-max", 4.0, true)?;
    let every = record_every(s, dt, 0.1)?;
    let v = vn_decay(alpha_z, n, dt, t_max, every as f64 * dt, run)?;
    let mut w = table(dir, "vn.csv", &["t", "s_vn_mean", "s_vn_se", "s_vn_averaged_state"])?;
    for k in 0..v.t.len() {
        w.write_record([
            fmt(v.t[k]),
            fmt(v.mean[k]),
            fmt(v.std_error[k]),
            fmt(v.averaged_state[k]),
        ])?;
    }
    w.flush()?;
    Ok(vec!["vn.csv".into()])
}
