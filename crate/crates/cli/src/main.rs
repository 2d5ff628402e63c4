//! `qsd`: runs one named experiment and writes CSV tables plus a
//! `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical or output
//! failure.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Experiment, Settings};
use error::CliError;

/// Quantum state diffusion experiments. Every setting can come from a
/// `key = value` file given with --config; flags override the file.
#[derive(Debug, Parser)]
#[command(name = "qsd", version, allow_negative_numbers = true)]
struct Cli {
    /// trajectories | fpe | entropy | stationary | quench | vn
    #[arg(long)]
    experiment: Option<String>,
    /// Flat `key = value` file using the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    alpha_z: Option<String>,
    #[arg(long)]
    alpha_x: Option<String>,
    /// Strength ratio α_x / α_z.
    #[arg(long)]
    mu: Option<String>,
    /// Comma-separated ratios for `stationary` and `quench`.
    #[arg(long)]
    mu_list: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    #[arg(long)]
    n_traj: Option<String>,
    #[arg(long)]
    grid_n: Option<String>,
    /// Width of the initial r_z gaussian.
    #[arg(long)]
    sigma0: Option<String>,
    /// Initial r_z.
    #[arg(long)]
    r0: Option<String>,
    /// Coordinates: rz, y, xz, theta, kraus (which apply depends on the
    /// experiment).
    #[arg(long)]
    chart: Option<String>,
    /// Time steps between recorded rows.
    #[arg(long)]
    record_every: Option<String>,
    #[arg(long)]
    fit_from: Option<String>,
    #[arg(long)]
    fit_to: Option<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("experiment", &self.experiment),
            ("seed", &self.seed),
            ("out", &self.out),
            ("threads", &self.threads),
            ("alpha-z", &self.alpha_z),
            ("alpha-x", &self.alpha_x),
            ("mu", &self.mu),
            ("mu-list", &self.mu_list),
            ("dt", &self.dt),
            ("t-max", &self.t_max),
            ("n-traj", &self.n_traj),
            ("grid-n", &self.grid_n),
            ("sigma0", &self.sigma0),
            ("r0", &self.r0),
            ("chart", &self.chart),
            ("record-every", &self.record_every),
            ("fit-from", &self.fit_from),
            ("fit-to", &self.fit_to),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => BTreeMap::new(),
    };
    let settings = Settings::merge(file, cli.flags())?;
    let experiment = settings.experiment()?;
    let dir = settings.out_dir()?;
    std::fs::create_dir_all(&dir)?;
    let outputs = match experiment {
        Experiment::Trajectories => commands::trajectories(&settings, &dir)?,
        Experiment::Fpe => commands::fpe(&settings, &dir)?,
        Experiment::Entropy => commands::entropy(&settings, &dir)?,
        Experiment::Stationary => commands::stationary(&settings, &dir)?,
        Experiment::Quench => commands::quench_cmd(&settings, &dir)?,
        Experiment::Vn => commands::vn(&settings, &dir)?,
    };
    let mut parameters = settings.resolved();
    parameters.remove("out");
    let manifest = serde_json::json!({
        "program": "qsd",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": experiment.name(),
        "config_file": cli.config.as_ref().map(|p| p.display().to_string()),
        "parameters": parameters,
        "outputs": outputs,
        "number_format": "{:.16e}",
        "csv_schema_version": 1,
    });
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)?;
    for o in &outputs {
        println!("wrote {}", dir.join(o).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
