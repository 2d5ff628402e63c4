//! Run configuration: built-in defaults, then an optional flat `key = value`
//! file, then command-line flags.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in config files and as `--<key>` flags.
pub const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "out",
    "threads",
    "alpha-z",
    "alpha-x",
    "mu",
    "mu-list",
    "dt",
    "t-max",
    "n-traj",
    "grid-n",
    "sigma0",
    "r0",
    "chart",
    "record-every",
    "fit-from",
    "fit-to",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Trajectories,
    Fpe,
    Entropy,
    Stationary,
    Quench,
    Vn,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trajectories => "trajectories",
            Experiment::Fpe => "fpe",
            Experiment::Entropy => "entropy",
            Experiment::Stationary => "stationary",
            Experiment::Quench => "quench",
            Experiment::Vn => "vn",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        <Experiment as clap::ValueEnum>::from_str(s, true)
            .map_err(|_| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Merged settings. Every lookup records the value it resolved to, so the
/// manifest lists defaults as well as explicit settings.
#[derive(Debug)]
pub struct Settings {
    raw: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

/// Accepts `alpha_z` as a spelling of `alpha-z`.
fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Settings {
    /// Reads a config file; keys outside any section or in `[run]` are used.
    pub fn from_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
        let mut ini = configparser::ini::Ini::new_cs();
        let map = ini
            .load(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut out = BTreeMap::new();
        for (section, entries) in map {
            if section != "default" && section != "run" {
                return Err(CliError::Config(format!(
                    "{}: unexpected section [{section}]",
                    path.display()
                )));
            }
            for (k, v) in entries {
                let v = v.ok_or_else(|| {
                    CliError::Config(format!("{}: key '{k}' has no value", path.display()))
                })?;
                out.insert(normalize(&k), v.trim().to_string());
            }
        }
        Ok(out)
    }

    /// `file` values overridden by `flags`; unknown keys are rejected.
    pub fn merge(
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut raw = file;
        raw.extend(flags);
        if let Some(k) = raw.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key '{k}'")));
        }
        Ok(Self {
            raw,
            resolved: RefCell::new(BTreeMap::new()),
        })
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        match self.raw.get(key) {
            None => Ok(None),
            Some(s) => {
                let v = s
                    .parse::<T>()
                    .map_err(|_| CliError::Config(format!("bad value for '{key}': '{s}'")))?;
                self.resolved.borrow_mut().insert(key.into(), s.clone());
                Ok(Some(v))
            }
        }
    }

    fn record(&self, key: &str, shown: String) {
        self.resolved.borrow_mut().insert(key.into(), shown);
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.raw.contains_key(key)
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        self.lookup::<Experiment>("experiment")?
            .ok_or_else(|| CliError::Config("no experiment given".into()))
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String, CliError> {
        let v = self.lookup::<String>(key)?.unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64, CliError> {
        let v = self.lookup::<u64>(key)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// A count of at least `min`.
    pub fn count(&self, key: &str, default: usize, min: usize) -> Result<usize, CliError> {
        let v = self.lookup::<usize>(key)?.unwrap_or(default);
        if v < min {
            return Err(CliError::Config(format!("'{key}' must be at least {min}, got {v}")));
        }
        self.record(key, v.to_string());
        Ok(v)
    }

    /// A finite number; `positive` also requires `> 0`.
    pub fn number(&self, key: &str, default: f64, positive: bool) -> Result<f64, CliError> {
        let v = self.lookup::<f64>(key)?.unwrap_or(default);
        if !v.is_finite() || (positive && v <= 0.0) {
            let need = if positive { "a positive number" } else { "finite" };
            return Err(CliError::Config(format!("'{key}' must be {need}, got {v}")));
        }
        self.record(key, format!("{v}"));
        Ok(v)
    }

    pub fn threads(&self) -> Result<Option<usize>, CliError> {
        match self.lookup::<usize>("threads")? {
            Some(0) => Err(CliError::Config("'threads' must be at least 1".into())),
            other => Ok(other),
        }
    }

    /// Comma-separated positive numbers.
    pub fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let v: Vec<f64> = match self.raw.get(key) {
            None => default.to_vec(),
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x > 0.0)
                        .ok_or_else(|| {
                            CliError::Config(format!("bad entry '{}' in '{key}'", p.trim()))
                        })
                })
                .collect::<Result<_, _>>()?,
        };
        if v.is_empty() {
            return Err(CliError::Config(format!("'{key}' is empty")));
        }
        let shown: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        self.record(key, shown.join(","));
        Ok(v)
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        Ok(PathBuf::from(self.string("out", "out")?))
    }

    /// Everything looked up so far, as strings.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        let flags = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Settings::merge(BTreeMap::new(), flags).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let file = [("dt".to_string(), "0.01".to_string())].into_iter().collect();
        let flags = [("dt".to_string(), "0.001".to_string())].into_iter().collect();
        let s = Settings::merge(file, flags).unwrap();
        assert_eq!(s.number("dt", 1.0, true).unwrap(), 0.001);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let bad = [("alpha".to_string(), "1".to_string())].into_iter().collect();
        assert!(Settings::merge(BTreeMap::new(), bad).is_err());
        assert!(settings(&[("dt", "-1")]).number("dt", 1.0, true).is_err());
        assert!(settings(&[("dt", "abc")]).number("dt", 1.0, true).is_err());
        assert!(settings(&[("n-traj", "0")]).count("n-traj", 4, 1).is_err());
        assert!(settings(&[("mu-list", "1,,2")]).list("mu-list", &[1.0]).is_err());
        assert!(settings(&[("threads", "0")]).threads().is_err());
    }

    #[test]
    fn defaults_are_recorded() {
        let s = settings(&[("seed", "7")]);
        assert_eq!(s.u64("seed", 1).unwrap(), 7);
        assert_eq!(s.number("alpha-z", 1.0, true).unwrap(), 1.0);
        let r = s.resolved();
        assert_eq!(r["seed"], "7");
        assert_eq!(r["alpha-z"], "1");
    }

    #[test]
    fn experiment_names() {
        assert_eq!("quench".parse::<Experiment>().unwrap(), Experiment::Quench);
        assert!("fig9".parse::<Experiment>().is_err());
        assert_eq!(Experiment::Vn.name(), "vn");
    }

    #[test]
    fn underscores_are_accepted_in_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.ini");
        std::fs::write(&p, "# comment\nalpha_z = 0.5\nexperiment = vn\n").unwrap();
        let m = Settings::from_file(&p).unwrap();
        assert_eq!(m["alpha-z"], "0.5");
        std::fs::write(&p, "[physics]\nalpha_z = 0.5\n").unwrap();
        assert!(Settings::from_file(&p).is_err());
    }
}
