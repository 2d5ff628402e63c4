use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn qsd(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string()
        + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn run_ok(dir: &Path, args: &[&str]) {
    let mut all = vec!["--out", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    let (code, text) = qsd(&all);
    assert_eq!(code, 0, "{text}");
}

/// Header and numeric rows of a CSV file.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--experiment", "trajectories", "--seed", "5", "--t-max", "0.5"];
    run_ok(a.path(), &args);
    run_ok(b.path(), &[&args[..], &["--threads", "2"]].concat());
    for f in ["paths.csv", "summary.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["experiment"], "trajectories");
    assert_eq!(m["parameters"]["seed"], "5");
    assert_eq!(m["parameters"]["alpha-z"], "1");
}

#[test]
fn single_channel_paths_stay_in_the_bloch_ball() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "trajectories", "--alpha-z", "1", "--t-max", "4", "--r0", "0.3"]);
    let (h, rows) = read_table(&d.path().join("paths.csv"));
    assert_eq!(h, ["trajectory_id", "t", "r_x", "r_y", "r_z", "purity"]);
    let rz = col(&h, "r_z");
    assert_eq!(rows.len(), 4 * 401);
    assert!(rows.iter().all(|r| r[rz].abs() <= 1.0));
    // 17 significant digits
    let text = std::fs::read_to_string(d.path().join("paths.csv")).unwrap();
    let second = text.lines().nth(2).unwrap();
    assert!(second.split(',').nth(1).unwrap().starts_with("1.0000000000000000e-2"));
}

#[test]
fn two_channel_purity_rises() {
    let d = TempDir::new().unwrap();
    run_ok(
        d.path(),
        &["--experiment", "trajectories", "--chart", "xz", "--n-traj", "500", "--t-max", "1", "--record-every", "50"],
    );
    let (h, rows) = read_table(&d.path().join("summary.csv"));
    let (m, se) = (col(&h, "purity_mean"), col(&h, "purity_se"));
    assert!((rows[0][m] - 0.5).abs() < 1e-15);
    for w in rows.windows(2) {
        assert!(w[1][m] >= w[0][m] - 3.0 * w[1][se]);
    }
    assert!(rows.last().unwrap()[m] > 0.9);
}

#[test]
fn fpe_conserves_mass_and_splits_evenly() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "fpe", "--chart", "rz", "--t-max", "2"]);
    let (h, rows) = read_table(&d.path().join("fpe_summary.csv"));
    let mass = col(&h, "mass");
    assert!(rows.iter().all(|r| (r[mass] - 1.0).abs() < 1e-6));
    let last = rows.last().unwrap();
    let (p, m) = (last[col(&h, "mass_near_plus")], last[col(&h, "mass_near_minus")]);
    assert!((p - m).abs() < 1e-6 && p + m > 0.9, "{p} {m}");
    let (dh, _) = read_table(&d.path().join("density.csv"));
    assert_eq!(dh, ["t", "x", "p"]);
}

#[test]
fn fpe_angle_relaxes_to_stationary() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "fpe", "--chart", "theta", "--mu", "2.2360679774997898", "--t-max", "5", "--grid-n", "256"]);
    let (h, rows) = read_table(&d.path().join("fpe_summary.csv"));
    let tv = rows.last().unwrap()[col(&h, "tv_stationary")];
    assert!(tv < 1e-3, "{tv}");
}

#[test]
fn entropy_rate_single_channel() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "entropy", "--seed", "42", "--n-traj", "400"]);
    let rate: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("rate.json")).unwrap()).unwrap();
    let r = rate["rate"].as_f64().unwrap();
    assert!((7.2..=8.8).contains(&r), "{r}");
    let (h, rows) = read_table(&d.path().join("entropy_mean.csv"));
    let id = col(&h, "identity_max_abs");
    assert!(rows.iter().all(|row| row[id] < 1e-9));
    let (lh, lrows) = read_table(&d.path().join("ledgers.csv"));
    assert_eq!(lh, ["t", "s_tot", "s_sys", "s_meas", "trajectory_id"]);
    assert_eq!(lrows.len(), 400 * 201);
}

#[test]
fn entropy_rate_two_channels() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "entropy", "--chart", "xz", "--seed", "42"]);
    let rate: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("rate.json")).unwrap()).unwrap();
    let r = rate["rate"].as_f64().unwrap();
    assert!((16.2..=19.8).contains(&r), "{r}");
}

#[test]
fn stationary_tables() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "stationary", "--mu-list", "1,2.2360679774997898"]);
    let (h, rows) = read_table(&d.path().join("stationary.csv"));
    let (mu, th, p) = (col(&h, "mu"), col(&h, "theta"), col(&h, "p"));
    let flat = 1.0 / (2.0 * std::f64::consts::PI);
    assert!(rows.iter().filter(|r| r[mu] == 1.0).all(|r| (r[p] - flat).abs() < 1e-12));
    let peak = rows
        .iter()
        .filter(|r| r[mu] > 2.0)
        .fold((0.0, 0.0), |b, r| if r[p] > b.1 { (r[th], r[p]) } else { b });
    assert!((peak.0.abs() - std::f64::consts::FRAC_PI_2).abs() < 0.01);
    let (mh, mrows) = read_table(&d.path().join("moments.csv"));
    let vs = col(&mh, "var_sum");
    assert!(mrows.iter().all(|r| (r[vs] - 1.0).abs() < 1e-8));
}

#[test]
fn quench_values_and_simulation() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "quench", "--mu-list", "0.5,1,2.2360679774997898"]);
    let (h, rows) = read_table(&d.path().join("quench.csv"));
    let (v, vi) = (col(&h, "delta_s_tot"), col(&h, "delta_s_tot_inverse_mu"));
    assert_eq!(rows[1][v], 0.0);
    assert!(rows.iter().all(|r| (r[v] - r[vi]).abs() < 1e-8));
    assert!(!d.path().join("quench_simulation.csv").exists());

    let s = TempDir::new().unwrap();
    run_ok(
        s.path(),
        &["--experiment", "quench", "--mu-list", "2.2360679774997898", "--n-traj", "10000", "--seed", "42"],
    );
    let (h, rows) = read_table(&s.path().join("quench_simulation.csv"));
    assert!(rows[0][col(&h, "z_score")].abs() < 4.0);
}

#[test]
fn von_neumann_decay() {
    let d = TempDir::new().unwrap();
    run_ok(d.path(), &["--experiment", "vn"]);
    let (h, rows) = read_table(&d.path().join("vn.csv"));
    let (m, avg) = (col(&h, "s_vn_mean"), col(&h, "s_vn_averaged_state"));
    let ln2 = std::f64::consts::LN_2;
    assert!((rows[0][m] - ln2).abs() < 1e-12);
    assert!(rows.last().unwrap()[m] < 0.05);
    assert!(rows.iter().all(|r| (r[avg] - ln2).abs() < 0.02));
}

#[test]
fn config_file_with_flag_override() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.ini");
    std::fs::write(&cfg, "experiment = trajectories\nn_traj = 3\nt-max = 0.1\nseed = 9\n").unwrap();
    let out = d.path().join("o");
    let (code, text) = qsd(&["--config", cfg.to_str().unwrap(), "--n-traj", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let (h, rows) = read_table(&out.join("paths.csv"));
    let id = col(&h, "trajectory_id");
    assert_eq!(rows.iter().map(|r| r[id] as usize).max(), Some(1));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["parameters"]["n-traj"], "2");
    assert_eq!(m["parameters"]["seed"], "9");
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let o = d.path().to_str().unwrap();
    assert_eq!(qsd(&["--out", o]).0, 1);
    assert_eq!(qsd(&["--experiment", "fig2", "--out", o]).0, 1);
    assert_eq!(qsd(&["--experiment", "vn", "--dt", "-1", "--out", o]).0, 1);
    assert_eq!(qsd(&["--experiment", "vn", "--threads", "0", "--out", o]).0, 1);
    assert_eq!(qsd(&["--experiment", "trajectories", "--chart", "abc", "--out", o]).0, 1);
    assert_eq!(qsd(&["--no-such-flag"]).0, 1);
    let cfg = d.path().join("bad.ini");
    std::fs::write(&cfg, "experiment = vn\ncolour = blue\n").unwrap();
    assert_eq!(qsd(&["--config", cfg.to_str().unwrap(), "--out", o]).0, 1);
    // the y chart cannot hold an eigenstate; this fails inside a trajectory
    let (code, text) = qsd(&["--experiment", "trajectories", "--chart", "y", "--r0", "1", "--out", o]);
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("trajectory 0"));
    assert_eq!(qsd(&["--help"]).0, 0);
}
