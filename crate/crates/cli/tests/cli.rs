use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qsmolu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsmolu")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn run(regime: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![regime, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qsmolu(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn scalar(rep: &Value, name: &str) -> f64 {
    rep["scalars"][name].as_f64().unwrap_or_else(|| panic!("missing scalar {name}: {rep}"))
}

/// Rows of a CSV artifact after the hash comment and the header.
fn rows(path: &Path) -> (String, String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap().to_string();
    let header = lines.next().unwrap().to_string();
    let body = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (comment, header, body)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const LANGEVIN: &str = r#"{
  "regime": "classical-langevin",
  "potential": {"kind": "harmonic", "omega": 1.0},
  "initial": {"kind": "gaussian", "center": 0.5, "sigma": 0.1, "p_sigma": 1.0},
  "integrator": {"dt": 0.01, "steps": 200, "paths": 64, "seed": 7},
  "output": {"snapshot_every": 20}
}"#;

#[test]
fn equilibrium_writes_oscillator_spectrum() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "eq.json",
        r#"{"regime": "equilibrium",
            "grid": {"x_min": -8, "x_max": 8, "n": 800, "boundary": "reflecting"},
            "potential": {"kind": "harmonic", "omega": 1.0},
            "integrator": {"beta": [1.0]}}"#,
    );
    let out = tmp.path().join("out");
    let res = run("equilibrium", &cfg, &out, &[]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (comment, header, body) = rows(&out.join("spectrum.csv"));
    let rep = report(&out);
    assert_eq!(comment, format!("# config_hash={}", rep["config_hash"].as_str().unwrap()));
    assert_eq!(header, "n,E_n");
    let e0: f64 = body[0][1].parse().unwrap();
    assert!((e0 - 0.5).abs() < 1e-3, "{e0}");
    let (_, header, _) = rows(&out.join("density_0.csv"));
    assert_eq!(header, "x,rho_eq");
    // Bloch variance coth(1/2)/2.
    let expected = 0.5 / 0.5f64.tanh();
    assert!((scalar(&rep, "variance_0") / expected - 1.0).abs() < 1e-3);
}

#[test]
fn dispersion_late_slope_is_einstein() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"regime": "dispersion", "integrator": {"dt": 0.01, "t_max": 100, "beta": [0.01, 1.0]}}"#,
    );
    let out = tmp.path().join("out");
    let res = run("dispersion", &cfg, &out, &[]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rep = report(&out);
    let slope = scalar(&rep, "late_slope_0");
    assert!((slope / (2.0 / 0.01) - 1.0).abs() < 0.01, "{slope}");
    assert!(scalar(&rep, "implicit_rel_diff_1") < 1e-6);
    let (_, header, body) = rows(&out.join("eta.csv"));
    assert_eq!(header, "t,beta,eta,sigma");
    assert_eq!(body.len(), 2 * 10_001);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "l.json", LANGEVIN);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&run("classical-langevin", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("classical-langevin", &cfg, &b, &[])), 0);
    assert_eq!(code(&run("classical-langevin", &cfg, &c, &["--seed", "8"])), 0);
    for name in ["ensemble.csv", "msd.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (_, header, body_a) = rows(&a.join("ensemble.csv"));
    let (_, _, body_c) = rows(&c.join("ensemble.csv"));
    assert_eq!(header, "path,step,t,x,p");
    assert_eq!(body_a.len(), 64 * 11);
    assert_ne!(body_a, body_c);
    assert_eq!(report(&c)["seed"], 8);
    assert_ne!(report(&a)["config_hash"], report(&c)["config_hash"]);
}

#[test]
fn validation_failures_exit_one_and_name_fields() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(
        tmp.path(),
        "bad.json",
        r#"{"regime": "classical-langevin", "physical": {"mass": -1, "gamma": -2}}"#,
    );
    let res = qsmolu(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("physical.mass") && err.contains("physical.gamma"), "{err}");

    let broken = write_config(tmp.path(), "broken.json", "{\n  \"regime\": \"joint\",\n  ]");
    let res = qsmolu(&["validate", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let good = write_config(tmp.path(), "good.json", LANGEVIN);
    assert_eq!(code(&qsmolu(&["validate", "--config", good.to_str().unwrap()])), 0);
    // Config for one regime run under another.
    assert_eq!(code(&run("joint", &good, &tmp.path().join("x"), &[])), 1);
    // Unknown subcommand.
    assert_eq!(code(&qsmolu(&["nonsense"])), 1);
}

#[test]
fn unstable_step_is_rejected_before_running() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"regime": "smoluchowski",
            "grid": {"x_min": -5, "x_max": 5, "n": 200, "boundary": "reflecting"},
            "initial": {"kind": "gaussian", "center": 0, "sigma": 1},
            "integrator": {"dt": 0.1, "steps": 10}}"#,
    );
    let res = run("smoluchowski", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("integrator.dt"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn numeric_failure_exits_two_with_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "blow.json",
        r#"{"regime": "classical-langevin",
            "potential": {"kind": "harmonic", "omega": 1000},
            "initial": {"kind": "point", "x": 1},
            "integrator": {"dt": 0.1, "steps": 2000, "paths": 4}}"#,
    );
    let out = tmp.path().join("out");
    let res = run("classical-langevin", &cfg, &out, &[]);
    assert_eq!(code(&res), 2);
    let rep = report(&out);
    assert_eq!(rep["status"], "failed");
    assert_eq!(rep["error"]["module"], "langevin-sim");
    assert!(rep["error"]["step"].as_u64().unwrap() >= 1);
    assert_eq!(rep["partial"], false);
}

#[test]
fn smoluchowski_run_conserves_mass_and_free_energy_decreases() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"regime": "smoluchowski",
            "grid": {"x_min": -5, "x_max": 5, "n": 100, "boundary": "reflecting"},
            "potential": {"kind": "harmonic", "omega": 1.0},
            "initial": {"kind": "gaussian", "center": 1, "sigma": 0.5},
            "integrator": {"dt": 0.001, "steps": 2000},
            "output": {"snapshot_every": 100}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(code(&run("smoluchowski", &cfg, &out, &[])), 0);
    let rep = report(&out);
    assert!(scalar(&rep, "mass_drift_max") < 1e-12);
    assert_eq!(scalar(&rep, "free_energy_monotone"), 1.0);
    let (_, header, body) = rows(&out.join("density.csv"));
    assert_eq!(header, "t,x,rho");
    assert_eq!(body.len(), 21 * 101);
}

#[test]
fn quantum_regimes_write_snapshots() {
    let tmp = TempDir::new().unwrap();
    let body = |grid: &str| {
        format!(
            r#""grid": {grid}, "potential": {{"kind": "harmonic", "omega": 1.0}},
                "initial": {{"kind": "gaussian", "center": 1.0, "sigma": 0.7071067811865476}},
                "integrator": {{"dt": 0.00025, "steps": 2000}}, "output": {{"snapshot_every": 400}}"#
        )
    };
    let periodic = body(r#"{"x_min": -10, "x_max": 10, "n": 256, "boundary": "periodic"}"#);
    let walled = body(r#"{"x_min": -4, "x_max": 4, "n": 160, "boundary": "reflecting"}"#);
    let s = write_config(tmp.path(), "s.json", &format!(r#"{{"regime": "schrodinger", {periodic}}}"#));
    let m = write_config(tmp.path(), "m.json", &format!(r#"{{"regime": "madelung", {walled}}}"#));
    let (so, mo) = (tmp.path().join("s"), tmp.path().join("m"));
    assert_eq!(code(&run("schrodinger", &s, &so, &[])), 0);
    let res = run("madelung", &m, &mo, &[]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (_, header, rows_s) = rows(&so.join("wave.csv"));
    assert_eq!(header, "t,x,re_psi,im_psi,rho");
    assert_eq!(rows_s.len(), 6 * 256);
    let (_, header, rows_m) = rows(&mo.join("flow.csv"));
    assert_eq!(header, "t,x,rho,v");
    assert_eq!(rows_m.len(), 6 * 161);
    // Coherent state: the centre follows cos t in both descriptions.
    let rs = report(&so);
    assert!(scalar(&rs, "norm_drift_max") < 1e-12);
    assert!((scalar(&rs, "mean_x_final") - 0.5f64.cos()).abs() < 1e-6);
    assert!((scalar(&report(&mo), "mean_x_final") - 0.5f64.cos()).abs() < 1e-3);
}

#[test]
fn dt_halving_sweep_shows_second_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"regime": "schrodinger",
            "grid": {"x_min": -10, "x_max": 10, "n": 256, "boundary": "periodic"},
            "potential": {"kind": "harmonic", "omega": 1.0},
            "initial": {"kind": "gaussian", "center": 1.0, "sigma": 0.5},
            "integrator": {"dt": 0.04, "t_max": 2.0}}"#,
    );
    let out = tmp.path().join("sweep");
    let res = qsmolu(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "integrator.dt", "--values", "0.04,0.02,0.01", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (_, header, body) = rows(&out.join("sweep.csv"));
    let col = header.split(',').position(|h| h == "step_doubling_distance").unwrap();
    let errs: Vec<f64> = body.iter().map(|r| r[col].parse().unwrap()).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() < 0.4, "{errs:?}");
    }
    assert!(out.join("run_2").join("wave.csv").exists());
}

#[test]
fn kt_sweep_on_dispersion_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"regime": "dispersion", "integrator": {"dt": 0.01, "t_max": 1, "beta": [1.0]}}"#,
    );
    let out = tmp.path().join("sweep");
    let res = qsmolu(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "physical.kT", "--values", "0.25,0.5,1,2,4", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    let sweep: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let sigma: Vec<f64> = sweep["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["scalars"]["sigma_final_at_kT"].as_f64().unwrap())
        .collect();
    assert!(sigma.windows(2).all(|w| w[1] > w[0]), "{sigma:?}");
}

#[test]
fn sweep_edge_cases() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "l.json", LANGEVIN);
    let out = tmp.path().join("empty");
    let res = qsmolu(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "integrator.dt", "--values", "", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let (_, header, body) = rows(&out.join("sweep.csv"));
    assert_eq!(header, "index,value,status");
    assert!(body.is_empty());

    let res = qsmolu(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "integrator.bogus", "--values", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 1);

    // An invalid value is recorded and the sweep continues.
    let out = tmp.path().join("mixed");
    let res = qsmolu(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "physical.mass", "--values", "-1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let (_, header, body) = rows(&out.join("sweep.csv"));
    let status = header.split(',').position(|h| h == "status").unwrap();
    assert_eq!(body[0][status], "invalid");
    assert_eq!(body[1][status], "ok");
}

#[test]
fn failed_madelung_run_keeps_partial_snapshots() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "m.json",
        r#"{"regime": "madelung",
            "grid": {"x_min": -4, "x_max": 4, "n": 160, "boundary": "periodic"},
            "potential": {"kind": "harmonic", "omega": 1.0},
            "initial": {"kind": "gaussian", "center": 1.0, "sigma": 0.7071067811865476},
            "integrator": {"dt": 0.001, "steps": 500},
            "output": {"snapshot_every": 10}}"#,
    );
    let out = tmp.path().join("out");
    let res = run("madelung", &cfg, &out, &[]);
    assert_eq!(code(&res), 2);
    let rep = report(&out);
    assert_eq!(rep["status"], "failed");
    assert_eq!(rep["partial"], true);
    assert_eq!(rep["error"]["module"], "quantum-dynamics");
    let step = rep["error"]["step"].as_u64().unwrap();
    assert!(step >= 1 && step <= 500);
    let (_, _, body) = rows(&out.join("flow.csv"));
    assert!(body.len() >= 160);
}
