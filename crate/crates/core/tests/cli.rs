use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
schema_version = 1
seed = 11

[heatmap]
resolution = 11

[simulate]
n_products = 2

[montecarlo]
n_exporters = 20
n_replicas = 4
bins = 5
"#;

fn bargain(dir: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bargain"));
    cmd.env_remove("BARGAIN_OUT").arg("--out").arg(dir.join("out"));
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_writes_artifacts_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    for cmd in ["heatmap", "simulate", "estimate", "validate", "decompose", "montecarlo"] {
        ok(&bargain(tmp.path(), Some(&cfg), &[cmd]));
        let m = json(tmp.path().join(format!("out/manifest_{cmd}.json")));
        assert_eq!(m["command"], cmd);
        assert_eq!(m["seed"], 11);
        assert_eq!(m["schema_version"], 1);
        assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
        assert!(!m["outputs"].as_array().unwrap().is_empty());
    }
    let out = tmp.path().join("out");
    for f in [
        "heatmap_drs_phi0.csv",
        "heatmap_crs_phi1.csv",
        "transactions.csv",
        "truth.csv",
        "estimate.json",
        "estimate.txt",
        "changes.csv",
        "montecarlo_replicas.csv",
        "montecarlo_histograms.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let grid = std::fs::read_to_string(out.join("heatmap_drs_interior.csv")).unwrap();
    assert!(grid.starts_with("s,x,phi,gamma,lambda_elas,mu"));
    assert_eq!(grid.lines().count(), 1 + 11 * 11);

    let est = json(out.join("estimate.json"));
    let theta = est["theta"].as_f64().unwrap();
    assert!(theta > 0.0 && theta <= 1.0);

    let fits = json(out.join("validate.json"));
    let models: Vec<&str> = fits.as_array().unwrap().iter().map(|f| f["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["baseline", "phi0_theta1", "theta1", "phi0"]);
    let validate_manifest = json(out.join("manifest_validate.json"));
    let inputs = validate_manifest["inputs"].to_string();
    assert!(inputs.contains("estimate.json") && inputs.contains("transactions.csv"));

    let d = json(out.join("decompose.json"));
    let r = &d["report"];
    let sum = r["cost_share"].as_f64().unwrap() + r["markup_share"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-12);

    let mc = json(out.join("montecarlo_summary.json"));
    assert_eq!(mc["replicas"], 4);
}

#[test]
fn fixed_seed_reproduces_outputs_and_seed_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let read = |dir: &Path| std::fs::read(dir.join("out/transactions.csv")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    ok(&bargain(a.path(), Some(&cfg), &["simulate"]));
    ok(&bargain(b.path(), Some(&cfg), &["simulate"]));
    ok(&bargain(c.path(), Some(&cfg), &["--seed", "12", "simulate"]));
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
    assert_eq!(json(c.path().join("out/manifest_simulate.json"))["seed"], 12);

    // The manifest's effective config alone reproduces the run.
    let m = json(a.path().join("out/manifest_simulate.json"));
    let replay = write_config(tmp.path(), m["config"].as_str().unwrap());
    let d = tempfile::tempdir().unwrap();
    ok(&bargain(d.path(), Some(&replay), &["simulate"]));
    assert_eq!(read(a.path()), read(d.path()));
}

#[test]
fn constant_returns_panel_has_no_cost_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{BASE}\n[structural]\nphi = 0.827\ntheta = 1.0\n"),
    );
    ok(&bargain(tmp.path(), Some(&cfg), &["simulate"]));
    ok(&bargain(tmp.path(), Some(&cfg), &["decompose"]));
    let d = json(tmp.path().join("out/decompose.json"));
    assert_eq!(d["theta"], 1.0);
    assert_eq!(d["report"]["cost_share"].as_f64().unwrap(), 0.0);
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();

    let missing = bargain(tmp.path(), None, &["estimate"]);
    assert_eq!(missing.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("transactions.csv"));

    let cfg = write_config(tmp.path(), "schema_version = 2\n");
    assert_eq!(bargain(tmp.path(), Some(&cfg), &["heatmap"]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "schema_version = 1\n[structural]\nphi = 1.2\ntheta = 0.5\n");
    assert_eq!(bargain(tmp.path(), Some(&cfg), &["heatmap"]).status.code(), Some(2));

    assert_eq!(bargain(tmp.path(), None, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(bargain(tmp.path(), None, &["--jobs", "0", "heatmap"]).status.code(), Some(2));

    let nowhere = tmp.path().join("absent.toml");
    assert_eq!(bargain(tmp.path(), Some(&nowhere), &["heatmap"]).status.code(), Some(5));

    std::fs::create_dir_all(tmp.path().join("out")).unwrap();
    std::fs::write(tmp.path().join("out/transactions.csv"), "importer,exporter\nx,y\n").unwrap();
    assert_eq!(bargain(tmp.path(), None, &["estimate"]).status.code(), Some(3));
}

#[test]
fn nonconvergence_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{BASE}\n[simulate.solver]\ntol = 1e-300\nmax_iter = 1\n"),
    );
    assert_eq!(bargain(tmp.path(), Some(&cfg), &["simulate"]).status.code(), Some(4));
}
