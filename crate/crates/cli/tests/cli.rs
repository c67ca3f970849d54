use std::path::Path;
use std::process::{Command, Output};

fn pmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmm"))
        .args(args)
        .output()
        .expect("spawn pmm")
}

fn config_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scalar_toy.toml")
}

#[test]
fn run_then_aggregate_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(config_path())
        .unwrap()
        .replace("horizons = [100, 1000, 10000]", "horizons = [30, 60, 120]")
        .replace("seeds = 50", "seeds = 3");
    let cfg_path = dir.path().join("small.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let out_dir = dir.path().join("out");
    let run = pmm(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("T=120"), "{stdout}");
    assert!(stdout.contains("slopes:"), "{stdout}");

    let agg = pmm(&["aggregate", "--traces", out_dir.join("traces").to_str().unwrap()]);
    assert!(agg.status.success());
    assert_eq!(agg.stdout, std::fs::read(out_dir.join("report.json")).unwrap());
}

#[test]
fn bounds_prints_worked_constants() {
    let out = pmm(&["bounds", "--instance", "scalar_toy", "--T", "10000", "--eta", "0.1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bounds"]["horizon"], 10000);
    assert_eq!(v["bounds"]["window"], 100);
    assert!(v["kappa"]["kappa_c"].as_f64().unwrap() > 0.0);
    assert!(v["bounds"]["omega_c"].as_f64().unwrap() > 0.0);
}

#[test]
fn validate_accepts_registered_instances() {
    for args in [
        vec!["validate", "--instance", "scalar_toy", "--samples", "20000"],
        vec![
            "validate",
            "--instance",
            "affine_qp",
            "--n",
            "3",
            "--p",
            "2",
            "--samples",
            "20000",
        ],
    ] {
        let out = pmm(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["n_samples"], 20000);
    }
}

#[test]
fn bad_inputs_exit_nonzero() {
    assert!(!pmm(&["validate", "--instance", "rosenbrock", "--samples", "10"])
        .status
        .success());
    assert!(
        !pmm(&["bounds", "--instance", "scalar_toy", "--T", "100", "--eta", "1.5"])
            .status
            .success()
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        std::fs::read_to_string(config_path())
            .unwrap()
            .replace("seeds = 50", "seeds = []"),
    )
    .unwrap();
    let out = pmm(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
