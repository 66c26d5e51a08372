//! End-to-end checks of the command-line tool and its file outputs.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfd-wave"))
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.as_ref().display()))
}

#[test]
fn generate_mesh_then_run_on_it() {
    let dir = tempfile::tempdir().unwrap();
    let mesh_path = dir.path().join("mesh.json");
    let status = bin()
        .args([
            "generate-mesh",
            "--n-seeds",
            "24",
            "--lloyd",
            "2",
            "--seed",
            "7",
            "--out",
        ])
        .arg(&mesh_path)
        .status()
        .unwrap();
    assert!(status.success());
    let mesh = mfd_wave_cli::meshio::load_mesh(&mesh_path).unwrap();
    assert_eq!(mesh.n_cells(), 24);
    mesh.validate().unwrap();

    let out_dir = dir.path().join("run");
    let status = bin()
        .args([
            "run", "--test", "2", "--tau", "0.05", "--T", "0.2", "--check",
        ])
        .arg("--mesh")
        .arg(&mesh_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--dump-operators", "--checkpoint", "--dump-state"])
        .status()
        .unwrap();
    assert!(status.success());

    let series = read(out_dir.join("series.csv"));
    let mut lines = series.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,H_h,delta,energy_residual,newton_iters"
    );
    assert_eq!(series.lines().count(), 1 + 5, "header plus steps 0..=4");

    let report: serde_json::Value =
        serde_json::from_str(&read(out_dir.join("report.json"))).unwrap();
    assert!(report["hamiltonian_drift"].as_f64().unwrap().is_finite());
    assert!(
        report["solution_error"].is_null(),
        "test 2 has no exact solution"
    );

    let checkpoint: serde_json::Value =
        serde_json::from_str(&read(out_dir.join("checkpoint.json"))).unwrap();
    assert_eq!(checkpoint["step"], 4);
    assert_eq!(checkpoint["u"].as_array().unwrap().len(), 24);

    let u_csv = read(out_dir.join("u.csv"));
    assert_eq!(u_csv.lines().next().unwrap(), "cell,value");
    assert_eq!(u_csv.lines().count(), 25, "header plus one row per cell");

    let mtx = read(out_dir.join("m_f.mtx"));
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    let div = read(out_dir.join("div.mtx"));
    assert!(div.starts_with("%%MatrixMarket matrix coordinate real general"));

    // the re-saved mesh matches the input bit for bit
    assert_eq!(read(&mesh_path), read(out_dir.join("mesh.json")));
}

#[test]
fn run_accepts_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("experiment.json");
    fs::write(
        &cfg_path,
        r#"{
            "test": "test1",
            "mesh": {"generate": {"n_seeds": 16, "lloyd_iters": 2, "rng_seed": 1}},
            "tau": 0.1,
            "T": 0.3,
            "cadence": 1
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg_path)
        .args(["--T", "0.2"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("finished 2 steps"), "stdout: {stdout}");
    assert!(
        stdout.contains("E "),
        "test 1 reports a solution error: {stdout}"
    );
}

#[test]
fn study_outputs_are_reproducible_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "study".to_string(),
            "--test".into(),
            "2".into(),
            "--h-targets".into(),
            "0.4,0.25".into(),
            "--tau".into(),
            "0.05".into(),
            "--T".into(),
            "0.2".into(),
            "--lloyd".into(),
            "3".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    assert!(bin().args(args(&out1)).status().unwrap().success());
    assert!(bin().args(args(&out2)).status().unwrap().success());
    assert_eq!(
        read(out1.join("report.csv")),
        read(out2.join("report.csv")),
        "identical configs must produce identical tables"
    );
    assert_eq!(
        read(out1.join("report.json")),
        read(out2.join("report.json"))
    );
    let csv = read(out1.join("report.csv"));
    assert!(csv.starts_with("h,tau,E,sigma,delta,epsilon\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn check_mode_exits_nonzero_on_missing_slopes() {
    // a single-row study cannot produce slopes, so --check must fail
    let status = bin()
        .args([
            "study",
            "--test",
            "2",
            "--h-targets",
            "0.4",
            "--tau",
            "0.1",
            "--T",
            "0.1",
            "--lloyd",
            "1",
            "--check",
        ])
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn bad_arguments_are_rejected() {
    // both mesh sources at once
    let out = bin()
        .args([
            "generate-mesh",
            "--n-seeds",
            "4",
            "--target-h",
            "0.1",
            "--out",
            "x.json",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    // unknown test id
    let out = bin()
        .args(["run", "--test", "3", "--tau", "0.1", "--T", "0.1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown test case"));
    // study without an axis
    let out = bin().args(["study", "--test", "1"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn lemma_checks_run_on_coarse_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("lemma");
    let status = bin()
        .args([
            "lemma-checks",
            "--h-targets",
            "0.4,0.3",
            "--defect-h-targets",
            "0.4,0.3",
            "--lloyd",
            "2",
        ])
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(out_dir.join("lemma_report.json"))).unwrap();
    assert_eq!(report["projection"].as_array().unwrap().len(), 2);
    assert!(report["defect_ratio"].as_f64().unwrap() > 0.0);
}
