use std::path::Path;
use std::process::{Command, Output};

use rwre_cli::io::SummaryTable;
use rwre_cli::{emit_plotdata, run_experiment, ExperimentConfig, ExperimentReport};
use rwre_cli::{EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, EXIT_USAGE};

fn rwre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwre"))
        .args(args)
        .env("RWRE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> u8 {
    out.status.code().expect("exited normally") as u8
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(out: &Path, checks: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "schema_version": 1,
            "seed": 99,
            "generator": {{"family": "stream_tensor", "amplitude": 0.8, "d": 2, "L": 8, "seed": 5}},
            "validate": true,
            "simulation": {{"paths": 1500, "horizon": 40.0, "tracks": ["mi", "klj"], "checkpoints": [20.0]}},
            "spectral": {{"h1": true, "kozlov": true, "cocycle": true}},
            "resolvent": {{"suites": ["corrector", "kv"], "ladder": 6}},
            "estimators": {{"checks": [{checks}], "scenery_horizon": 30.0, "scenery_paths": 500}},
            "output_dir": {out:?}
        }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

#[test]
fn gen_then_validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.bin");
    let out = rwre(&["gen", "--family", "manhattan", "--d", "2", "--L", "16", "--seed", "3", "--out", s(&env)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("validate.json");
    let out = rwre(&["validate", "--in", s(&env), "--report", s(&report)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(report.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rwre(&["gen", "--bogus"])), EXIT_USAGE);
    assert_eq!(code(&rwre(&[])), EXIT_USAGE);
    assert_eq!(code(&rwre(&["--help"])), EXIT_OK);
    let missing = dir.path().join("nope.bin");
    assert_eq!(code(&rwre(&["validate", "--in", s(&missing)])), EXIT_ERROR);

    // An odd side length is refused by the generator.
    let env = dir.path().join("env.bin");
    let out = rwre(&["gen", "--family", "stream", "--d", "2", "--L", "12", "--out", s(&env)]);
    assert_eq!(code(&out), EXIT_ERROR);

    // Heat kernel beyond (L/4)^2 steps is refused.
    let out = rwre(&["gen", "--family", "stream", "--d", "2", "--L", "8", "--out", s(&env)]);
    assert_eq!(code(&out), EXIT_OK);
    let hk = dir.path().join("hk.csv");
    assert_eq!(code(&rwre(&["heatkernel", "--in", s(&env), "--nmax", "5", "--out", s(&hk)])), EXIT_ERROR);
    assert_eq!(code(&rwre(&["heatkernel", "--in", s(&env), "--nmax", "4", "--out", s(&hk)])), EXIT_OK);
}

#[test]
fn failed_check_exits_one() {
    // With a band of a hundredth of a standard error the MSD comparison
    // cannot pass.
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.bin");
    let sum = dir.path().join("sum.csv");
    let oracle = dir.path().join("sigma2.json");
    assert_eq!(code(&rwre(&["gen", "--family", "stream", "--d", "2", "--L", "8", "--seed", "1", "--out", s(&env)])), EXIT_OK);
    assert_eq!(code(&rwre(&["resolvent", "--in", s(&env), "--out", s(&oracle)])), EXIT_OK);
    let out = rwre(&["simulate", "--in", s(&env), "--paths", "1000", "--horizon", "30", "--seed", "4", "--out", s(&sum)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = dir.path().join("est.json");
    let base = ["estimate", "--in", s(&sum), "--oracle", s(&oracle), "--env", s(&env), "--report", s(&rep)];
    assert_eq!(code(&rwre(&base)), EXIT_OK);
    let mut strict = base.to_vec();
    strict.extend(["--sigmas", "0.01"]);
    assert_eq!(code(&rwre(&strict)), EXIT_CHECK_FAILED);
}

#[test]
fn validate_only_config_on_symmetric_env() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "schema_version": 1,
            "seed": 1,
            "generator": {{"family": "symmetric", "d": 3, "L": 8, "seed": 2, "symmetric": {{"kind": "conductance", "min": 1.0, "max": 2.0}}}},
            "validate": true,
            "output_dir": {:?}
        }}"#,
        dir.path()
    );
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => panic!("{e:#}"),
    };
    let report = run_experiment(&cfg).unwrap();
    assert!(report.passed);
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn pipeline_is_deterministic_and_passes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let checks = r#""scenery", "msd", "bounds", "clt", "edge_cut", "heat_kernel""#;
    let ra = run_experiment(&small_config(a.path(), checks)).unwrap();
    let rb = run_experiment(&small_config(b.path(), checks)).unwrap();
    for c in ra.failed_checks() {
        eprintln!("failed: {c:?}");
    }
    assert!(ra.passed && rb.passed);
    let ja = std::fs::read(a.path().join("report.json")).unwrap();
    let jb = std::fs::read(b.path().join("report.json")).unwrap();
    assert!(ja == jb, "reports differ between identical runs");
    let sa = std::fs::read(a.path().join("traj_summary.csv")).unwrap();
    let sb = std::fs::read(b.path().join("traj_summary.csv")).unwrap();
    assert!(sa == sb);

    let parsed: ExperimentReport = serde_json::from_slice(&ja).unwrap();
    let plots = a.path().join("plots");
    let files = emit_plotdata(&parsed, &plots).unwrap();
    for name in ["plotdata.csv", "heat_kernel.csv", "msd.csv"] {
        let p = plots.join(name);
        assert!(files.contains(&p), "{name} not emitted");
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().count() > 1, "{name} is empty");
    }
}

#[test]
fn summary_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.bin");
    let sum = dir.path().join("sum.csv");
    assert_eq!(code(&rwre(&["gen", "--family", "cyclic", "--d", "2", "--L", "8", "--seed", "9", "--out", s(&env)])), EXIT_OK);
    let out = rwre(&[
        "simulate", "--in", s(&env), "--paths", "50", "--horizon", "10", "--tracks", "mi,klj",
        "--checkpoints", "5", "--out", s(&sum),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let table = SummaryTable::read_csv(&sum).unwrap();
    assert_eq!(table.len(), 50);
    let again = dir.path().join("again.csv");
    table.write_csv(&again).unwrap();
    assert_eq!(std::fs::read(&sum).unwrap(), std::fs::read(&again).unwrap());
}
