use std::path::Path;
use std::process::Command;

use markov_identity::cli::run;
use markov_identity::io::{read_trajectory, ChainFile};

fn mcid(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("mcid").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn family_simulate_test_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("g.json");
    let traj = dir.path().join("x.txt");

    let (code, _, err) = mcid(&["family", "g", "--d", "4", "--p-star", "0.05", "--uniform", "--out", p(&chain)]);
    assert_eq!(code, 0, "{err}");
    let f = ChainFile::read(&chain).unwrap();
    assert_eq!(f.matrix.d(), 5);

    let (code, out, err) = mcid(&["--json", "analyze", "--chain", p(&chain), "--eps", "0.3"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let m = v["plan"]["m"].as_u64().unwrap();
    assert!(m > 0);

    let m_arg = m.to_string();
    let (code, _, err) = mcid(&["--seed", "5", "simulate", "--chain", p(&chain), "--m", &m_arg, "--out", p(&traj)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read_trajectory(&traj, 5).unwrap().len() as u64, m);

    let (code, out, err) = mcid(&["--json", "test", "--reference", p(&chain), "--trajectory", p(&traj), "--eps", "0.3"]);
    assert!(code == 0 || code == 1, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["verdict"].as_u64().unwrap(), code as u64);
    assert_eq!(report["m_used"].as_u64().unwrap(), m);
}

#[test]
fn short_trajectory_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("h.json");
    let traj = dir.path().join("x.txt");
    assert_eq!(mcid(&["family", "h", "--d", "12", "--eta", "0.02", "--out", p(&chain)]).0, 0);
    assert_eq!(mcid(&["simulate", "--chain", p(&chain), "--m", "500", "--out", p(&traj)]).0, 0);

    let (code, _, err) = mcid(&["test", "--reference", p(&chain), "--trajectory", p(&traj)]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());

    let (code, out, _) = mcid(&["test", "--reference", p(&chain), "--trajectory", p(&traj), "--force"]);
    assert!(code == 0 || code == 1);
    assert!(out.contains("under-powered"), "{out}");
}

#[test]
fn analyze_text_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("c.json");
    std::fs::write(&chain, "[[0.5, 0.5], [0.25, 0.75]]").unwrap();
    let (code, out, _) = mcid(&["analyze", "--chain", p(&chain), "--mode", "instance"]);
    assert_eq!(code, 0);
    assert!(out.contains("t_mix") && out.contains("instance"), "{out}");

    std::fs::write(&chain, "[[1, 0], [0, 1]]").unwrap();
    let (code, _, err) = mcid(&["analyze", "--chain", p(&chain)]);
    assert_eq!(code, 2);
    assert!(err.to_lowercase().contains("ergodic"), "{err}");

    let (code, ..) = mcid(&["analyze", "--chain", p(&chain), "--mode", "sideways"]);
    assert_eq!(code, 2);
}

#[test]
fn experiment_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let csv = dir.path().join("out.csv");
    std::fs::write(
        &spec,
        r#"{
          "reference": { "kind": "inline", "matrix": [[0.5, 0.5], [0.5, 0.5]] },
          "alternatives": [{ "name": "sticky", "source": { "kind": "inline", "matrix": [[0.9, 0.1], [0.1, 0.9]] } }],
          "m_grid": [200, 400],
          "trials": 10,
          "eps": 0.4,
          "delta": 0.2,
          "seed": 3,
          "calibration_trials": 200
        }"#,
    )
    .unwrap();
    let (code, _, err) = mcid(&["--threads", "1", "experiment", "--spec", p(&spec), "--out", p(&csv)]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("m,trials,null_reject_rate"), "{}", lines[0]);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mcid");
    let ok = Command::new(bin).arg("--help").output().unwrap();
    assert!(ok.status.success());
    for sub in ["analyze", "test", "simulate", "family", "experiment", "calibrate"] {
        assert!(String::from_utf8_lossy(&ok.stdout).contains(sub), "missing {sub}");
    }
    let bad = Command::new(bin).args(["family", "h", "--d", "7", "--eta", "0.02"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
