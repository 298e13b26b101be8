use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn isospec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isospec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run isospec")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn example(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    let out = isospec(&["example", name, "--out", path.to_str().unwrap()], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn spectrum_of(v: &Value) -> Vec<(f64, u64)> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|e| (e["lambda"].as_f64().unwrap(), e["multiplicity"].as_u64().unwrap()))
        .collect()
}

const MIXED: &str = r#"[{"k": 1, "i": 1, "c": 1.0, "theta": [-2, -1]}]"#;

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = example(dir.path(), "paper-example-2x2");
    assert_eq!(code(&isospec(&["validate", good.to_str().unwrap()], dir.path())), 0);

    write(
        dir.path(),
        "bad.json",
        r#"{"n": 1, "potential": {"kind": "constant-diagonal", "values": [0]},
            "left": {"A": [[0]], "B": [[0]]}, "right": {"A": [[1]], "B": [[0]]}}"#,
    );
    let out = isospec(&["validate", "bad.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("left-rank"));

    write(dir.path(), "broken.json", "{ not json");
    assert_eq!(code(&isospec(&["validate", "broken.json"], dir.path())), 2);
    assert_eq!(code(&isospec(&["validate", "missing.json"], dir.path())), 2);
}

#[test]
fn spectrum_of_two_branch_example() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    let out = isospec(&["spectrum", p.to_str().unwrap(), "--min", "-5", "--max", "20", "--out", "sp"], dir.path());
    assert_eq!(code(&out), 0);
    let file: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sp/spectrum.json")).unwrap()).unwrap();
    let got = spectrum_of(&file);
    let expected = [(-2.0, 1), (1.0, 2), (4.0, 1), (6.0, 1), (9.0, 1), (13.0, 1), (16.0, 1)];
    assert_eq!(got.len(), expected.len());
    for ((l, m), (el, em)) in got.iter().zip(expected) {
        assert!((l - el).abs() < 1e-6 && *m == em, "{l} {m}");
    }
    assert!(dir.path().join("sp/eigenfunction_k1_i2.csv").exists());
}

#[test]
fn spectrum_scalar_and_empty_window() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "scalar-zero");
    let out = isospec(&["spectrum", p.to_str().unwrap(), "--min", "0.5", "--max", "10"], dir.path());
    assert_eq!(code(&out), 0);
    let got = spectrum_of(&serde_json::from_slice(&out.stdout).unwrap());
    assert_eq!(got.iter().map(|e| e.1).collect::<Vec<_>>(), vec![1, 1, 1]);
    for ((l, _), e) in got.iter().zip([1.0, 4.0, 9.0]) {
        assert!((l - e).abs() < 1e-6);
    }

    let out = isospec(&["spectrum", p.to_str().unwrap(), "--min", "1.5", "--max", "3.5"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(spectrum_of(&serde_json::from_slice(&out.stdout).unwrap()).is_empty());

    let csv = isospec(&["spectrum", p.to_str().unwrap(), "--min", "0.5", "--max", "5", "--format", "csv", "--out", "c"], dir.path());
    assert_eq!(code(&csv), 0);
    let text = fs::read_to_string(dir.path().join("c/spectrum.csv")).unwrap();
    assert!(text.starts_with("lambda,multiplicity,residual\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn grid_flag_is_checked() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "scalar-zero");
    assert_eq!(code(&isospec(&["spectrum", p.to_str().unwrap(), "--grid", "400"], dir.path())), 2);
    assert_eq!(code(&isospec(&["spectrum", p.to_str().unwrap(), "--grid", "3"], dir.path())), 2);
    assert_eq!(code(&isospec(&["spectrum", p.to_str().unwrap(), "--min", "5", "--max", "1"], dir.path())), 2);
    assert_eq!(code(&isospec(&["frobnicate"], dir.path())), 2);
}

#[test]
fn transform_writes_round_trippable_q() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    write(dir.path(), "pert.json", MIXED);
    let out = isospec(&["transform", p.to_str().unwrap(), "pert.json", "--min", "-5", "--max", "20", "--out", "t"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["q_potential.csv", "problem.json", "boundary.json", "psi_k1_i1.csv"] {
        assert!(dir.path().join("t").join(f).exists(), "{f}");
    }
    let boundary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(boundary["a_tilde"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));

    // reloaded Q has the same spectrum
    let verify = isospec(&["verify", p.to_str().unwrap(), "t/problem.json", "--min", "-5", "--max", "20"], dir.path());
    assert_eq!(code(&verify), 0, "{}", String::from_utf8_lossy(&verify.stderr));
}

#[test]
fn empty_transform_reproduces_p_samples() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    write(dir.path(), "none.json", "[]");
    let out = isospec(&["transform", p.to_str().unwrap(), "none.json", "--min", "-5", "--max", "5", "--out", "t"], dir.path());
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("t/q_potential.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(&cols[1..], &[-3.0, 0.0, 0.0]);
    }
}

#[test]
fn inadmissible_coefficient_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    let c = -2.0 / std::f64::consts::PI;
    write(dir.path(), "bad.json", &format!(r#"[{{"k": 1, "i": 1, "c": {c}, "theta": [-2, -1]}}]"#));
    let out = isospec(&["transform", p.to_str().unwrap(), "bad.json", "--min", "-5", "--max", "5"], dir.path());
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 + c*|phi|^2 > 0") && err.contains("margin"), "{err}");
}

#[test]
fn verify_detects_shifted_potential() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    let shifted = fs::read_to_string(&p).unwrap().replacen("-3.0000000000000000e0", "-3.1", 1);
    write(dir.path(), "shifted.json", &shifted);
    let out = isospec(&["verify", p.to_str().unwrap(), "shifted.json", "--min", "-5", "--max", "20"], dir.path());
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["max_shift"].as_f64().unwrap() - 0.1).abs() < 1e-6);
}

#[test]
fn pipeline_passes_and_flags_corrupted_q() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    write(dir.path(), "pert.json", MIXED);
    let ok = isospec(&["verify", p.to_str().unwrap(), "--pipeline", "pert.json", "--min", "-5", "--max", "20"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(report["commutator"]["max_norm"].as_f64().unwrap() > 0.1);

    let t = isospec(&["transform", p.to_str().unwrap(), "pert.json", "--min", "-5", "--max", "5", "--out", "t"], dir.path());
    assert_eq!(code(&t), 0);
    let text = fs::read_to_string(dir.path().join("t/q_potential.csv")).unwrap();
    let mut corrupted = String::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 {
            corrupted.push_str(line);
        } else {
            let mut cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            cols[1] += 0.1;
            cols[3] += 0.1;
            corrupted.push_str(&cols.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(","));
        }
        corrupted.push('\n');
    }
    write(dir.path(), "q_bad.csv", &corrupted);
    let bad = isospec(
        &["verify", p.to_str().unwrap(), "--pipeline", "pert.json", "--q", "q_bad.csv", "--min", "-5", "--max", "20"],
        dir.path(),
    );
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("wave-eq"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = example(dir.path(), "paper-example-2x2");
    write(dir.path(), "pert.json", MIXED);
    let run = |out: &str| {
        let o = isospec(&["transform", p.to_str().unwrap(), "pert.json", "--min", "-5", "--max", "5", "--out", out], dir.path());
        assert_eq!(code(&o), 0);
        (
            fs::read(dir.path().join(out).join("boundary.json")).unwrap(),
            fs::read(dir.path().join(out).join("q_potential.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn example_lists_and_rejects_unknown() {
    let dir = TempDir::new().unwrap();
    let out = isospec(&["example"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("paper-example-2x2"));
    assert_eq!(code(&isospec(&["example", "nope"], dir.path())), 2);
}
