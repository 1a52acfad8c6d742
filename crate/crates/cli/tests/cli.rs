//! End-to-end tests of the binary: exit codes, CSV artifacts, and the
//! model-file round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mpoisson(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpoisson"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read_csv_column(path: &Path, column: usize) -> Vec<f64> {
    let text = fs::read_to_string(path).expect("csv exists");
    text.lines()
        .skip(1)
        .map(|line| line.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn solve_builtin_emits_constant_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpoisson(
        &[
            "solve",
            "example",
            "map-g1-neg",
            "--anchor",
            "0,1",
            "--max-levels",
            "20",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = dir.path().join("run");
    let f_d = read_csv_column(&run.join("f_values.csv"), 3);
    let f_k = read_csv_column(&run.join("f_values.csv"), 4);
    assert_eq!(f_d.len(), 63); // 21 levels x 3 phases
    let shift = f_d[0] - f_k[0];
    for i in 0..f_d.len() {
        assert!(
            (f_d[i] - f_k[i] - shift).abs() < 1e-8,
            "shift varies at state {i}"
        );
    }
    assert!((shift - (-10.3247)).abs() <= 1e-2, "shift = {shift}");

    // state ordering contract: state_index = 3 * level + phase - 1
    let text = fs::read_to_string(run.join("f_values.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "state_index,level,phase,f_D,f_K");
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let (idx, level, phase): (usize, usize, usize) = (
            cells[0].parse().unwrap(),
            cells[1].parse().unwrap(),
            cells[2].parse().unwrap(),
        );
        assert_eq!(idx, n);
        assert_eq!(idx, 3 * level + phase - 1);
    }
}

#[test]
fn stationary_builtin_matches_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpoisson(
        &["stationary", "example", "scalar-gig1", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success());
    let pi = read_csv_column(&dir.path().join("run/pi.csv"), 3);
    let expected = [
        0.5469, 0.1877, 0.1099, 0.0644, 0.0377, 0.0221, 0.0129, 0.0076, 0.0044,
    ];
    for (i, want) in expected.iter().enumerate() {
        assert!((pi[i] - want).abs() <= 5e-4, "pi[{i}] = {}", pi[i]);
    }
}

#[test]
fn verify_builtin_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpoisson(
        &["verify", "example", "scalar-gig1", "--seed", "42"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("all checks passed"));
}

#[test]
fn export_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpoisson(
        &["export", "example", "map-g1-neg", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success());
    let exported = dir.path().join("run/model.json");

    // run both the exported file and the builtin; artifacts must match bitwise
    let a = mpoisson(
        &[
            "stationary",
            exported.to_str().unwrap(),
            "--out",
            "from_file",
        ],
        dir.path(),
    );
    assert!(
        a.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = mpoisson(
        &[
            "stationary",
            "example",
            "map-g1-neg",
            "--out",
            "from_builtin",
        ],
        dir.path(),
    );
    assert!(b.status.success());
    let pa = fs::read(dir.path().join("from_file/pi.csv")).unwrap();
    let pb = fs::read(dir.path().join("from_builtin/pi.csv")).unwrap();
    assert_eq!(pa, pb);

    // exporting the re-parsed model reproduces the same document
    let c = mpoisson(
        &["export", exported.to_str().unwrap(), "--out", "run2"],
        dir.path(),
    );
    assert!(c.status.success());
    let first = fs::read(dir.path().join("run/model.json")).unwrap();
    let second = fs::read(dir.path().join("run2/model.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn dense_model_file_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{
        "kind": "dtmc-dense",
        "matrix": [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]],
        "forcing": {"table": [1.0, 0.0, -2.0]},
        "anchor": 0,
        "censor_set": [0, 1]
    }"#;
    fs::write(dir.path().join("chain.json"), model).unwrap();
    let out = mpoisson(&["solve", "chain.json", "--out", "run"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["pi.csv", "xtilde.csv", "f_values.csv", "diagnostics.csv"] {
        assert!(dir.path().join("run").join(name).exists(), "{name} missing");
    }
    let diag = fs::read_to_string(dir.path().join("run/diagnostics.csv")).unwrap();
    let residual: f64 = diag
        .lines()
        .find(|l| l.starts_with("residual,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-10);
}

#[test]
fn block_model_kinds() {
    let dir = tempfile::tempdir().unwrap();
    // two-phase birth-death blocks, valid as both qbd and gim1
    let model = r#"{
        "kind": "qbd",
        "block_size": 2,
        "blocks": {
            "a": {
                "-1": [[0.25, 0.05], [0.10, 0.30]],
                "0": [[0.35, 0.20], [0.15, 0.30]],
                "1": [[0.10, 0.05], [0.05, 0.10]]
            },
            "b": {
                "-1": [[0.25, 0.05], [0.10, 0.30]],
                "0": [[0.60, 0.25], [0.25, 0.60]],
                "1": [[0.10, 0.05], [0.05, 0.10]]
            }
        },
        "config": {"max_levels": 25, "epsilon": 1e-8}
    }"#;
    fs::write(dir.path().join("qbd.json"), model).unwrap();
    let out = mpoisson(&["stationary", "qbd.json", "--out", "a"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let pi_a = read_csv_column(&dir.path().join("a/pi.csv"), 3);

    // the same blocks declared gim1 use the geometric-tail route
    let gim1 = model.replace("\"qbd\"", "\"gim1\"");
    fs::write(dir.path().join("gim1.json"), gim1).unwrap();
    let out = mpoisson(&["stationary", "gim1.json", "--out", "b"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let pi_b = read_csv_column(&dir.path().join("b/pi.csv"), 3);
    // qbd goes through the level-recursion, gim1 through the geometric tail
    for (i, (x, y)) in pi_a.iter().zip(&pi_b).enumerate() {
        assert!((x - y).abs() < 1e-4, "pi[{i}]: {x} vs {y}");
    }

    let out = mpoisson(&["poisson", "gim1.json", "--out", "c"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("c/xtilde.csv").exists());

    // declaring a multi-step-up model as qbd is rejected on load
    let bad = model.replace(
        "\"1\": [[0.10, 0.05], [0.05, 0.10]]",
        "\"2\": [[0.10, 0.05], [0.05, 0.10]]",
    );
    fs::write(dir.path().join("bad_qbd.json"), bad).unwrap();
    let out = mpoisson(&["stationary", "bad_qbd.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // malformed document
    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let out = mpoisson(&["stationary", "broken.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // non-stochastic dense matrix
    let model = r#"{"kind": "dtmc-dense", "matrix": [[0.5, 0.2], [0.1, 0.9]]}"#;
    fs::write(dir.path().join("bad.json"), model).unwrap();
    let out = mpoisson(&["stationary", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // unknown builtin
    let out = mpoisson(&["stationary", "example", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // periodic two-state chain: the deviation matrix does not exist
    let model = r#"{"kind": "dtmc-dense", "matrix": [[0.0, 1.0], [1.0, 0.0]]}"#;
    fs::write(dir.path().join("periodic.json"), model).unwrap();
    let out = mpoisson(&["deviation", "periodic.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("periodic"), "stderr: {stderr}");
}

#[test]
fn ctmc_model_poisson_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{
        "kind": "ctmc-dense",
        "matrix": [[-1.0, 1.0, 0.0], [2.0, -3.0, 1.0], [0.5, 0.5, -1.0]],
        "censor_set": [0, 1]
    }"#;
    fs::write(dir.path().join("gen.json"), model).unwrap();
    let out = mpoisson(&["poisson", "gen.json", "--out", "run"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("run/xtilde.csv").exists());

    // D and K are discrete-time constructions
    let out = mpoisson(&["deviation", "gen.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = mpoisson(&["kmatrix", "gen.json", "--anchor", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = mpoisson(&["verify", "gen.json"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
