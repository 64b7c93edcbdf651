use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use refactor_core::matcore::{read_matrix_file, write_matrix_file};
use refactor_core::DenseMatrix;

fn refactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refactor")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn identity_tsvd_is_returned_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("eye.txt");
    let output = dir.path().join("out.txt");
    write_matrix_file(&input, &DenseMatrix::identity(3)).unwrap();
    let out = refactor(&[
        "denoise",
        "--input",
        path_str(&input),
        "--variant",
        "tsvd",
        "--r",
        "3",
        "--out",
        path_str(&output),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got = read_matrix_file(&output).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((got.get(i, j) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn rank_one_selection_reports_retained_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.txt");
    let output = dir.path().join("out.txt");
    // u v^T with v supported on the first two columns, plus a small bump.
    let u = [0.5, 0.5, 0.5, 0.5];
    let v = [0.8, 0.6, 0.0, 0.0];
    let y = DenseMatrix::from_fn(4, 4, |i, j| 3.0 * u[i] * v[j] + if (i, j) == (3, 3) { 0.01 } else { 0.0 });
    write_matrix_file(&input, &y).unwrap();
    let out = refactor(&[
        "denoise",
        "--input",
        path_str(&input),
        "--variant",
        "refactor",
        "--r",
        "1",
        "--t",
        "2",
        "--out",
        path_str(&output),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "retained: 1 2");
    let got = read_matrix_file(&output).unwrap();
    for i in 0..4 {
        assert_eq!(got.get(i, 2), 0.0);
        assert_eq!(got.get(i, 3), 0.0);
        assert!((got.get(i, 0) - 1.2).abs() < 1e-3);
    }
}

#[test]
fn denoise_writes_to_stdout_and_reads_commas() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    fs::write(&input, "# two by two\n2, 0\n0, 1\n").unwrap();
    let out = refactor(&["denoise", "--input", path_str(&input), "--variant", "tsvd", "--r", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got = refactor_core::matcore::read_matrix(out.stdout.as_slice()).unwrap();
    assert_eq!(got.shape(), (2, 2));
    assert!((got.get(0, 0) - 2.0).abs() < 1e-12);
    assert!(got.get(1, 1).abs() < 1e-12);
}

#[test]
fn weak_signal_precondition_is_a_usage_error() {
    let out = refactor(&["verify", "--theorem", "T1", "--x", "1", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("x > sqrt(1 + 2 sqrt(beta))"), "{msg}");
    assert!(msg.contains("1.7321"), "{msg}");
}

#[test]
fn cosine_lemma_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("cos.txt");
    let out = refactor(&["verify", "--theorem", "L_cosine", "--seeds", "20", "--out", path_str(&table)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("L_cosine: 20/20"), "{stdout}");
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 21);
}

#[test]
fn failed_conclusion_is_an_assertion_failure() {
    // With alpha = 100 the detection threshold exceeds any entry of a unit vector.
    let out = refactor(&["verify", "--theorem", "L_active", "--seeds", "5", "--alpha", "100"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("below the threshold"));
}

#[test]
fn theorem_two_grid_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    let out = refactor(&[
        "verify",
        "--theorem",
        "T2",
        "--t",
        "20",
        "--seeds",
        "4",
        "--grid",
        "100:10:4,200:20:6",
        "--grid-out",
        path_str(&grid),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&grid).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n t x bound mean_improvement mean_margin min_margin frequency");
    assert_eq!(lines.len(), 3);
}

#[test]
fn assoc_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let args = |p: &Path| {
        vec![
            "assoc".to_string(),
            "--sites".into(),
            "400".into(),
            "--active".into(),
            "40".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            path_str(p).to_string(),
        ]
    };
    for p in [&a, &b] {
        let argv = args(p);
        let out = refactor(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stderr(&out).contains("inflation:"));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("exp refactor tsvd jl\n"));
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(
        &cfg,
        "# small scan\nseed = 5\nreplicates = 2\nvalues = 10,20\nm = 30\nn = 40\nr = 1\nt = 10\n",
    )
    .unwrap();
    let run = |extra: &[&str], name: &str| {
        let out_path = dir.path().join(name);
        let mut argv = vec!["simulate", "--out", path_str(&out_path)];
        argv.extend_from_slice(extra);
        let out = refactor(&argv);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        fs::read(out_path).unwrap()
    };
    let explicit = ["--seed", "5", "--replicates", "2", "--values", "10,20", "--m", "30", "--n", "40", "--r", "1", "--t", "10"];
    let from_file = run(&["--config", path_str(&cfg)], "file.txt");
    assert_eq!(from_file, run(&explicit, "flags.txt"));

    let overridden = run(&["--config", path_str(&cfg), "--seed", "6"], "override.txt");
    let mut explicit6 = explicit;
    explicit6[1] = "6";
    assert_eq!(overridden, run(&explicit6, "flags6.txt"));
    assert_ne!(overridden, from_file);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "no-such-key = 1\n").unwrap();
    for argv in [
        vec!["simulate", "--bogus"],
        vec!["frobnicate"],
        vec!["simulate", "--threads", "0"],
        vec!["simulate", "--noise", "cauchy"],
        vec!["simulate", "--values", "40,20"],
        vec!["verify"],
        vec!["verify", "--theorem", "T9"],
        vec!["denoise", "--r", "1"],
        vec!["denoise", "--input", path_str(&missing), "--r", "1", "--t", "1"],
        vec!["simulate", "--config", path_str(&bad_cfg)],
    ] {
        let out = refactor(&argv);
        assert_eq!(out.status.code(), Some(1), "{argv:?}: {}", stderr(&out));
    }
    assert_eq!(refactor(&["--help"]).status.code(), Some(0));
    assert_eq!(refactor(&[]).status.code(), Some(1));
}
