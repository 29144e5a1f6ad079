use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/Fixture.csv")
}

fn qtrade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtrade")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn common<'a>(data: &'a str, out_dir: &'a str) -> Vec<&'a str> {
    vec!["--data", data, "--company", "Fixture", "--out-dir", out_dir]
}

#[test]
fn evaluate_is_byte_identical_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let data = data.to_str().unwrap();
    let mut files = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out_dir = dir.path().join(name);
        let mut args = vec!["evaluate", "--n-runs", "6", "--seed", "11", "--jobs", jobs];
        args.extend(common(data, out_dir.to_str().unwrap()));
        let out = qtrade(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        files.push((
            fs::read(out_dir.join("results_Fixture.csv")).unwrap(),
            fs::read(out_dir.join("histogram_Fixture.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let text = String::from_utf8(files[0].0.clone()).unwrap();
    let agents: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(agents, ["Baseline", "Q-Learning", "Approximate Linear", "Deep Q-Learning"]);
}

#[test]
fn single_run_leaves_interval_fields_empty() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let out_dir = dir.path().to_str().unwrap();
    let mut args = vec!["evaluate", "--n-runs", "1"];
    args.extend(common(data.to_str().unwrap(), out_dir));
    assert_eq!(code(&qtrade(&args)), 0);
    let text = fs::read_to_string(dir.path().join("results_Fixture.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert!(fields[2].is_empty() && fields[3].is_empty() && fields[4].is_empty(), "{line}");
    }
}

#[test]
fn train_writes_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    for agent in ["q", "linear", "deep"] {
        let mut outputs = Vec::new();
        for run in ["1", "2"] {
            let out_dir = dir.path().join(format!("{agent}{run}"));
            let mut args = vec!["train", agent, "--h", "2", "--epochs", "5", "--seed", "7"];
            args.extend(common(data.to_str().unwrap(), out_dir.to_str().unwrap()));
            let out = qtrade(&args);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            let mut names: Vec<PathBuf> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
            names.sort();
            assert_eq!(names.len(), 2);
            outputs.push(names.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>());
        }
        assert_eq!(outputs[0], outputs[1], "{agent}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(code(&qtrade(&["train", "foo"])), 1);
    assert_eq!(code(&qtrade(&["evaluate", "--gamma", "2"])), 1);
    assert_eq!(code(&qtrade(&["evaluate", "--bogus"])), 1);
    assert_eq!(code(&qtrade(&["--help"])), 0);
    let out = qtrade(&["predict", "--data", "/no/such/file.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.csv"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "Date,Open,High,Low,Close\n2005-01-04,1,1,1,1\n2005-01-03,1,1,1,1\n").unwrap();
    let out = qtrade(&["predict", "--data", bad.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn company_selects_file_in_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixture(), dir.path().join("Microsoft.csv")).unwrap();
    let out_dir = dir.path().join("out");
    let out = qtrade(&[
        "predict",
        "--company",
        "Microsoft",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(out_dir.join("prediction_Microsoft.csv")).unwrap();
    let rows: Vec<&str> = report.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["algorithm", "ols", "persistence", "logistic"]);
    let preds = fs::read_to_string(out_dir.join("predictions_Microsoft.csv")).unwrap();
    assert!(preds.starts_with("date,actual,predicted,correct\n"));
}

#[test]
fn tol_only_moves_price_accuracy_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let read = |tol: &str| {
        let out_dir = dir.path().join(tol);
        let mut args = vec!["predict", "--tol", tol];
        args.extend(common(data.to_str().unwrap(), out_dir.to_str().unwrap()));
        assert_eq!(code(&qtrade(&args)), 0);
        fs::read_to_string(out_dir.join("prediction_Fixture.csv")).unwrap()
    };
    let (a, b) = (read("0.02"), read("0.05"));
    let lines = |s: &str| s.lines().map(String::from).collect::<Vec<_>>();
    let (a, b) = (lines(&a), lines(&b));
    assert_ne!(a[1], b[1]);
    assert_eq!(a[3], b[3]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("company=Fixture\ndata={}\nn-runs=2\nseed=1\n", fixture().display())).unwrap();
    let run = |extra: &[&str], name: &str| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["evaluate", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(code(&qtrade(&args)), 0);
        fs::read(out_dir.join("results_Fixture.csv")).unwrap()
    };
    let from_file = run(&[], "file");
    let same_seed = run(&["--seed", "1"], "same");
    let other_seed = run(&["--seed", "2"], "other");
    assert_eq!(from_file, same_seed);
    assert_ne!(from_file, other_seed);
}

#[test]
fn help_lists_every_setting() {
    let out = qtrade(&["evaluate", "--help"]);
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--w ", "--h ", "--alpha", "--gamma", "--epsilon-floor", "--lambda", "--n-hidden-layers", "--jobs", "--tol"] {
        assert!(help.contains(flag), "{flag}");
    }
    assert!(help.contains("[default: 0.95; in [0, 1]]"));
}
