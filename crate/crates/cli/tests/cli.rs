use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopiss"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn stage_chain_reproduces_the_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("chain"), tmp.path().join("full"));
    let cfg = config("linear.toml");
    assert!(run(&["simulate", "-c", s(&cfg), "-o", s(&a)]).status.success());
    let model = a.join("model.json");
    let out = run(&["identify", "-c", s(&cfg), "-d", s(&a.join("dataset.csv")), "-o", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = a.join("certificate.json");
    let out = run(&["verify", "-m", s(&model), "-c", s(&cfg), "-o", s(&cert)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ISS: verified");

    let out = run(&["run", "-c", s(&cfg), "-o", s(&b)]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["dataset.csv", "truth_1.csv", "truth_3.csv", "model.json", "certificate.json"] {
        assert_eq!(bytes(&a.join(f)), bytes(&b.join(f)), "{f} differs");
    }
}

#[test]
fn unstable_model_is_reported_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["run", "-c", s(&config("unstable_scalar.toml")), "-o", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let model = tmp.path().join("model.json");
    let out = run(&["verify", "-m", s(&model), "-o", s(&tmp.path().join("again.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ISS: not verified (infeasible)");
}

#[test]
fn report_regenerates_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(run(&["run", "-c", s(&config("linear.toml")), "-o", s(dir)]).status.success());
    let files = ["plot_1.csv", "plot_2.csv", "report.txt", "report.json"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| bytes(&dir.join(f))).collect();
    for f in ["plot_1.csv", "report.txt"] {
        std::fs::remove_file(dir.join(f)).unwrap();
    }
    for _ in 0..2 {
        let out = run(&["report", "-r", s(dir)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let after: Vec<Vec<u8>> = files.iter().map(|f| bytes(&dir.join(f))).collect();
        assert_eq!(before, after);
    }
}

#[test]
fn missing_input_names_the_producing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["verify", "-m", s(&tmp.path().join("nope.json")), "-o", s(&tmp.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FAILED_AT: verify"), "{err}");
    assert!(err.contains("`identify`"), "{err}");

    let out = run(&["report", "-r", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED_AT: report"));
}

#[test]
fn invalid_configuration_fails_before_any_computation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[system]\nkind = \"linear\"\na = [[-1.0, 0.0], [0.0, -1.0]]\nd = [[1.0]]\n[dictionary]\nblocks = [\"identity\"]\n",
    )
    .unwrap();
    let out = run(&["run", "-c", s(&cfg), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FAILED_AT: config"), "{err}");
    assert!(!tmp.path().join("out").join("dataset.csv").exists());
}

#[test]
fn numbers_use_a_dot_decimal_separator() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "-c", s(&config("linear.toml")), "-o", s(tmp.path())])
        .env("LC_ALL", "de_DE.UTF-8")
        .env("LC_NUMERIC", "de_DE.UTF-8")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("plot_1.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row.split(',').count(), 5);
    assert!(row.split(',').all(|v| v.parse::<f64>().is_ok()), "{row}");
}
