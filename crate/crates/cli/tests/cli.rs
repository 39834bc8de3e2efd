use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use incmeter::learners::load_checkpoint;

fn incmeter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incmeter"))
        .args(args)
        .current_dir(dir)
        .env_remove("INCMETER_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, name: &str, atoms: &str, n: &str) {
    let o = incmeter(&["gen", "--atoms", atoms, "--max-formulas", "5", "--n", n, "--seed", "7", "--out", name], dir);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_writes_requested_instances_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "a.jsonl", "3", "1000");
    gen(dir.path(), "b.jsonl", "3", "1000");
    let a = fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 1000);
    assert_eq!(a, fs::read_to_string(dir.path().join("b.jsonl")).unwrap());
    assert!(dir.path().join("a.jsonl.meta.json").exists());
}

#[test]
fn seed_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "explicit.jsonl", "3", "50");
    let o = Command::new(env!("CARGO_BIN_EXE_incmeter"))
        .args(["gen", "--atoms", "3", "--max-formulas", "5", "--n", "50", "--out", "env.jsonl"])
        .current_dir(dir.path())
        .env("INCMETER_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("explicit.jsonl")).unwrap(),
        fs::read_to_string(dir.path().join("env.jsonl")).unwrap()
    );
}

#[test]
fn measure_single_contradiction() {
    let dir = tempfile::tempdir().unwrap();
    let o = incmeter(&["measure", "--kb", "a & !a"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("i_mi=1\n"), "{out}");
    assert!(out.contains("i_at=1\n"), "{out}");
}

#[test]
fn measure_accepts_repeated_and_separated_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let o = incmeter(&["measure", "--kb", "a; !a", "--kb", "!a | b", "--kb", "!b & c", "--bruteforce"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("i_mi=2\n"), "{out}");
    assert!(out.contains("bruteforce_agrees=true"), "{out}");
}

#[test]
fn malformed_formula_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = incmeter(&["measure", "--kb", "a & (b"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["gen", "--bogus"], vec!["frobnicate"], vec![], vec!["cv", "--data", "x", "--target", "mv"]] {
        let o = incmeter(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("Usage")
                || String::from_utf8_lossy(&o.stderr).contains("--help"),
            "{args:?}"
        );
    }
    assert_eq!(incmeter(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = incmeter(&["stats", "--data", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constraints_require_the_mlp() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "60");
    let o = incmeter(&["cv", "--data", "d.jsonl", "--model", "lasso", "--variant", "flags-constraints"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stats_verify_rejects_tampered_labels() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "20");
    let o = incmeter(&["stats", "--data", "d.jsonl", "--verify"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("file,instances,mi_max,"), "{out}");
    assert!(out.lines().nth(1).unwrap().starts_with("d.jsonl,20,"), "{out}");

    let path = dir.path().join("d.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    let mut row: serde_json::Value = serde_json::from_str(first).unwrap();
    row["i_mi"] = serde_json::json!(row["i_mi"].as_u64().unwrap() + 1);
    fs::write(&path, format!("{row}\n{rest}")).unwrap();
    assert_eq!(incmeter(&["stats", "--data", "d.jsonl"], dir.path()).status.code(), Some(0));
    assert_eq!(incmeter(&["stats", "--data", "d.jsonl", "--verify"], dir.path()).status.code(), Some(2));
}

#[test]
fn cv_emits_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "100");
    let o = incmeter(
        &[
            "cv",
            "--data",
            "d.jsonl",
            "--model",
            "mlp",
            "--variant",
            "flags-constraints",
            "--target",
            "at",
            "--grid",
            "reduced",
            "--max-epochs",
            "5",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("model,variant,target,fold,"));
    assert_eq!(lines.len(), 1 + 10 + 2);
    assert!(lines[1].starts_with("mlp,flags-constraints,at,0,80,10,10,"));
    assert!(lines[11].starts_with("mlp,flags-constraints,at,mean,"));
}

#[test]
fn cv_writes_to_out_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "60");
    let o = incmeter(
        &["cv", "--data", "d.jsonl", "--model", "ridge", "--folds", "3", "--target", "mi", "--out", "r.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("MAE "));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 2);
}

#[test]
fn encode_writes_matrix_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "30");
    let o = incmeter(&["encode", "--data", "d.jsonl", "--variant", "flags", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("x.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    let header = csv.lines().next().unwrap();
    assert!(header.contains("consistent"));
    assert!(header.contains("upper_bound_"));
    assert!(dir.path().join("x.csv.columns.json").exists());
}

#[test]
fn train_saves_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.jsonl", "3", "80");
    for model in ["mlp", "ridge"] {
        let o = incmeter(
            &["train", "--data", "d.jsonl", "--model", model, "--max-epochs", "5", "--out", "m.json"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("validation_mae="));
        let c = load_checkpoint(&dir.path().join("m.json")).unwrap();
        assert_eq!(c.kind, model);
        c.model().unwrap();
    }
}

#[test]
fn bench_and_scale_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = incmeter(
        &["bench", "--atoms", "3", "--max-formulas", "3,4", "--n", "30", "--max-epochs", "2", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("atoms,max_formulas,instances,solver_secs,"));
    assert_eq!(out.lines().count(), 3);

    let o = incmeter(
        &[
            "scale",
            "--atoms",
            "3",
            "--max-formulas",
            "4",
            "--sizes",
            "30,60",
            "--model",
            "ridge",
            "--variant",
            "plain,flags",
            "--folds",
            "3",
            "--grid",
            "reduced",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("size,variant,mean_mae,std_mae"));
    assert_eq!(out.lines().count(), 5);
    assert!(incmeter(&["scale", "--sizes", "60,30"], dir.path()).status.code() == Some(1));
}
