use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn omtl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omtl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, tasks: &str, len: &str, seed: &str) -> PathBuf {
    let o = omtl(
        &["synth", "--tasks", tasks, "--len", len, "--coupling", "0.8", "--seed", seed, "--out", name],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(name)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn synth_writes_expected_shape() {
    let tmp = TempDir::new().unwrap();
    let o = omtl(
        &["synth", "--tasks", "10", "--len", "400", "--coupling", "0.8", "--seed", "7", "--out", "d.csv"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("tasks: 10"));
    assert!(out.contains("points: 400"));
    assert!(out.contains("similarity range"));
    let text = fs::read_to_string(tmp.path().join("d.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 401);
    assert!(lines.iter().all(|l| l.split(',').count() == 10));
    assert!(lines[1].split(',').all(|c| c.parse::<f64>().is_ok()));
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), "a.csv", "10", "400", "7");
    let b = synth(tmp.path(), "b.csv", "10", "400", "7");
    let c = synth(tmp.path(), "c.csv", "10", "400", "8");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn synth_usage_and_io_errors() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&omtl(&["synth", "--tasks", "1", "--out", "x.csv"], tmp.path())), 2);
    assert_eq!(code(&omtl(&["synth", "--tasks", "3", "--len", "10", "--out", "x.csv"], tmp.path())), 2);
    assert_eq!(code(&omtl(&["synth", "--tasks", "3", "--coupling", "1.5", "--out", "x.csv"], tmp.path())), 2);
    let o = omtl(&["synth", "--tasks", "3", "--out", "missing/dir/x.csv"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cannot write"));
}

#[test]
fn persistence_scores_one() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "4", "200", "1");
    let o = omtl(
        &["run", "--data", "d.csv", "--method", "persistence", "--mu", "0.275", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&tmp.path().join("r"));
    let per_task = r["report"]["run"]["per_task"].as_array().unwrap();
    assert_eq!(per_task.len(), 4);
    for m in per_task {
        assert_eq!(m["relrmse"].as_f64(), Some(1.0));
        assert_eq!(m["relmae"].as_f64(), Some(1.0));
    }
}

#[test]
fn run_writes_report_traces_and_manifest() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "3", "150", "2");
    let o = omtl(&["run", "--data", "d.csv", "--method", "mt-wrls", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("r");
    let r = report(&dir);
    let params = &r["report"]["run"]["params"];
    let sigma = params["sigma"].as_f64().unwrap();
    let lambda = params["lambda"].as_f64().unwrap();
    assert!([0.01, 0.2, 0.4, 0.6, 0.8, 1.0].contains(&sigma));
    assert!([1e-10, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e10].contains(&lambda));
    assert!(params.get("nu").is_none());
    assert_eq!(r["config"]["methods"][0], "mt-wrls");
    assert_eq!(r["config"]["pipeline"]["mu"].as_f64(), Some(0.275));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(files.contains(&"report.json"));
    assert!(files.contains(&"resolved_config.toml"));
    assert_eq!(files.iter().filter(|f| f.starts_with("traces/")).count(), 3);
    assert!(files.iter().all(|f| dir.join(f).is_file()));

    let test_steps = r["report"]["test_steps"].as_u64().unwrap() as usize;
    let trace = fs::read_to_string(dir.join("traces/task_00.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("step,actual,predicted"));
    assert_eq!(lines.count(), test_steps);
}

#[test]
fn embedded_config_reproduces_metrics() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "3", "150", "3");
    let first = omtl(&["run", "--data", "d.csv", "--method", "wrls", "--gamma", "0.5", "--out", "a"], tmp.path());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let again = omtl(&["run", "--config", "a/resolved_config.toml", "--out", "b"], tmp.path());
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    let (mut a, mut b) = (report(&tmp.path().join("a")), report(&tmp.path().join("b")));
    assert_eq!(b["config"]["pipeline"]["gamma"].as_f64(), Some(0.5));
    a["config"]["out"] = Value::Null;
    b["config"]["out"] = Value::Null;
    assert_eq!(a, b);
    assert_eq!(
        fs::read(tmp.path().join("a/traces/task_01.csv")).unwrap(),
        fs::read(tmp.path().join("b/traces/task_01.csv")).unwrap()
    );
}

#[test]
fn oracle_check_matches_batch_solve() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "4", "200", "5");
    let o = omtl(
        &["run", "--data", "d.csv", "--method", "mt-wrls", "--mu", "0.275", "--oracle-check", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle check: max deviation"));
    let c = &report(&tmp.path().join("r"))["oracle_check"];
    assert_eq!(c["steps"].as_u64(), Some(60));
    assert_eq!(c["skipped"].as_u64(), Some(0));
    assert!(c["max_deviation"].as_f64().unwrap() <= 1e-7, "{c}");

    let o = omtl(&["run", "--data", "d.csv", "--method", "wrls", "--oracle-check", "--out", "s"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn run_error_codes() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "3", "120", "4");
    let o = omtl(&["run", "--data", "d.csv", "--method", "bogus", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mt-oslssvr"));
    assert_eq!(code(&omtl(&["run", "--data", "d.csv", "--method", "wrls"], tmp.path())), 2);
    assert_eq!(code(&omtl(&["run", "--data", "d.csv", "--method", "wrls", "--mu", "1.2", "--out", "r"], tmp.path())), 2);
    assert_eq!(code(&omtl(&["run", "--data", "nope.csv", "--method", "wrls", "--out", "r"], tmp.path())), 1);

    fs::write(tmp.path().join("typo.toml"), "methdo = \"wrls\"\n").unwrap();
    let o = omtl(&["run", "--config", "typo.toml", "--data", "d.csv", "--method", "wrls", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 2);

    fs::write(tmp.path().join("bad.csv"), "a,b\n1,2\n3,x\n").unwrap();
    let o = omtl(&["run", "--data", "bad.csv", "--method", "wrls", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn divergence_reports_step_and_exits_one() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "3", "120", "6");
    fs::write(tmp.path().join("c.toml"), "[grids]\neta0 = [1e6]\nlambda = [1e4]\n").unwrap();
    let o = omtl(
        &["run", "--config", "c.toml", "--data", "d.csv", "--method", "mogd", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("step "), "{err}");
    assert!(err.contains("numerical breakdown"), "{err}");
}

#[test]
fn compare_identical_methods_tie() {
    let tmp = TempDir::new().unwrap();
    let o = omtl(
        &[
            "compare", "--synth-seeds", "1,2,3", "--synth-tasks", "3", "--synth-len", "120", "--methods",
            "persistence,persistence", "--out", "c",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&tmp.path().join("c"));
    assert_eq!(r["comparison"]["friedman"]["statistic"].as_f64(), Some(0.0));
    assert!(r["comparison"]["friedman"]["victories"].as_array().unwrap().iter().all(|v| v == 0));
    let summary = fs::read_to_string(tmp.path().join("c/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("method,RELRMSE,RELMAE,mean_rank,victories,defeats"));
    assert_eq!(lines.next(), Some("persistence,1.0000,1.0000,1.50,0,0"));
}

#[test]
fn compare_mixes_files_and_synth() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), "d.csv", "3", "150", "9");
    let o = omtl(
        &[
            "compare", "--data", "d.csv", "--synth-seeds", "4", "--synth-tasks", "3", "--synth-len", "150",
            "--methods", "wrls,persistence", "--out", "c",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("Friedman statistic"));
    let r = report(&tmp.path().join("c"));
    let datasets = r["comparison"]["datasets"].as_array().unwrap();
    assert_eq!(datasets.len(), 2);
    assert_eq!(datasets[0], "d.csv");
    assert_eq!(r["comparison"]["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn compare_needs_two_of_each() {
    let tmp = TempDir::new().unwrap();
    let one_method = omtl(
        &["compare", "--synth-seeds", "1,2", "--synth-tasks", "3", "--synth-len", "120", "--methods", "wrls", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&one_method), 2);
    let one_dataset = omtl(
        &["compare", "--synth-seeds", "1", "--synth-tasks", "3", "--synth-len", "120", "--methods", "wrls,mogd", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&one_dataset), 2);
    let bad_synth = omtl(
        &["compare", "--synth-seeds", "1,2", "--synth-tasks", "1", "--methods", "wrls,mogd", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&bad_synth), 2);
}
