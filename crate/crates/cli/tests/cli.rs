use std::path::Path;
use std::process::{Command, Output};

fn avgrasp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avgrasp"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_identical_records_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--no-timing", "run", "--object", "prism6x6x6", "--pose", "30", "--policy", "h3d"];
    let a = avgrasp(dir.path(), &args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let path = dir.path().join("run_prism6x6x6_30_h3d.json");
    let first = std::fs::read(&path).unwrap();
    let b = avgrasp(dir.path(), &args);
    assert!(b.status.success());
    assert_eq!(first, std::fs::read(&path).unwrap());
    let rec: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(rec["policy"], "h3d");
    assert_eq!(rec["object"], "prism6x6x6");
    assert!(stdout(&a).contains("record:"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = avgrasp(dir.path(), &["run", "--object", "prism6x6x6", "--policy", "teleport"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("teleport"));
    let object = avgrasp(dir.path(), &["run", "--object", "no_such_thing", "--policy", "bfs"]);
    assert_eq!(object.status.code(), Some(1));
    let parse = avgrasp(dir.path(), &["benchmark", "--poses", "many"]);
    assert_eq!(parse.status.code(), Some(1));
    let help = avgrasp(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn report_from_records_matches_benchmark_output() {
    let dir = tempfile::tempdir().unwrap();
    let b = avgrasp(
        dir.path(),
        &["--no-timing", "benchmark", "--objects", "ball,mug", "--policies", "random,bfs,h3d", "--poses", "2"],
    );
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let live = std::fs::read(dir.path().join("success_by_step.csv")).unwrap();
    let difficulty = std::fs::read(dir.path().join("difficulty.csv")).unwrap();
    let header = String::from_utf8_lossy(&live).lines().next().unwrap().to_string();
    assert!(header.starts_with("config_hash,seed"), "{header}");

    let again = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    let r = avgrasp(again.path(), &["report", "--records", records.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(live, std::fs::read(again.path().join("success_by_step.csv")).unwrap());
    assert_eq!(difficulty, std::fs::read(again.path().join("difficulty.csv")).unwrap());
    assert_eq!(stdout(&b), stdout(&r).replace(&again.path().display().to_string(), &dir.path().display().to_string()));

    let other = avgrasp(again.path(), &["--seed", "5", "report", "--records", records.to_str().unwrap()]);
    assert_eq!(other.status.code(), Some(1));
}

#[test]
fn compare_writes_the_travel_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = avgrasp(dir.path(), &["compare", "--objects", "ball", "--poses", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].contains("h3d") && lines[2].contains("infogain"));
}

#[test]
fn training_writes_loadable_models() {
    let dir = tempfile::tempdir().unwrap();
    let q = avgrasp(dir.path(), &["train", "qlearn", "--episodes", "3", "--objects", "prism6x6x6"]);
    assert!(q.status.success(), "{}", String::from_utf8_lossy(&q.stderr));
    let model = dir.path().join("models/qnet.model");
    assert!(model.exists());
    let curve = std::fs::read_to_string(dir.path().join("models/qnet-curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);

    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, format!("[bench.models]\nqnet = {:?}\n", model.to_str().unwrap())).unwrap();
    let run = avgrasp(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "run", "--object", "ball", "--policy", "qlearn"],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let trained_on = avgrasp(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "run", "--object", "prism6x6x6", "--policy", "qlearn"],
    );
    assert_eq!(trained_on.status.code(), Some(2));
}

#[test]
fn config_prints_toml() {
    let dir = tempfile::tempdir().unwrap();
    let o = avgrasp(dir.path(), &["config"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("[viewsphere]"));
}
