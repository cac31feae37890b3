use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn covertime(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covertime"))
        .args(args)
        .current_dir(dir)
        .env_remove("COVERTIME_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = covertime(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr carries error JSON")
}

#[test]
fn optimal_on_three_path_prints_two() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "graph", "--shape", "path", "--n", "3", "--out", "p.json"], dir.path());
    let stdout = ok(
        &["plan", "optimal", "--instance", "p.json", "--targets", "0,1,2", "--start", "0", "--out", "sol.json"],
        dir.path(),
    );
    assert_eq!(stdout.trim(), "2");
    let sol: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sol.json")).unwrap()).unwrap();
    assert_eq!(sol["schema"], 1);
    assert_eq!(sol["expected_cover_time"], 2.0);
    assert!(sol["policy"].as_array().is_some_and(|p| !p.is_empty()));
}

#[test]
fn gridworld_heuristic_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(
        &["gen", "grid", "--w", "6", "--h", "6", "--seed", "7", "--targets", "5", "--out", "g.json"],
        dir.path(),
    );
    let summary: Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["schema"], 1);
    std::fs::write(dir.path().join("mission.json"), summary.to_string()).unwrap();
    let args = [
        "plan", "heur", "--instance", "g.json", "--targets-file", "mission.json", "--gamma", "0.4", "--seed", "3",
        "--record", "run.jsonl",
    ];
    let cover: u64 = ok(&args, dir.path()).trim().parse().expect("integer cover time");
    assert!(cover > 0);
    let csv = ok(
        &["path-dump", "--record", "run.jsonl", "--instance", "g.json", "--out", "path.csv"],
        dir.path(),
    );
    assert!(csv.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,state,x,y");
    assert_eq!(lines.len() as u64, cover + 2);
    assert_eq!(lines[1], "0,0,0,0");
}

#[test]
fn clustered_partition_recovers_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(
        &[
            "gen", "clustered", "--m", "3", "--n", "4", "--wc", "1", "--wl", "26", "--seed", "2", "--require-optimal",
            "--out", "c.json",
        ],
        dir.path(),
    );
    std::fs::write(dir.path().join("mission.json"), &summary).unwrap();
    let summary: Value = serde_json::from_str(&summary).unwrap();
    let out = ok(
        &["partition", "heur", "--instance", "c.json", "--targets-file", "mission.json", "--agents", "3"],
        dir.path(),
    );
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["schema"], 1);
    let mut parts: Vec<Vec<u64>> = serde_json::from_value(doc["parts"].clone()).unwrap();
    let mut clusters: Vec<Vec<u64>> = serde_json::from_value(summary["clusters"].clone()).unwrap();
    parts.iter_mut().for_each(|p| p.sort_unstable());
    parts.sort();
    clusters.sort();
    assert_eq!(parts, clusters);
}

#[test]
fn generated_instances_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["graph", "mdp", "grid"] {
        ok(&["gen", kind, "--seed", "11", "--out", "a.json"], dir.path());
        ok(&["gen", kind, "--seed", "11", "--out", "b.json"], dir.path());
        let a = std::fs::read(dir.path().join("a.json")).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap(), "{kind}");
    }
    ok(&["gen", "graph", "--seed", "11", "--out", "g.json"], dir.path());
    let batch = |seed: &str| {
        let csv = ok(
            &["plan", "nn", "--instance", "g.json", "--targets", "3,7,12", "--runs", "40", "--seed", seed],
            dir.path(),
        );
        let row = csv.lines().nth(1).unwrap().to_string();
        // every column except the wall-clock runtime
        row.rsplit_once(',').unwrap().0.to_string()
    };
    assert_eq!(batch("5"), batch("5"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = covertime(&["plan", "optimal"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["schema"], 1);

    std::fs::write(dir.path().join("bad.json"), r#"{"n_states":2,"n_actions":1,"transitions":[]}"#).unwrap();
    let out = covertime(&["plan", "optimal", "--instance", "bad.json", "--targets", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_instance");

    ok(&["gen", "graph", "--shape", "complete", "--n", "12", "--out", "k.json"], dir.path());
    let all = "0,1,2,3,4,5,6,7,8,9,10,11";
    let out = covertime(&["partition", "brute", "--instance", "k.json", "--targets", all, "--agents", "2"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "cap_exceeded");

    let out = covertime(&["plan", "optimal", "--instance", "k.json", "--targets", "40"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_covertime"))
        .args(["plan", "optimal", "--instance", "k.json", "--targets", "1"])
        .current_dir(dir.path())
        .env("COVERTIME_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bench", "tableI", "--seeds", "1", "--runs", "20", "--out", "t1.csv"], dir.path());
    let csv = std::fs::read_to_string(dir.path().join("t1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "instance_id,algorithm,n_states,n_targets,m,runs,mean_cover,var_cover,mean_runtime_sec"
    );
    let algorithms: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(algorithms, ["optimal", "heuristic", "nearest_neighbor"]);
    assert!(!csv.contains('\r'));
}
