use std::path::Path;
use std::process::Command;

fn bida(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bida")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn oracle_check_passes() {
    let (code, stdout, _) = bida(&["oracle-check"]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": {"lane_count": 0}}"#);
    let out = dir.path().join("out").display().to_string();
    let (code, _, err) = bida(&["evaluate", "--config", &cfg, "--agent", "rule", "--out", &out]);
    assert_eq!(code, 1, "{err}");
    let (code, _, _) = bida(&["evaluate", "--config", "/nonexistent.json", "--agent", "rule", "--out", &out]);
    assert_eq!(code, 1);
}

#[test]
fn network_agent_without_checkpoints_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"episodes": 1}"#);
    let out = dir.path().join("out").display().to_string();
    let (code, _, _) = bida(&["evaluate", "--config", &cfg, "--agent", "bida", "--out", &out]);
    assert_eq!(code, 1);
}

#[test]
fn malformed_trace_is_a_runtime_failure_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.jsonl");
    std::fs::write(&trace, "\n\n{oops\n").unwrap();
    let (code, _, err) = bida(&["replay", "--trace", &trace.display().to_string()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn evaluate_compare_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"episodes": 2, "scenario": {"sv_count": 5}}"#);
    let out = dir.path().join("rule");
    let out_s = out.display().to_string();
    let (code, stdout, err) = bida(&["evaluate", "--config", &cfg, "--agent", "rule", "--out", &out_s]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("RuleBased on 5 SVs: 2 episodes"));
    let table = dir.path().join("table.csv").display().to_string();
    let (code, _, _) = bida(&["compare", "--inputs", &out_s, "--out", &table]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read_to_string(&table).unwrap(),
        std::fs::read_to_string(out.join("summary.csv")).unwrap()
    );
    let trace = out.join("traces/episode_0001.jsonl").display().to_string();
    let (code, text, _) = bida(&["replay", "--trace", &trace]);
    assert_eq!(code, 0);
    assert!(text.contains("episode 1 decision 0"));
}

#[test]
fn default_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["highway.json", "t_intersection.json"] {
        let c = bida_bench::config::ExperimentConfig::load(&root.join(name)).unwrap();
        assert_eq!(c.episodes, 50);
    }
}
