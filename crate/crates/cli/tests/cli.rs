use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn decloak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decloak")).current_dir(root()).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_twice_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = decloak(&["run", "--scenario", "scores_honest", "--seed", "1", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        traces.push(std::fs::read(out.join("scores_honest.trace.jsonl")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);

    let o = decloak(&["run", "--scenario", "scores_honest", "--seed", "2", "--out", dir.path().join("c").to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(dir.path().join("c/scores_honest.trace.jsonl")).unwrap(), traces[0]);
}

#[test]
fn check_accepts_bundled_runs_and_rejects_mutations() {
    for name in ["scores_honest", "drop_com", "withhold_input", "silent_executor", "negotiation_fails"] {
        let t = format!("fixtures/runs/{name}.trace.jsonl");
        let o = decloak(&["check", "--trace", &t]);
        assert!(o.status.success(), "{name}: {}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    }
    for check in ["correctness", "data_availability", "financial_fairness", "delivery_fairness", "delivery_atomicity", "status_machine"] {
        let t = format!("fixtures/mutated/{check}.trace.jsonl");
        let o = decloak(&["check", "--trace", &t]);
        assert_eq!(o.status.code(), Some(1), "{check}");
        let out = String::from_utf8_lossy(&o.stdout);
        let line = out.lines().find(|l| l.starts_with(check)).unwrap();
        assert!(line.contains("fail"), "{line}");
    }
}

#[test]
fn report_totals_and_custom_table() {
    let o = decloak(&["report", "--trace", "fixtures/runs/scores_honest.trace.jsonl"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 txs, 215138 gas"));

    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("gas.txt");
    std::fs::write(&table, "# doubled\ncommit = 209136\ncomplete = 221140\n").unwrap();
    let o = decloak(&["report", "--trace", "fixtures/runs/scores_honest.trace.jsonl", "--gas-table", table.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 txs, 430276 gas"));

    let o = decloak(&["report", "--trace", "fixtures/runs/withhold_input.trace.jsonl", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["proposals"][0]["total"], 211066);
}

#[test]
fn all_runs_checks_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = decloak(&["all", "-s", "scenarios/drop_com.toml", "scenarios/late_responder.toml", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("drop_com (scenarios/drop_com.toml): COMPLETED"));
    assert!(out.contains("late_responder (scenarios/late_responder.toml): ABORTED"));
    assert!(dir.path().join("late_responder.chain.json").is_file());
}

#[test]
fn missing_scenario_exits_2_naming_the_path() {
    let o = decloak(&["run", "--scenario", "no/such/file.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/file.toml"));

    let o = decloak(&["check", "--trace", "no/such/trace.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/trace.jsonl"));
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = "name = \"bad\"\nseed = 1\n\n[[actors]]\nname = \"E0\"\nrole = \"executor\"\n\n[[actors]]\nname = \"P1\"\nrole = \"party\"\n\n[[proposals]]\napp = \"scores_mean\"\ninitiator = \"P1\"\nq = 1\nh_neg = 8\ntau_com = 3\nsettlement = { min_parties = 1 }\ninputs = { P1 = 5 }\n";
    std::fs::write(&bad, text).unwrap();
    let o = decloak(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.toml:17: proposals[0].tau_com"), "{err}");

    std::fs::write(&bad, "name = \"bad\"\n[chain\n").unwrap();
    let o = decloak(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn delta_override_reaches_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = decloak(&["run", "-s", "scores_honest", "--delta", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let trace = std::fs::read_to_string(dir.path().join("scores_honest.trace.jsonl")).unwrap();
    let config: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(config["data"]["scenario"]["network"]["delta"], 1);
}
