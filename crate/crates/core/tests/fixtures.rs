//! Bundled traces under `fixtures/`: runs of the scripted scenarios, which every checker
//! must accept, and one mutation per checker, which that checker must reject.
//! `DECLOAK_BLESS=1 cargo test --test fixtures` rewrites them.

use std::path::{Path, PathBuf};

use decloak::harness::{check_all, mutate, Evidence, CHECKS};
use decloak::network::{run, Scenario};

const RUNS: [&str; 5] = ["scores_honest", "drop_com", "withhold_input", "silent_executor", "negotiation_fails"];

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn paths(dir: &str, name: &str) -> (PathBuf, PathBuf) {
    let d = root().join("fixtures").join(dir);
    (d.join(format!("{name}.trace.jsonl")), d.join(format!("{name}.chain.json")))
}

fn simulate(name: &str) -> Evidence {
    let text = std::fs::read_to_string(root().join("scenarios").join(format!("{name}.toml"))).unwrap();
    Evidence::from_run(&run(&Scenario::from_toml_str(&text).unwrap()))
}

/// The run each mutation starts from.
fn source_of(check: &str) -> &'static str {
    match check {
        "financial_fairness" | "delivery_atomicity" => "withhold_input",
        _ => "scores_honest",
    }
}

fn bless() {
    for dir in ["runs", "mutated"] {
        std::fs::create_dir_all(root().join("fixtures").join(dir)).unwrap();
    }
    for name in RUNS {
        let (t, c) = paths("runs", name);
        simulate(name).save(&t, &c).unwrap();
    }
    for check in CHECKS {
        let m = mutate::for_check(check, &simulate(source_of(check))).expect("mutation applies");
        let (t, c) = paths("mutated", check);
        m.save(&t, &c).unwrap();
    }
}

#[test]
fn bundled_runs_pass_and_mutations_fail_their_checker() {
    if std::env::var_os("DECLOAK_BLESS").is_some() {
        bless();
    }
    for name in RUNS {
        let (t, c) = paths("runs", name);
        let report = check_all(&Evidence::load(&t, &c).unwrap(), None);
        assert!(report.passed(), "{name}:\n{}", report.to_text());
    }
    for check in CHECKS {
        let (t, c) = paths("mutated", check);
        let report = check_all(&Evidence::load(&t, &c).unwrap(), None);
        let v = report.get(check).unwrap();
        assert!(v.is_fail(), "{check} accepted its mutation:\n{}", report.to_text());
    }
}

#[test]
fn bundled_runs_replay_byte_for_byte() {
    for name in RUNS {
        let (t, c) = paths("runs", name);
        let fresh = simulate(name);
        assert_eq!(fresh.trace.to_jsonl(), std::fs::read_to_string(&t).unwrap(), "{name} trace drifted");
        assert_eq!(serde_json::to_string(&fresh.blocks).unwrap(), std::fs::read_to_string(&c).unwrap(), "{name} chain drifted");
    }
}
