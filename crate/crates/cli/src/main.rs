use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decloak::harness::{check_all, gas_report, CheckReport, Evidence, GasReport, GasTable};
use decloak::network::{self, Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "decloak", version, about = "Run, check and cost simulated multi-party transactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute scenarios and write their traces and chain dumps
    Run(RunArgs),
    /// Run every checker over a recorded trace
    Check(TraceArgs),
    /// Print the gas report of a recorded run
    Report(TraceArgs),
    /// run, check and report in one go
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of one under scenarios/. Repeat to run several in parallel.
    #[arg(long, short, required = true, num_args = 1..)]
    scenario: Vec<String>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the network delay bound
    #[arg(long)]
    delta: Option<u64>,
    /// Output directory
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Gas table file (`function = gas` per line); defaults to the built-in table
    #[arg(long)]
    gas_table: Option<PathBuf>,
    /// Print reports as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file written by `run`
    #[arg(long, short)]
    trace: PathBuf,
    /// Chain dump; defaults to the `.chain.json` next to the trace
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Delay bound for the delivery fairness check; defaults to the scenario's
    #[arg(long)]
    delta: Option<u64>,
    /// Gas table file; defaults to the built-in table
    #[arg(long)]
    gas_table: Option<PathBuf>,
    /// Print reports as JSON
    #[arg(long)]
    json: bool,
}

/// Exit status plus message.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_all(&a, false),
        Command::All(a) => run_all(&a, true),
        Command::Check(a) => check(&a),
        Command::Report(a) => report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn resolve(name: &str) -> Option<PathBuf> {
    [PathBuf::from(name), PathBuf::from(format!("{name}.toml")), Path::new("scenarios").join(format!("{name}.toml"))]
        .into_iter()
        .find(|p| p.is_file())
}

/// 1-based line of a dotted config path such as `proposals[1].tau_com`.
fn locate(text: &str, path: &str) -> Option<usize> {
    let lines: Vec<&str> = text.lines().collect();
    let mut segs = path.split('.').peekable();
    let first = segs.next()?;
    let (table, nth) = match first.split_once('[') {
        Some((t, rest)) => (t, rest.trim_end_matches(']').parse::<usize>().ok()?),
        None => (first, 0),
    };
    let header = |l: &str| {
        let l = l.trim();
        l == format!("[[{table}]]") || l == format!("[{table}]") || l.starts_with(&format!("[{table}."))
    };
    let start = lines.iter().enumerate().filter(|(_, l)| header(l)).nth(nth).map(|(i, _)| i);
    let Some(start) = start else {
        let key = format!("{table} ");
        return lines.iter().position(|l| l.trim_start().starts_with(&key) || l.trim_start().starts_with(&format!("{table}="))).map(|i| i + 1);
    };
    let Some(key) = segs.last() else { return Some(start + 1) };
    let key = key.split('[').next().unwrap_or(key);
    let end = lines[start + 1..].iter().position(|l| l.trim_start().starts_with("[[")).map_or(lines.len(), |p| start + 1 + p);
    let found = lines[start..end].iter().position(|l| {
        let l = l.trim_start();
        l.starts_with(&format!("{key} ")) || l.starts_with(&format!("{key}=")) || l.contains(&format!(" {key} =")) || l.contains(&format!("{{ {key} "))
    });
    Some(start + found.unwrap_or(0) + 1)
}

fn load_scenario(name: &str, seed: Option<u64>, delta: Option<u64>) -> Result<(PathBuf, Scenario), Failure> {
    let path = resolve(name).ok_or_else(|| Failure(2, format!("scenario file not found: {name}")))?;
    let text = std::fs::read_to_string(&path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    let shown = path.display();
    let mut sc = match Scenario::from_toml_str(&text) {
        Ok(sc) => sc,
        Err(ScenarioError::Parse(msg)) => return Err(Failure(2, format!("{shown}: {msg}"))),
        Err(ScenarioError::Invalid(errs)) => {
            let lines: Vec<String> = errs
                .iter()
                .map(|e| match locate(&text, &e.path) {
                    Some(n) => format!("{shown}:{n}: {e}\n    {n} | {}", text.lines().nth(n - 1).unwrap_or("").trim_end()),
                    None => format!("{shown}: {e}"),
                })
                .collect();
            return Err(Failure(2, format!("invalid scenario\n{}", lines.join("\n"))));
        }
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(d) = delta {
        sc.network.delta = d;
    }
    if let Err(errs) = sc.validate() {
        let msg: Vec<String> = errs.iter().map(|e| format!("{shown}: {e} (after overrides)")).collect();
        return Err(Failure(2, msg.join("\n")));
    }
    Ok((path, sc))
}

fn gas_table(path: Option<&Path>) -> Result<GasTable, Failure> {
    match path {
        None => Ok(GasTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?;
            GasTable::parse(&text).map_err(|e| Failure(2, format!("{}: {e}", p.display())))
        }
    }
}

fn outputs(out: &Path, name: &str) -> (PathBuf, PathBuf) {
    (out.join(format!("{name}.trace.jsonl")), out.join(format!("{name}.chain.json")))
}

fn print_check(report: &CheckReport, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
    } else {
        print!("{}", report.to_text());
    }
}

fn print_gas(report: &GasReport, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
    } else {
        print!("{}", report.to_text());
    }
}

fn run_all(a: &RunArgs, full: bool) -> Result<(), Failure> {
    let scenarios = a
        .scenario
        .iter()
        .map(|s| load_scenario(s, a.seed, a.delta))
        .collect::<Result<Vec<_>, _>>()?;
    let table = gas_table(a.gas_table.as_deref())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure(1, format!("{}: {e}", a.out.display())))?;
    let runs: Vec<Evidence> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|(_, sc)| s.spawn(move || Evidence::from_run(&network::run(sc)))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    });
    let mut failed = Vec::new();
    for ((path, sc), ev) in scenarios.iter().zip(&runs) {
        let (trace, chain) = outputs(&a.out, &sc.name);
        ev.save(&trace, &chain)?;
        let statuses: Vec<&str> =
            (0..sc.proposals.len()).map(|i| ev.final_status(i).map_or("NONE", |s| s.as_str())).collect();
        println!("{} ({}): {} -> {}", sc.name, path.display(), statuses.join(", "), trace.display());
        if full {
            let report = check_all(ev, a.delta);
            print_check(&report, a.json);
            print_gas(&gas_report(&ev.blocks, &table, |ad| ev.name_of(ad)), a.json);
            if !report.passed() {
                failed.push(sc.name.clone());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure(1, format!("checks failed: {}", failed.join(", "))))
    }
}

fn load_trace(a: &TraceArgs) -> Result<Evidence, Failure> {
    let chain = a.chain.clone().unwrap_or_else(|| {
        let name = a.trace.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let stem = name.strip_suffix(".trace.jsonl").unwrap_or(name);
        a.trace.with_file_name(format!("{stem}.chain.json"))
    });
    for p in [&a.trace, &chain] {
        if !p.is_file() {
            return Err(Failure(2, format!("file not found: {}", p.display())));
        }
    }
    Ok(Evidence::load(&a.trace, &chain)?)
}

fn check(a: &TraceArgs) -> Result<(), Failure> {
    let ev = load_trace(a)?;
    let report = check_all(&ev, a.delta);
    print_check(&report, a.json);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure(1, format!("{}: checks failed", a.trace.display())))
    }
}

fn report(a: &TraceArgs) -> Result<(), Failure> {
    let ev = load_trace(a)?;
    let table = gas_table(a.gas_table.as_deref())?;
    print_gas(&gas_report(&ev.blocks, &table, |ad| ev.name_of(ad)), a.json);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::locate;

    #[test]
    fn locates_config_paths() {
        let text = "name = \"x\"\n\n[chain]\nblock_ticks = 0\n\n[[proposals]]\nq = 1\n\n[[proposals]]\napp = \"a\"\ntau_com = 3\n";
        assert_eq!(locate(text, "chain.block_ticks"), Some(4));
        assert_eq!(locate(text, "proposals[1].tau_com"), Some(11));
        assert_eq!(locate(text, "proposals[1]"), Some(9));
        assert_eq!(locate(text, "name"), Some(1));
    }
}
