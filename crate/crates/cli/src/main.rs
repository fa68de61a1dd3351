//! `phalanx`: run ordering experiments, sweeps and trace comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use phalanx::golden;
use phalanx::simnet::{run, Scenario, SweepRow, SweepSpec};
use phalanx::trace::{first_divergence, Trace};
use phalanx::Strategy;

/// Exit codes.
const TRACES_DIFFER: u8 = 1;
const CONFIG_PARSE: u8 = 2;
const CONSISTENCY_VIOLATION: u8 = 3;
const NON_QUIESCENT: u8 = 4;

const SWEEP_CSV_VERSION: &str = "v1";

#[derive(Parser)]
#[command(name = "phalanx", version, about = "Anchor-based Byzantine ordered consensus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes result.json and one trace file per node.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Output directory.
        #[arg(long, default_value = "phalanx-out")]
        out: PathBuf,
    },
    /// Run a parameter sweep; writes one CSV row per point and repetition.
    Sweep {
        sweep: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this strategy instead of the listed ones.
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        reps: Option<u64>,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two committed-order traces; exit 1 if they differ.
    DiffTraces { a: PathBuf, b: PathBuf },
    /// Run the built-in micro-scenarios; exit 1 on an unexpected outcome.
    Golden {
        /// Directory for the timestamp-manipulation traces.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", path.display())))
}

fn cmd_run(path: &Path, seed: Option<u64>, strategy: Option<Strategy>, out: &Path) -> Result<(), Failure> {
    let mut scenario = Scenario::parse(&read(path)?).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(s) = strategy {
        scenario.strategy = s;
    }
    info!("running {} nodes, strategy {}, seed {}", scenario.n, scenario.strategy, scenario.seed);
    let result = run(&scenario).map_err(|e| fail(CONFIG_PARSE, e.to_string()))?;

    fs::create_dir_all(out).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", out.display())))?;
    write(&out.join("result.json"), &(result.to_json() + "\n"))?;
    for t in &result.full_traces {
        let p = out.join(format!("trace-{}.txt", t.node));
        t.write(&p).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", p.display())))?;
    }
    println!(
        "strategy={} reordered_ratio={} alter_path_ratio={} committed={} uncommitted={} consistency={} quiescent={}",
        result.strategy,
        result.reordered_ratio,
        result.alter_path_ratio,
        result.committed,
        result.uncommitted,
        result.consistency,
        result.quiescent
    );
    if result.consistency_violated() {
        return Err(fail(CONSISTENCY_VIOLATION, "honest traces diverge"));
    }
    if !result.quiescent {
        return Err(fail(NON_QUIESCENT, "run stopped before quiescence"));
    }
    Ok(())
}

fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let field = spec.field.name();
    let header = [
        field,
        "strategy",
        "rep",
        "seed",
        "reordered_ratio",
        "alter_path_ratio",
        "consistency",
        "uncommitted",
        "quiescent",
        "resisted",
    ];
    let io = |e: csv::Error| fail(CONFIG_PARSE, e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.strategy.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.reordered_ratio.to_string(),
            r.alter_path_ratio.to_string(),
            r.consistency.to_string(),
            r.uncommitted.to_string(),
            r.quiescent.to_string(),
            r.resisted.to_string(),
        ])
        .map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| fail(CONFIG_PARSE, e.to_string()))?;
    Ok(format!(
        "# phalanx-sweep {SWEEP_CSV_VERSION} field={field}\n{}",
        String::from_utf8(body).expect("csv of ascii fields")
    ))
}

fn cmd_sweep(
    path: &Path,
    seed: Option<u64>,
    strategy: Option<Strategy>,
    reps: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut spec = SweepSpec::parse(&read(path)?).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    if let Some(s) = strategy {
        spec.strategies = vec![s];
    }
    if let Some(r) = reps {
        if r == 0 {
            return Err(fail(CONFIG_PARSE, "--reps must be positive"));
        }
        spec.reps = r;
    }
    info!(
        "sweeping {} over {:?}, {} strategies, {} reps",
        spec.field.name(),
        spec.values,
        spec.strategies.len(),
        spec.reps
    );
    let rows = spec.run().map_err(|e| fail(CONFIG_PARSE, e.to_string()))?;
    let csv = sweep_csv(&spec, &rows)?;
    match out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if rows.iter().any(|r| !r.consistency && spec.scenario(r.value, r.strategy, r.rep).is_ok_and(|s| s.byzantine.len() <= s.f)) {
        return Err(fail(CONSISTENCY_VIOLATION, "honest traces diverge in at least one run"));
    }
    if rows.iter().any(|r| !r.quiescent) {
        return Err(fail(NON_QUIESCENT, "at least one run stopped before quiescence"));
    }
    Ok(())
}

fn cmd_diff(a: &Path, b: &Path) -> Result<(), Failure> {
    let load = |p: &Path| Trace::read(p).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", p.display())));
    let (ta, tb) = (load(a)?, load(b)?);
    match first_divergence(&ta, &tb) {
        None => {
            println!("identical ({} commands)", ta.entries.len());
            Ok(())
        }
        Some(i) => {
            println!("first divergence at index {i}");
            Err(fail(TRACES_DIFFER, "traces differ"))
        }
    }
}

fn cmd_golden(out: Option<&Path>) -> Result<(), Failure> {
    let mut ok = true;
    for o in golden::walkthrough() {
        let steps: Vec<String> = o
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let names: Vec<String> = s.iter().map(|(n, p)| format!("{n}({})", p.tag())).collect();
                format!("b{}: [{}]", i + 1, names.join(", "))
            })
            .collect();
        println!("walk-through: {}; pending {:?}", steps.join(" "), o.uncommitted);
        let order: Vec<String> = o.committed.iter().map(|c| String::from_utf8_lossy(&c.command.payload).into_owned()).collect();
        ok &= order == ["red", "yellow", "green"] && o.uncommitted == ["blue"];
    }
    let t = golden::manipulation();
    let div = first_divergence(&t.anchor_trace, &t.timestamp_trace);
    println!(
        "timestamp manipulation: trusted c1={} c2={}; timestamp order {:?}; anchor order {:?}; first divergence {:?}",
        t.trusted.0, t.trusted.1, t.timestamp_order, t.anchor_order, div
    );
    ok &= t.timestamp_order == ["c2", "c1"] && t.anchor_order == ["c1", "c2"];
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", dir.display())))?;
        for (name, trace) in [("anchor", &t.anchor_trace), ("timestamp", &t.timestamp_trace)] {
            let p = dir.join(format!("manipulation-{name}.txt"));
            trace.write(&p).map_err(|e| fail(CONFIG_PARSE, format!("{}: {e}", p.display())))?;
        }
    }
    if ok {
        Ok(())
    } else {
        Err(fail(TRACES_DIFFER, "unexpected micro-scenario outcome"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHALANX_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { scenario, seed, strategy, out } => cmd_run(scenario, *seed, *strategy, out),
        Command::Sweep { sweep, seed, strategy, reps, out } => cmd_sweep(sweep, *seed, *strategy, *reps, out.as_deref()),
        Command::DiffTraces { a, b } => cmd_diff(a, b),
        Command::Golden { out } => cmd_golden(out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("phalanx: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
