use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use consim_core::harness::{self, CheckOutcome, RunSpec};
use consim_core::parallel::{with_workers, worker_cap, WORKERS_ENV};
use consim_core::verifier::ExploreBounds;

/// Deterministic simulator for randomized asynchronous consensus.
#[derive(Parser)]
#[command(name = "consim", version, about)]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials of one spec and emit one CSV row per trial.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// CSV destination (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary destination (stderr if omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Write the trace of this trial to `--trace-out`.
        #[arg(long, requires = "trace_out")]
        trace: Option<u64>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Repeat the experiment at several process counts and report scaling ratios.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated, ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustively explore schedules, crashes and coins up to a round bound.
    Check {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        max_rounds: u64,
        #[arg(long)]
        node_budget: Option<u64>,
        /// Write the first violation's witness trace here.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Re-execute a trace file and pretty-print it.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Only report the outcome.
        #[arg(long)]
        quiet: bool,
    },
}

fn load_spec(path: &Path) -> Result<RunSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    harness::parse_spec(&text).with_context(|| format!("in {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .context("writing stdout"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(worker_cap);
    match with_workers(workers, || dispatch(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `Ok(false)` when a safety violation was observed.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run {
            spec,
            seed,
            trials,
            max_steps,
            out,
            summary,
            trace,
            trace_out,
        } => {
            let mut spec = load_spec(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(k) = trials {
                spec.trials = k;
            }
            if let Some(m) = max_steps {
                spec.max_steps = m;
            }
            let exp = harness::run_experiment(&spec)?;
            emit(out.as_deref(), &exp.to_csv()?)?;
            let json = exp.summary_json();
            match summary {
                Some(p) => fs::write(&p, json + "\n")
                    .with_context(|| format!("writing {}", p.display()))?,
                None => eprintln!("{json}"),
            }
            if let (Some(trial), Some(path)) = (trace, trace_out) {
                let dump = harness::trial_trace(&spec, trial)?;
                fs::write(&path, dump).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(!exp.has_violation())
        }
        Command::Sweep {
            spec,
            n,
            seed,
            trials,
            out,
        } => {
            let mut spec = load_spec(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(k) = trials {
                spec.trials = k;
            }
            let rows = harness::sweep(&spec, &n)?;
            emit(out.as_deref(), &harness::sweep_csv(&rows)?)?;
            Ok(rows.iter().all(|r| r.violating_trials == 0))
        }
        Command::Check {
            spec,
            max_rounds,
            node_budget,
            witness,
        } => {
            let spec = load_spec(&spec)?;
            let mut bounds = ExploreBounds::new(max_rounds);
            if let Some(b) = node_budget {
                bounds.node_budget = b;
            }
            let results = harness::check(&spec, bounds)?;
            let mut safe = true;
            let mut refused = false;
            for r in &results {
                let inputs: Vec<String> = r.inputs.iter().map(u64::to_string).collect();
                let inputs = inputs.join(",");
                match &r.outcome {
                    CheckOutcome::Exhausted(s) => println!(
                        "inputs={inputs} exhausted states={} executions={} depth={} outcomes={:?}",
                        s.states, s.executions, s.max_depth, s.leaf_outcomes
                    ),
                    CheckOutcome::Violation {
                        kind,
                        witness: dump,
                    } => {
                        println!("inputs={inputs} VIOLATION {kind}");
                        if safe {
                            if let Some(p) = &witness {
                                fs::write(p, dump)
                                    .with_context(|| format!("writing {}", p.display()))?;
                            }
                        }
                        safe = false;
                    }
                    CheckOutcome::Refused(e) => {
                        println!("inputs={inputs} refused: {e}");
                        refused = true;
                    }
                }
            }
            if safe && refused {
                bail!("exploration incomplete");
            }
            Ok(safe)
        }
        Command::Replay { trace, quiet } => {
            let text = fs::read_to_string(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let report = harness::replay_dump(&text)?;
            if !quiet {
                print!("{}", report.pretty);
            }
            println!(
                "replayed {} steps, {} violation(s)",
                report.steps,
                report.violations.len()
            );
            Ok(report.violations.is_empty())
        }
    }
}
