//! Experiment configuration, execution, and result emission.
//!
//! A [`RunSpec`] is read from JSON or TOML. Trials run independently with
//! per-trial seed `seed ^ trial_id`, and rows always come back in trial order,
//! so the same spec and seed give byte-identical CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{StrategyConfig, StrategyKind};
use crate::ben_or::BenOr;
use crate::br_coin::{BrCoin, BrCoinProtocol};
use crate::cil::Cil;
use crate::error::{ConfigError, ExploreError, RunError, StatsError, TraceError};
use crate::ladder::Ladder;
use crate::model::{
    apply_step, enabled_steps, initial_config, run, Bit, CoinSource, ExecutionTrace, ForcedCoin,
    ProcessId, Protocol, RunOptions, TraceDump, TrialReport, Value,
};
use crate::parallel;
use crate::verifier::{self, aggregate, ExploreBounds, ExploreStats, StatSummary, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRIALS: u64 = 100;
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("cannot parse spec: {0}")]
    Parse(String),
    #[error("unknown protocol `{got}`; valid values: ben-or, cil, ladder-br, br-coin")]
    UnknownProtocol { got: String },
    #[error("unknown adversary `{got}`; valid values: round-robin, uniform-random, lockstep, vote-hider, vote-hider-crash")]
    UnknownAdversary { got: String },
    #[error("bad inputs: {0}")]
    Inputs(String),
    #[error("invalid spec: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    BenOr,
    Cil,
    LadderBr,
    BrCoin,
}

impl ProtocolName {
    /// Scale function the protocol's total work is compared against.
    pub fn work_scale(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            ProtocolName::BenOr | ProtocolName::Cil => n * n,
            ProtocolName::LadderBr | ProtocolName::BrCoin => n * n * n.log2().max(1.0),
        }
    }

    pub fn binary(self) -> bool {
        self != ProtocolName::Cil
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolName::BenOr => "ben-or",
            ProtocolName::Cil => "cil",
            ProtocolName::LadderBr => "ladder-br",
            ProtocolName::BrCoin => "br-coin",
        })
    }
}

impl FromStr for ProtocolName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ben-or" => Ok(ProtocolName::BenOr),
            "cil" => Ok(ProtocolName::Cil),
            "ladder-br" => Ok(ProtocolName::LadderBr),
            "br-coin" => Ok(ProtocolName::BrCoin),
            _ => Err(HarnessError::UnknownProtocol { got: s.to_string() }),
        }
    }
}

/// How inputs are produced for each trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputSpec {
    Explicit(Vec<u64>),
    Unanimous(u64),
    /// Alternating 0, 1, 0, ...
    Split,
    /// Fresh inputs per trial from `seed ^ trial_id`: bits for binary
    /// protocols, values in `0..n` otherwise.
    Random(u64),
    /// Every binary input vector (exploration only).
    All,
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::Explicit(v) => {
                let s: Vec<String> = v.iter().map(u64::to_string).collect();
                f.write_str(&s.join(","))
            }
            InputSpec::Unanimous(v) => write!(f, "unanimous:{v}"),
            InputSpec::Split => f.write_str("split"),
            InputSpec::Random(s) => write!(f, "random:{s}"),
            InputSpec::All => f.write_str("all"),
        }
    }
}

impl Serialize for InputSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for InputSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |what: &str| HarnessError::Inputs(format!("`{s}`: {what}"));
        let num = |x: &str| {
            x.trim()
                .parse::<u64>()
                .map_err(|_| bad("expected an integer"))
        };
        match s.split_once(':') {
            Some(("unanimous", v)) => Ok(InputSpec::Unanimous(num(v)?)),
            Some(("random", v)) => Ok(InputSpec::Random(num(v)?)),
            Some(_) => Err(bad("unknown generator")),
            None => match s {
                "split" => Ok(InputSpec::Split),
                "all" => Ok(InputSpec::All),
                list => list
                    .split(',')
                    .map(num)
                    .collect::<Result<_, _>>()
                    .map(InputSpec::Explicit),
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInputs {
    List(Vec<u64>),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAdversary {
    Name(String),
    Table {
        kind: String,
        #[serde(default)]
        target: Option<u8>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        crash_plan: Vec<(u64, usize)>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    protocol: String,
    n: usize,
    #[serde(default)]
    t: usize,
    #[serde(default)]
    inputs: Option<RawInputs>,
    #[serde(default)]
    adversary: Option<RawAdversary>,
    #[serde(default)]
    cil_atomic: Option<bool>,
    #[serde(default)]
    ben_or_halting: Option<bool>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    trials: Option<u64>,
    #[serde(default)]
    max_steps: Option<u64>,
}

/// A validated experiment description with all defaults filled in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunSpec {
    pub protocol: ProtocolName,
    pub n: usize,
    pub t: usize,
    pub inputs: InputSpec,
    pub adversary: StrategyConfig,
    /// Fused flip-and-write substrate for cil.
    pub cil_atomic: bool,
    /// Halt one round after deciding, for ben-or.
    pub ben_or_halting: bool,
    pub seed: u64,
    pub trials: u64,
    pub max_steps: u64,
}

impl RunSpec {
    pub fn new(protocol: ProtocolName, n: usize, t: usize) -> Self {
        RunSpec {
            protocol,
            n,
            t,
            inputs: InputSpec::Split,
            adversary: StrategyConfig::new(StrategyKind::RoundRobin),
            cil_atomic: true,
            ben_or_halting: true,
            seed: 0,
            trials: DEFAULT_TRIALS,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// Checks the fault bound and input shape.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0 {
            return Err(ConfigError::NoProcesses.into());
        }
        match self.protocol {
            ProtocolName::BenOr if 2 * self.t >= self.n => {
                return Err(ConfigError::MajorityBound {
                    n: self.n,
                    t: self.t,
                }
                .into())
            }
            _ if self.t >= self.n => {
                return Err(ConfigError::WaitFreeBound {
                    n: self.n,
                    t: self.t,
                }
                .into())
            }
            _ => {}
        }
        match &self.inputs {
            InputSpec::Explicit(v) if v.len() != self.n => Err(HarnessError::Inputs(format!(
                "{} inputs for n = {}",
                v.len(),
                self.n
            ))),
            InputSpec::Explicit(v) if self.protocol.binary() && v.iter().any(|&x| x > 1) => Err(
                HarnessError::Inputs(format!("{} takes binary inputs", self.protocol)),
            ),
            InputSpec::Unanimous(v) if self.protocol.binary() && *v > 1 => Err(
                HarnessError::Inputs(format!("{} takes binary inputs", self.protocol)),
            ),
            _ => Ok(()),
        }
    }

    /// Input vector for one trial.
    pub fn trial_inputs(&self, trial: u64) -> Result<Vec<u64>, HarnessError> {
        let n = self.n;
        Ok(match &self.inputs {
            InputSpec::Explicit(v) => v.clone(),
            InputSpec::Unanimous(v) => vec![*v; n],
            InputSpec::Split => (0..n as u64).map(|i| i % 2).collect(),
            InputSpec::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial);
                let range = if self.protocol.binary() {
                    2
                } else {
                    n.max(2) as u64
                };
                (0..n).map(|_| rng.random_range(0..range)).collect()
            }
            InputSpec::All => {
                return Err(HarnessError::Inputs(
                    "`all` is only valid for exploration".into(),
                ));
            }
        })
    }

    /// Header lines identifying a trace produced under this spec.
    pub fn trace_header(&self, inputs: &[u64]) -> Vec<String> {
        let inputs: Vec<String> = inputs.iter().map(u64::to_string).collect();
        vec![
            "consim-trace v1".to_string(),
            format!(
                "protocol={} n={} t={} inputs={} cil_atomic={} ben_or_halting={}",
                self.protocol,
                self.n,
                self.t,
                inputs.join(","),
                self.cil_atomic,
                self.ben_or_halting
            ),
        ]
    }
}

fn parse_adversary(raw: Option<RawAdversary>, seed: u64) -> Result<StrategyConfig, HarnessError> {
    let (kind, target, adv_seed, plan) = match raw {
        None => return Ok(StrategyConfig::new(StrategyKind::RoundRobin)),
        Some(RawAdversary::Name(name)) => (name, None, None, Vec::new()),
        Some(RawAdversary::Table {
            kind,
            target,
            seed,
            crash_plan,
        }) => (kind, target, seed, crash_plan),
    };
    let seed = adv_seed.unwrap_or(seed);
    let target = match target.unwrap_or(1) {
        0 => Bit::Zero,
        1 => Bit::One,
        other => {
            return Err(HarnessError::Parse(format!(
                "vote-hider target must be 0 or 1, got {other}"
            )))
        }
    };
    let kind = match kind.as_str() {
        "round-robin" => StrategyKind::RoundRobin,
        "uniform-random" => StrategyKind::UniformRandom { seed },
        "lockstep" => StrategyKind::Lockstep,
        "vote-hider" => StrategyKind::VoteHider {
            target,
            crash: false,
            seed,
        },
        "vote-hider-crash" => StrategyKind::VoteHider {
            target,
            crash: true,
            seed,
        },
        _ => return Err(HarnessError::UnknownAdversary { got: kind }),
    };
    let plan = plan.into_iter().map(|(at, p)| (at, ProcessId(p))).collect();
    Ok(StrategyConfig::new(kind).with_crash_plan(plan))
}

/// Parses a JSON (leading `{`) or TOML spec and validates it.
pub fn parse_spec(text: &str) -> Result<RunSpec, HarnessError> {
    let raw: RawSpec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?
    };
    let protocol: ProtocolName = raw.protocol.parse()?;
    let inputs = match raw.inputs {
        None => InputSpec::Split,
        Some(RawInputs::List(v)) => InputSpec::Explicit(v),
        Some(RawInputs::Text(s)) => s.parse()?,
    };
    let spec = RunSpec {
        protocol,
        n: raw.n,
        t: raw.t,
        inputs,
        adversary: parse_adversary(raw.adversary, raw.seed)?,
        cil_atomic: raw.cil_atomic.unwrap_or(true),
        ben_or_halting: raw.ben_or_halting.unwrap_or(true),
        seed: raw.seed,
        trials: raw.trials.unwrap_or(DEFAULT_TRIALS),
        max_steps: raw.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
    };
    spec.validate()?;
    Ok(spec)
}

/// Values the harness can build from its integer input encoding.
pub trait HarnessValue: Value {
    fn from_u64(v: u64) -> Self;
}

impl HarnessValue for Bit {
    fn from_u64(v: u64) -> Self {
        Bit::from(v == 1)
    }
}

impl HarnessValue for u64 {
    fn from_u64(v: u64) -> Self {
        v
    }
}

/// Something to do with the concrete protocol a spec names.
pub trait Visit {
    type Out;

    fn visit<P>(self, spec: &RunSpec, protocol: &P) -> Self::Out
    where
        P: Protocol + 'static,
        P::Value: HarnessValue;
}

pub fn dispatch<V: Visit>(spec: &RunSpec, v: V) -> V::Out {
    match spec.protocol {
        ProtocolName::BenOr => v.visit(spec, &BenOr::new(spec.ben_or_halting)),
        ProtocolName::Cil => v.visit(spec, &Cil::<u64>::new(spec.cil_atomic)),
        ProtocolName::LadderBr => v.visit(spec, &Ladder::new(BrCoin)),
        ProtocolName::BrCoin => v.visit(spec, &BrCoinProtocol),
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultRow {
    pub trial_id: u64,
    pub seed: u64,
    pub terminated: bool,
    /// The value all live processes decided, `split`, or `-`.
    pub decision: String,
    /// Rounds of the slowest process.
    pub rounds: u64,
    pub total_steps: u64,
    pub counters: Vec<u64>,
    /// Per-process rounds, kept for per-process statistics.
    pub process_rounds: Vec<u64>,
    pub crashed: Vec<bool>,
    /// Processes, crashed or not, that reached a decision.
    pub deciders: usize,
    pub violations: Vec<String>,
}

impl ResultRow {
    fn from_report<V: Clone + Eq + fmt::Display>(
        trial_id: u64,
        seed: u64,
        r: &TrialReport<V>,
    ) -> Self {
        let decision = match r.unanimous_decision() {
            Some(v) => v.to_string(),
            None if r.terminated || r.common_decision() == Some(Err(())) => "split".to_string(),
            None => "-".to_string(),
        };
        ResultRow {
            trial_id,
            seed,
            terminated: r.terminated,
            decision,
            rounds: r.max_rounds(),
            total_steps: r.total_steps,
            counters: r.counters.clone(),
            process_rounds: r.rounds.clone(),
            crashed: r.crashed.clone(),
            deciders: r.decisions.iter().filter(|d| d.is_some()).count(),
            violations: r.violations.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Mean rounds over processes that did not crash.
    pub fn mean_live_rounds(&self) -> f64 {
        let live: Vec<u64> = self
            .process_rounds
            .iter()
            .zip(&self.crashed)
            .filter(|(_, c)| !**c)
            .map(|(r, _)| *r)
            .collect();
        if live.is_empty() {
            0.0
        } else {
            live.iter().sum::<u64>() as f64 / live.len() as f64
        }
    }
}

/// Rows and summary of one experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: RunSpec,
    pub counter_names: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub summary: Result<StatSummary, StatsError>,
}

impl Experiment {
    /// Column of the named protocol counter.
    pub fn counter(&self, name: &str) -> Option<Vec<u64>> {
        let i = self.counter_names.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.counters[i]).collect())
    }

    pub fn has_violation(&self) -> bool {
        self.rows.iter().any(|r| !r.violations.is_empty())
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let err = |e: csv::Error| HarnessError::Csv(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header: Vec<String> = [
            "trial_id",
            "seed",
            "terminated",
            "decision",
            "rounds",
            "total_steps",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.counter_names.iter().cloned());
        header.push("violations".into());
        header.push("schema_version".into());
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.trial_id.to_string(),
                r.seed.to_string(),
                r.terminated.to_string(),
                r.decision.clone(),
                r.rounds.to_string(),
                r.total_steps.to_string(),
            ];
            rec.extend(r.counters.iter().map(u64::to_string));
            rec.push(r.violations.join(";"));
            rec.push(SCHEMA_VERSION.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            spec: &'a RunSpec,
            summary: Option<&'a StatSummary>,
            error: Option<String>,
            violations: bool,
        }
        let doc = Doc {
            schema_version: SCHEMA_VERSION,
            spec: &self.spec,
            summary: self.summary.as_ref().ok(),
            error: self.summary.as_ref().err().map(|e| e.to_string()),
            violations: self.has_violation(),
        };
        serde_json::to_string_pretty(&doc).expect("summary serializes")
    }
}

struct RunVisit {
    sequential: bool,
}

impl Visit for RunVisit {
    type Out = Result<Experiment, HarnessError>;

    fn visit<P>(self, spec: &RunSpec, protocol: &P) -> Self::Out
    where
        P: Protocol + 'static,
        P::Value: HarnessValue,
    {
        let opts = RunOptions {
            max_steps: spec.max_steps,
            ..RunOptions::default()
        };
        let trial = |trial_id: u64| -> Result<(ResultRow, TrialReport<P::Value>), HarnessError> {
            let seed = spec.seed ^ trial_id;
            let inputs: Vec<P::Value> = spec
                .trial_inputs(trial_id)?
                .into_iter()
                .map(P::Value::from_u64)
                .collect();
            let mut adversary = spec.adversary.build::<P>(trial_id);
            let out = run(
                protocol,
                spec.n,
                spec.t,
                &inputs,
                adversary.as_mut(),
                &mut CoinSource::new(seed),
                &opts,
            )?;
            Ok((
                ResultRow::from_report(trial_id, seed, &out.report),
                out.report,
            ))
        };
        let results = if self.sequential {
            parallel::run_trials_sequential(spec.trials, trial)
        } else {
            parallel::run_trials(spec.trials, trial)
        };
        let mut rows = Vec::with_capacity(results.len());
        let mut reports = Vec::with_capacity(results.len());
        for r in results {
            let (row, report) = r?;
            rows.push(row);
            reports.push(report);
        }
        Ok(Experiment {
            spec: spec.clone(),
            counter_names: protocol
                .counter_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows,
            summary: aggregate(&reports),
        })
    }
}

/// Runs `spec.trials` independent trials.
pub fn run_experiment(spec: &RunSpec) -> Result<Experiment, HarnessError> {
    spec.validate()?;
    dispatch(spec, RunVisit { sequential: false })
}

/// Like [`run_experiment`] but on the calling thread only.
pub fn run_experiment_sequential(spec: &RunSpec) -> Result<Experiment, HarnessError> {
    spec.validate()?;
    dispatch(spec, RunVisit { sequential: true })
}

/// One line of a scaling table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub trials: u64,
    pub terminated: u64,
    pub mean_steps: f64,
    pub mean_rounds: f64,
    /// Mean over trials of the mean rounds of live processes.
    pub mean_process_rounds: f64,
    /// `mean_steps / f(n)` for the protocol's work bound `f`.
    pub ratio: f64,
    pub violating_trials: u64,
}

/// Runs the template at each `n`; rows come back in the order given.
pub fn sweep(template: &RunSpec, ns: &[usize]) -> Result<Vec<SweepRow>, HarnessError> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Parse(
            "sweep sizes must be strictly ascending".into(),
        ));
    }
    ns.iter()
        .map(|&n| {
            let spec = RunSpec {
                n,
                ..template.clone()
            };
            let exp = run_experiment(&spec)?;
            let summary = exp.summary.clone()?;
            let per_process = exp
                .rows
                .iter()
                .map(ResultRow::mean_live_rounds)
                .sum::<f64>()
                / exp.rows.len() as f64;
            Ok(SweepRow {
                n,
                trials: summary.trials,
                terminated: summary.terminated,
                mean_steps: summary.mean_steps,
                mean_rounds: summary.mean_rounds,
                mean_process_rounds: per_process,
                ratio: summary.mean_steps / spec.protocol.work_scale(n),
                violating_trials: summary.violating_trials,
            })
        })
        .collect()
}

/// Renders a sweep as CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))
}

/// Exploration result for one input vector.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub inputs: Vec<u64>,
    pub outcome: CheckOutcome,
}

#[derive(Clone, Debug)]
pub enum CheckOutcome {
    Exhausted(ExploreStats),
    /// Violation kind and the witness in dump format.
    Violation {
        kind: String,
        witness: String,
    },
    Refused(String),
}

impl CheckResult {
    pub fn ok(&self) -> bool {
        matches!(self.outcome, CheckOutcome::Exhausted(_))
    }
}

struct CheckVisit {
    bounds: ExploreBounds,
}

impl Visit for CheckVisit {
    type Out = Result<Vec<CheckResult>, HarnessError>;

    fn visit<P>(self, spec: &RunSpec, protocol: &P) -> Self::Out
    where
        P: Protocol + 'static,
        P::Value: HarnessValue,
    {
        let vectors: Vec<Vec<u64>> = match &spec.inputs {
            InputSpec::All => (0..1u64 << spec.n)
                .map(|mask| (0..spec.n).map(|i| mask >> (spec.n - 1 - i) & 1).collect())
                .collect(),
            _ => vec![spec.trial_inputs(0)?],
        };
        let typed: Vec<Vec<P::Value>> = vectors
            .iter()
            .map(|v| v.iter().map(|&x| P::Value::from_u64(x)).collect())
            .collect();
        let verdicts = verifier::explore_inputs(protocol, spec.n, spec.t, &typed, &self.bounds);
        Ok(vectors
            .into_iter()
            .zip(verdicts)
            .map(|(inputs, verdict)| {
                let outcome = match verdict {
                    Ok(Verdict::Exhausted(stats)) => CheckOutcome::Exhausted(stats),
                    Ok(Verdict::Violation(v)) => CheckOutcome::Violation {
                        kind: v.kind.to_string(),
                        witness: v.witness.dump(&spec.trace_header(&inputs)),
                    },
                    Err(e) => CheckOutcome::Refused(e.to_string()),
                };
                CheckResult { inputs, outcome }
            })
            .collect())
    }
}

/// Exhaustively explores the experiment's input vectors (every binary vector for
/// `inputs = "all"`) up to `max_rounds`.
pub fn check(spec: &RunSpec, bounds: ExploreBounds) -> Result<Vec<CheckResult>, HarnessError> {
    spec.validate()?;
    dispatch(spec, CheckVisit { bounds })
}

/// Result of replaying a dump.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub steps: usize,
    pub decisions: Vec<Option<String>>,
    pub violations: Vec<String>,
    /// Human-readable rendering of the execution.
    pub pretty: String,
}

struct ReplayVisit<'a> {
    dump: &'a TraceDump,
    inputs: Vec<u64>,
}

impl Visit for ReplayVisit<'_> {
    type Out = Result<ReplayReport, HarnessError>;

    fn visit<P>(self, spec: &RunSpec, protocol: &P) -> Self::Out
    where
        P: Protocol + 'static,
        P::Value: HarnessValue,
    {
        use std::fmt::Write as _;
        let inputs: Vec<P::Value> = self.inputs.iter().map(|&x| P::Value::from_u64(x)).collect();
        let mut config = initial_config(protocol, spec.n, spec.t, &inputs)?;
        let mut trace: ExecutionTrace<P> = ExecutionTrace::new();
        let mut pretty = String::new();
        let mut violations = Vec::new();
        for line in &self.dump.lines {
            let step = enabled_steps(protocol, &config)
                .into_iter()
                .find(|s| s.actor == line.actor && s.action.to_string() == line.action)
                .ok_or_else(|| TraceError::NotEnabled {
                    seq: line.seq,
                    actor: line.actor,
                    action: line.action.clone(),
                })?;
            let coin = if line.result == "1" {
                Bit::One
            } else {
                Bit::Zero
            };
            let outcome = apply_step(protocol, &mut config, &step, &mut ForcedCoin(coin)).map_err(
                |source| TraceError::Step {
                    seq: line.seq,
                    source,
                },
            )?;
            if outcome.to_string() != line.result {
                return Err(TraceError::Diverged {
                    seq: line.seq,
                    recorded: line.result.clone(),
                    replayed: outcome.to_string(),
                }
                .into());
            }
            let _ = writeln!(
                pretty,
                "{:>6}  {:<4} {:<40} {}",
                line.seq,
                line.actor.to_string(),
                line.action,
                outcome
            );
            if let Some(v) = crate::model::check_safety(protocol, &config) {
                let v = v.to_string();
                if !violations.contains(&v) {
                    let _ = writeln!(pretty, "        !! {v}");
                    violations.push(v);
                }
            }
            trace.push(step, outcome);
        }
        let decisions: Vec<Option<String>> = config
            .procs
            .iter()
            .map(|s| s.decided.as_ref().map(|d| d.to_string()))
            .collect();
        for (i, d) in decisions.iter().enumerate() {
            let state = if config.procs[i].alive {
                ""
            } else {
                " (crashed)"
            };
            let _ = writeln!(
                pretty,
                "p{i}: decision {}{state}",
                d.clone().unwrap_or_else(|| "-".into())
            );
        }
        Ok(ReplayReport {
            steps: trace.len(),
            decisions,
            violations,
            pretty,
        })
    }
}

/// Re-executes a dump, checking every step against the live system.
pub fn replay_dump(text: &str) -> Result<ReplayReport, HarnessError> {
    let dump = TraceDump::parse(text)?;
    let get = |k: &str| {
        dump.header_value(k)
            .ok_or_else(|| TraceError::Header(format!("missing `{k}`")))
    };
    let num = |k: &str| -> Result<usize, HarnessError> {
        get(k)?
            .parse()
            .map_err(|_| TraceError::Header(format!("bad `{k}`")).into())
    };
    let flag = |k: &str| dump.header_value(k).map(|v| v == "true");
    let protocol: ProtocolName = get("protocol")?.parse()?;
    let inputs: Vec<u64> = match get("inputs")? {
        "" => Vec::new(),
        s => s
            .split(',')
            .map(|x| {
                x.parse()
                    .map_err(|_| TraceError::Header("bad `inputs`".into()))
            })
            .collect::<Result<_, _>>()?,
    };
    let mut spec = RunSpec::new(protocol, num("n")?, num("t")?);
    spec.inputs = InputSpec::Explicit(inputs.clone());
    spec.cil_atomic = flag("cil_atomic").unwrap_or(true);
    spec.ben_or_halting = flag("ben_or_halting").unwrap_or(true);
    spec.validate()?;
    dispatch(
        &spec,
        ReplayVisit {
            dump: &dump,
            inputs,
        },
    )
}

struct TraceVisit {
    trial: u64,
}

impl Visit for TraceVisit {
    type Out = Result<String, HarnessError>;

    fn visit<P>(self, spec: &RunSpec, protocol: &P) -> Self::Out
    where
        P: Protocol + 'static,
        P::Value: HarnessValue,
    {
        let raw = spec.trial_inputs(self.trial)?;
        let inputs: Vec<P::Value> = raw.iter().map(|&x| P::Value::from_u64(x)).collect();
        let mut adversary = spec.adversary.build::<P>(self.trial);
        let out = run(
            protocol,
            spec.n,
            spec.t,
            &inputs,
            adversary.as_mut(),
            &mut CoinSource::new(spec.seed ^ self.trial),
            &RunOptions {
                max_steps: spec.max_steps,
                ..RunOptions::default()
            },
        )?;
        Ok(out.trace.dump(&spec.trace_header(&raw)))
    }
}

/// Runs one trial and returns its trace in dump format.
pub fn trial_trace(spec: &RunSpec, trial: u64) -> Result<String, HarnessError> {
    spec.validate()?;
    dispatch(spec, TraceVisit { trial })
}

/// Trial counts by decision label.
pub fn decision_histogram(rows: &[ResultRow]) -> BTreeMap<String, u64> {
    let mut h = BTreeMap::new();
    for r in rows {
        *h.entry(r.decision.clone()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_gets_defaults() {
        let s =
            parse_spec(r#"{"protocol": "ben-or", "n": 3, "t": 1, "inputs": "split", "seed": 42}"#)
                .unwrap();
        assert_eq!(s.trials, 100);
        assert_eq!(s.max_steps, 1_000_000);
        assert_eq!(s.inputs, InputSpec::Split);
        assert_eq!(s.adversary.kind, StrategyKind::RoundRobin);
    }

    #[test]
    fn ben_or_half_faulty_is_rejected() {
        let e = parse_spec("protocol = \"ben-or\"\nn = 4\nt = 2\n").unwrap_err();
        assert_eq!(
            e,
            HarnessError::Config(ConfigError::MajorityBound { n: 4, t: 2 })
        );
        assert!(e.to_string().contains("t < n/2"));
    }

    #[test]
    fn wait_free_bound_accepts_n_minus_one() {
        let s = parse_spec("protocol = \"ladder-br\"\nn = 8\nt = 7\n").unwrap();
        assert_eq!((s.n, s.t), (8, 7));
        assert!(parse_spec("protocol = \"ladder-br\"\nn = 8\nt = 8\n").is_err());
    }

    #[test]
    fn unknown_names_list_valid_values() {
        let e = parse_spec(r#"{"protocol": "paxos", "n": 3}"#).unwrap_err();
        assert!(e.to_string().contains("ben-or, cil, ladder-br, br-coin"));
        let e = parse_spec(r#"{"protocol": "cil", "n": 3, "adversary": "chaos"}"#).unwrap_err();
        assert!(e.to_string().contains("round-robin"));
    }

    #[test]
    fn adversary_table_form() {
        let s = parse_spec(
            "protocol = \"br-coin\"\nn = 4\nt = 3\nseed = 9\n[adversary]\nkind = \"vote-hider-crash\"\ntarget = 0\ncrash_plan = [[10, 2]]\n",
        )
        .unwrap();
        assert_eq!(
            s.adversary.kind,
            StrategyKind::VoteHider {
                target: Bit::Zero,
                crash: true,
                seed: 9
            }
        );
        assert_eq!(s.adversary.crash_plan, vec![(10, ProcessId(2))]);
    }

    #[test]
    fn input_generators() {
        let mut s = RunSpec::new(ProtocolName::Cil, 4, 0);
        s.inputs = "unanimous:7".parse().unwrap();
        assert_eq!(s.trial_inputs(0).unwrap(), vec![7; 4]);
        s.inputs = "split".parse().unwrap();
        assert_eq!(s.trial_inputs(0).unwrap(), vec![0, 1, 0, 1]);
        s.inputs = "3,1,4,1".parse().unwrap();
        assert_eq!(s.trial_inputs(5).unwrap(), vec![3, 1, 4, 1]);
        s.inputs = "random:1".parse().unwrap();
        assert_eq!(s.trial_inputs(2).unwrap(), s.trial_inputs(2).unwrap());
        assert!(s.trial_inputs(0).unwrap().iter().all(|&v| v < 4));
    }

    #[test]
    fn zero_trials_yield_no_rows_and_a_summary_error() {
        let mut s = RunSpec::new(ProtocolName::BenOr, 3, 1);
        s.trials = 0;
        let e = run_experiment(&s).unwrap();
        assert!(e.rows.is_empty());
        assert_eq!(e.summary, Err(StatsError::Empty));
        assert!(e
            .to_csv()
            .unwrap()
            .starts_with("trial_id,seed,terminated,decision,rounds,total_steps,"));
    }

    #[test]
    fn parallel_and_sequential_rows_match() {
        let mut s = RunSpec::new(ProtocolName::LadderBr, 4, 0);
        s.trials = 12;
        s.adversary = StrategyConfig::new(StrategyKind::UniformRandom { seed: 3 });
        let a = run_experiment(&s).unwrap().to_csv().unwrap();
        let b = run_experiment_sequential(&s).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_single_n_is_one_row() {
        let mut s = RunSpec::new(ProtocolName::Cil, 4, 0);
        s.trials = 5;
        let rows = sweep(&s, &[4]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].ratio - rows[0].mean_steps / 16.0).abs() < 1e-9);
    }

    #[test]
    fn trace_round_trips_through_replay() {
        let mut s = RunSpec::new(ProtocolName::BenOr, 3, 1);
        s.seed = 11;
        let dump = trial_trace(&s, 0).unwrap();
        let rep = replay_dump(&dump).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.decisions.iter().all(|d| d.is_some()));
        assert_eq!(
            rep.steps,
            dump.lines().filter(|l| !l.starts_with('#')).count()
        );
    }

    #[test]
    fn tampered_trace_is_rejected() {
        let s = RunSpec::new(ProtocolName::LadderBr, 2, 0);
        let dump = trial_trace(&s, 0).unwrap();
        let tampered = dump.replacen("setbit:0.1", "setbit:1.1", 1);
        assert!(replay_dump(&tampered).is_err());
    }

    #[test]
    fn ladder_br_round_robin_all_terminate() {
        let mut s = RunSpec::new(ProtocolName::LadderBr, 4, 3);
        s.trials = 50;
        let e = run_experiment(&s).unwrap();
        assert_eq!(e.rows.len(), 50);
        assert_eq!(e.rows.iter().filter(|r| r.terminated).count(), 50);
        assert!(!e.has_violation());
    }
}
