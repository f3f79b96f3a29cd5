use thiserror::Error;

use crate::model::ProcessId;

/// Invalid system parameters for a protocol.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("n must be at least 1")]
    NoProcesses,
    #[error("expected {n} inputs, got {got}")]
    InputCount { n: usize, got: usize },
    #[error("t = {t} violates the crash bound t < n/2 for n = {n}")]
    MajorityBound { n: usize, t: usize },
    #[error("t = {t} exceeds the wait-free bound t <= n - 1 for n = {n}")]
    WaitFreeBound { n: usize, t: usize },
    #[error("{0}")]
    Invalid(String),
}

/// A step that was not applicable in the configuration it was applied to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{0} has crashed")]
    Crashed(ProcessId),
    #[error("{0} has halted")]
    Halted(ProcessId),
    #[error("{0} is not a process")]
    UnknownProcess(ProcessId),
    #[error("{actor} cannot take step `{action}` now")]
    NotEnabled { actor: ProcessId, action: String },
    #[error("crash budget exhausted")]
    FaultBudget,
}

/// A strategy broke its contract with the engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("strategy chose index {index} of {len} enabled steps")]
    OutOfRange { index: usize, len: usize },
    #[error("strategy needs {required:?} visibility but only {granted:?} was granted")]
    Visibility {
        required: crate::adversary::Visibility,
        granted: crate::adversary::Visibility,
    },
    #[error("strategy was offered no steps")]
    NothingEnabled,
}

/// Failure of a simulation run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("adversary contract error: {0}")]
    Adversary(#[from] AdversaryError),
    #[error("step error: {0}")]
    Step(#[from] StepError),
}

/// Failure to parse or replay a trace dump.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("step {seq}: `{actor} {action}` is not enabled")]
    NotEnabled {
        seq: usize,
        actor: ProcessId,
        action: String,
    },
    #[error("step {seq}: recorded result `{recorded}` but replay produced `{replayed}`")]
    Diverged {
        seq: usize,
        recorded: String,
        replayed: String,
    },
    #[error("step {seq}: {source}")]
    Step { seq: usize, source: StepError },
    #[error("trace header: {0}")]
    Header(String),
}

/// Refusal or failure of an exhaustive exploration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("node budget exceeded: visited {visited} nodes (budget {budget}); the tree is at least this large")]
    NodeBudget { visited: u64, budget: u64 },
    #[error("coin budget exceeded: a path draws more than {budget} coin bits")]
    CoinBudget { budget: u32 },
    #[error("depth bound exceeded: a path is longer than {max_steps} steps")]
    Depth { max_steps: u64 },
    #[error("coin budget {0} is above the supported maximum of 20 bits")]
    CoinBudgetTooLarge(u32),
    #[error("adversary contract error: {0}")]
    Adversary(#[from] AdversaryError),
    #[error("step error: {0}")]
    Step(#[from] StepError),
}

/// Failure in statistics aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("cannot summarize an empty set of trial reports")]
    Empty,
}
