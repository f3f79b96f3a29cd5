//! Deterministic simulation lab for randomized asynchronous consensus.
//!
//! Protocols are pure state machines driven one atomic step at a time by an
//! adversary strategy over a message-passing or shared-memory substrate, with
//! every coin flip drawn from a seeded, schedule-independent source.

pub mod adversary;
pub mod ben_or;
pub mod br_coin;
pub mod cil;
pub mod error;
pub mod harness;
pub mod ladder;
pub mod model;
pub mod parallel;
pub mod verifier;

pub use adversary::{Adversary, StrategyConfig, StrategyKind, Visibility};
pub use ben_or::BenOr;
pub use br_coin::{BrCoin, BrCoinProtocol};
pub use cil::Cil;
pub use error::{ConfigError, ExploreError, RunError, StatsError, StepError, TraceError};
pub use harness::{parse_spec, run_experiment, RunSpec};
pub use ladder::Ladder;
pub use model::{Bit, CoinSource, ProcessId, Protocol, RunOptions, TrialReport};
