//! Execution fabric: system state for both substrates, the step grammar, the
//! deterministic coin source, and the adversary-driven run loop.

mod coin;
mod config;
mod engine;
mod ids;
mod protocol;
mod step;
mod trace;

pub use coin::{
    one_in, CoinOracle, CoinSource, FixedCoins, ForcedCoin, InvertedCoin, MAX_REJECTION_ROUNDS,
};
pub use config::{Envelope, FaultBudget, MarkGrid, MessagePool, ProcSlot, SystemConfig};
pub(crate) use engine::build_view;
pub use engine::{
    apply_step, apply_step_owned, check_safety, enabled_steps, enabled_steps_capped,
    initial_config, run, run_observed, RunOptions, RunOutput, TrialReport, ViolationKind,
};
pub use ids::{Bit, MsgId, NoMsg, NoReg, NoWord, ProcessId};
pub use protocol::{Ctx, Datum, ProtoOp, ProtoOutcome, Protocol, ProtocolKind, Value};
pub use step::{Action, ActionKind, CoinBias, Dest, Op, Outcome, Step, StepShape};
pub use trace::{ExecutionTrace, StepOf, TraceDump, TraceEntry, TraceLine};
