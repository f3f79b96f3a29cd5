use std::fmt::{Debug, Display};
use std::hash::Hash;

use super::config::SystemConfig;
use super::ids::{Bit, ProcessId};
use super::step::{Op, Outcome};
use crate::error::ConfigError;

/// Bounds required of input and decision values.
pub trait Value: Clone + Eq + Ord + Hash + Debug + Display + Send + Sync + 'static {}

impl<T> Value for T where T: Clone + Eq + Ord + Hash + Debug + Display + Send + Sync + 'static {}

/// Bounds required of protocol-specific data that lives in a configuration.
pub trait Datum: Clone + Eq + Hash + Debug + Send + Sync + 'static {}

impl<T> Datum for T where T: Clone + Eq + Hash + Debug + Send + Sync + 'static {}

/// Per-call context handed to a protocol: who is acting and the system size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ctx {
    pub me: ProcessId,
    pub n: usize,
    pub t: usize,
}

/// Whether all deciders are required to agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Agreement and validity are safety properties.
    Consensus,
    /// A shared coin: outputs may legitimately differ and carry no validity condition.
    Coin,
}

pub type ProtoOp<P> = Op<<P as Protocol>::Msg, <P as Protocol>::Reg, <P as Protocol>::Word>;
pub type ProtoOutcome<P> = Outcome<<P as Protocol>::Msg, <P as Protocol>::Word>;

/// A pluggable protocol definition: initial state, the next local operation of
/// each process, transition functions, and decision extraction.
///
/// Implementations are pure state machines; the engine serializes every call.
pub trait Protocol: Send + Sync {
    type Value: Value;
    type State: Datum;
    type Msg: Datum + Ord + Display;
    type Reg: Datum + Ord + Display;
    type Word: Datum + Default + Display;

    fn name(&self) -> &'static str;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Consensus
    }

    /// Validates `(n, t, inputs)` against the protocol's fault model.
    fn check_params(&self, n: usize, t: usize, inputs: &[Self::Value]) -> Result<(), ConfigError>;

    fn init(&self, ctx: Ctx, input: &Self::Value) -> Self::State;

    /// The single pending local operation, or `None` when waiting or finished.
    fn next_op(&self, ctx: Ctx, state: &Self::State) -> Option<ProtoOp<Self>>;

    /// Feeds back the result of the operation returned by `next_op`.
    fn on_op(&self, ctx: Ctx, state: &mut Self::State, outcome: ProtoOutcome<Self>);

    /// Whether a pooled message may currently be delivered to this process.
    fn accepts(&self, _ctx: Ctx, _state: &Self::State, _msg: &Self::Msg) -> bool {
        true
    }

    /// True once the process will never act on `msg`. The engine drops such
    /// messages from the pool instead of scheduling a no-op delivery.
    fn discards(&self, _state: &Self::State, _msg: &Self::Msg) -> bool {
        false
    }

    fn on_deliver(&self, _ctx: Ctx, _state: &mut Self::State, _from: ProcessId, _msg: Self::Msg) {}

    /// Current output value, if any.
    fn decision(&self, state: &Self::State) -> Option<Self::Value>;

    /// A halted process takes no further steps and accepts no deliveries.
    fn halted(&self, state: &Self::State) -> bool;

    /// Protocol-defined progress measure (round, pass, or scan count).
    fn rounds(&self, state: &Self::State) -> u64;

    /// Round the process is currently executing; bounded exploration freezes
    /// processes past its round cap. Defaults to [`Protocol::rounds`].
    fn current_round(&self, state: &Self::State) -> u64 {
        self.rounds(state)
    }

    /// Protocol-internal safety alarm raised by the state machine itself.
    fn local_violation(&self, _state: &Self::State) -> Option<&'static str> {
        None
    }

    /// Race round for lockstep-style strategies (strong adversary only).
    fn race_round(&self, _state: &Self::State) -> Option<u64> {
        None
    }

    /// A vote that has been flipped but not yet written (strong adversary only).
    fn pending_vote(&self, _state: &Self::State) -> Option<Bit> {
        None
    }

    /// Whether the process is in the final read pass of a voting coin.
    fn in_final_scan(&self, _state: &Self::State) -> bool {
        false
    }

    /// Names of protocol-specific counters reported per trial.
    fn counter_names(&self) -> &'static [&'static str] {
        &[]
    }

    fn counters(&self, _config: &SystemConfig<Self>) -> Vec<u64>
    where
        Self: Sized,
    {
        Vec::new()
    }
}
