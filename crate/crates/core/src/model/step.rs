//! The step grammar shared by both communication substrates.

use std::fmt;

use super::ids::{Bit, MsgId, ProcessId};

/// Distribution of a single flip operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoinBias {
    /// A fair bit.
    Fair,
    /// Returns 1 with probability `1/m`.
    OneIn(u64),
}

impl fmt::Display for CoinBias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoinBias::Fair => f.write_str("fair"),
            CoinBias::OneIn(m) => write!(f, "1in{m}"),
        }
    }
}

/// Recipients of a send.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dest {
    To(ProcessId),
    /// One copy to every process, the sender included, in a single step.
    All,
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::To(p) => write!(f, "{p}"),
            Dest::All => f.write_str("all"),
        }
    }
}

/// The next local operation a process wants to perform.
///
/// A process has at most one pending operation at a time; message deliveries are
/// not operations of the receiver and are offered separately by the engine.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op<M, R, W> {
    Send {
        to: Dest,
        msg: M,
    },
    Read(R),
    Write(R, W),
    SetBit(Bit, u64),
    ReadBit(Bit, u64),
    Flip(CoinBias),
    /// Flip and publish the outcome in one atomic step. The written word is
    /// `if_zero` or `if_one` depending on the flip.
    FlipAndWrite {
        reg: R,
        bias: CoinBias,
        if_zero: W,
        if_one: W,
    },
    Local,
}

/// One element of the step grammar.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action<M, R, W> {
    Send {
        to: Dest,
        msg: M,
    },
    Deliver(MsgId),
    Read(R),
    Write(R, W),
    SetBit(Bit, u64),
    ReadBit(Bit, u64),
    Flip(CoinBias),
    FlipAndWrite {
        reg: R,
        bias: CoinBias,
        if_zero: W,
        if_one: W,
    },
    Local,
    /// Adversary pseudo-step that permanently stops the actor.
    Crash,
}

impl<M, R, W> From<Op<M, R, W>> for Action<M, R, W> {
    fn from(op: Op<M, R, W>) -> Self {
        match op {
            Op::Send { to, msg } => Action::Send { to, msg },
            Op::Read(r) => Action::Read(r),
            Op::Write(r, w) => Action::Write(r, w),
            Op::SetBit(b, i) => Action::SetBit(b, i),
            Op::ReadBit(b, i) => Action::ReadBit(b, i),
            Op::Flip(bias) => Action::Flip(bias),
            Op::FlipAndWrite {
                reg,
                bias,
                if_zero,
                if_one,
            } => Action::FlipAndWrite {
                reg,
                bias,
                if_zero,
                if_one,
            },
            Op::Local => Action::Local,
        }
    }
}

impl<M, R, W> Action<M, R, W> {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Send { .. } => ActionKind::Send,
            Action::Deliver(_) => ActionKind::Deliver,
            Action::Read(_) => ActionKind::Read,
            Action::Write(..) => ActionKind::Write,
            Action::SetBit(..) => ActionKind::SetBit,
            Action::ReadBit(..) => ActionKind::ReadBit,
            Action::Flip(_) => ActionKind::Flip,
            Action::FlipAndWrite { .. } => ActionKind::FlipAndWrite,
            Action::Local => ActionKind::Local,
            Action::Crash => ActionKind::Crash,
        }
    }

    pub fn is_flip(&self) -> bool {
        matches!(self, Action::Flip(_) | Action::FlipAndWrite { .. })
    }
}

impl<M: fmt::Display, R: fmt::Display, W: fmt::Display> fmt::Display for Action<M, R, W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Send { to, msg } => write!(f, "send:{to}:{msg}"),
            Action::Deliver(id) => write!(f, "deliver:{id}"),
            Action::Read(r) => write!(f, "read:{r}"),
            Action::Write(r, w) => write!(f, "write:{r}={w}"),
            Action::SetBit(b, i) => write!(f, "setbit:{b}.{i}"),
            Action::ReadBit(b, i) => write!(f, "readbit:{b}.{i}"),
            Action::Flip(bias) => write!(f, "flip:{bias}"),
            Action::FlipAndWrite {
                reg,
                bias,
                if_zero,
                if_one,
            } => write!(f, "flipwrite:{reg}:{bias}:{if_zero}|{if_one}"),
            Action::Local => f.write_str("local"),
            Action::Crash => f.write_str("crash"),
        }
    }
}

/// Action with all parameters erased.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Send,
    Deliver,
    Read,
    Write,
    SetBit,
    ReadBit,
    Flip,
    FlipAndWrite,
    Local,
    Crash,
}

/// A step: exactly one actor and one action.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step<M, R, W> {
    pub actor: ProcessId,
    pub action: Action<M, R, W>,
}

impl<M, R, W> Step<M, R, W> {
    pub fn new(actor: ProcessId, action: Action<M, R, W>) -> Self {
        Step { actor, action }
    }

    pub fn crash(actor: ProcessId) -> Self {
        Step {
            actor,
            action: Action::Crash,
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self.action, Action::Crash)
    }

    /// Content-free projection used by weak adversaries.
    pub fn shape(&self) -> StepShape {
        StepShape {
            actor: self.actor,
            kind: self.action.kind(),
            msg: match &self.action {
                Action::Deliver(id) => Some(*id),
                _ => None,
            },
        }
    }
}

impl<M: fmt::Display, R: fmt::Display, W: fmt::Display> fmt::Display for Step<M, R, W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.actor, self.action)
    }
}

/// What a content-oblivious adversary may see of a step: who acted, which kind
/// of operation, and (for deliveries) which message, but no payloads, register
/// names, written values, or results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepShape {
    pub actor: ProcessId,
    pub kind: ActionKind,
    pub msg: Option<MsgId>,
}

/// Observable result of an applied step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Outcome<M, W> {
    None,
    /// Message handed to the recipient, together with its sender.
    Delivered(ProcessId, M),
    Read(W),
    Bit(bool),
    Coin(Bit),
}

impl<M: fmt::Display, W: fmt::Display> fmt::Display for Outcome<M, W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::None => f.write_str("-"),
            Outcome::Delivered(from, m) => write!(f, "{from}>{m}"),
            Outcome::Read(w) => write!(f, "{w}"),
            Outcome::Bit(b) => write!(f, "{}", u8::from(*b)),
            Outcome::Coin(c) => write!(f, "{c}"),
        }
    }
}
