//! Chor-Israeli-Li race consensus over single-writer registers.
//!
//! Each pass writes `(preference, round)`, collects all registers with `n`
//! sequential reads, and either decides, follows the leaders, or advances
//! with probability `1/(2n)`.

use std::fmt;
use std::marker::PhantomData;

use thiserror::Error;

use crate::error::ConfigError;
use crate::model::{
    Bit, CoinBias, Ctx, NoMsg, Op, Outcome, ProcessId, ProtoOp, ProtoOutcome, Protocol,
    SystemConfig, Value,
};

/// A register's contents; unwritten registers are `(⊥, 0)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CilRegister<V> {
    pub preference: Option<V>,
    pub round: u64,
}

impl<V> Default for CilRegister<V> {
    fn default() -> Self {
        CilRegister {
            preference: None,
            round: 0,
        }
    }
}

impl<V> CilRegister<V> {
    pub fn new(preference: V, round: u64) -> Self {
        CilRegister {
            preference: Some(preference),
            round,
        }
    }
}

impl<V: fmt::Display> fmt::Display for CilRegister<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.preference {
            Some(v) => write!(f, "{v}@{}", self.round),
            None => write!(f, "_@{}", self.round),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evaluation<V> {
    Decide(V),
    Continue(V),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot evaluate an empty view")]
pub struct EmptyView;

/// The win test and the follower rule over one collected view.
pub fn cil_evaluate<V: Clone + Eq>(
    view: &[CilRegister<V>],
    preference: &V,
) -> Result<Evaluation<V>, EmptyView> {
    let maxround = view.iter().map(|r| r.round).max().ok_or(EmptyView)?;
    let unanimous = |floor: u64| -> Option<V> {
        let mut it = view
            .iter()
            .filter(|r| r.round >= floor)
            .map(|r| r.preference.as_ref());
        let first = it.next()??;
        it.all(|p| p == Some(first)).then(|| first.clone())
    };
    if let Some(v) = unanimous(maxround.saturating_sub(1)) {
        return Ok(Evaluation::Decide(v));
    }
    let leaders = view
        .iter()
        .filter(|r| r.round == maxround)
        .map(|r| r.preference.as_ref())
        .collect::<Vec<_>>();
    match leaders.first() {
        Some(Some(v)) if leaders.iter().all(|p| p == &Some(*v)) => {
            Ok(Evaluation::Continue((*v).clone()))
        }
        _ => Ok(Evaluation::Continue(preference.clone())),
    }
}

/// New round after an advancement flip.
pub fn cil_advance(round: u64, maxround: u64, coin: Bit) -> u64 {
    if coin.is_one() {
        (round + 1).max(maxround.saturating_sub(2))
    } else {
        round
    }
}

/// Bias of the advancement flip: 1 with probability `1/(2n)`.
pub fn advancement_bias(n: usize) -> CoinBias {
    CoinBias::OneIn(2 * n as u64)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CilPhase {
    Write,
    Collect(usize),
    /// Advancement flip, fused with the next write on the atomic substrate.
    Advance {
        maxround: u64,
    },
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CilState<V> {
    pub preference: V,
    pub round: u64,
    pub view: Vec<CilRegister<V>>,
    pub phase: CilPhase,
    /// Completed collects.
    pub passes: u64,
    pub advances: u64,
    pub output: Option<V>,
}

/// The protocol; `atomic` selects the fused flip-and-write substrate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cil<V> {
    pub atomic: bool,
    _values: PhantomData<fn() -> V>,
}

impl<V> Cil<V> {
    pub fn new(atomic: bool) -> Self {
        Cil {
            atomic,
            _values: PhantomData,
        }
    }

    pub fn atomic() -> Self {
        Self::new(true)
    }

    pub fn split() -> Self {
        Self::new(false)
    }
}

impl<V: Value> Cil<V> {
    fn evaluate(&self, state: &mut CilState<V>) {
        let view = std::mem::take(&mut state.view);
        let maxround = view.iter().map(|r| r.round).max().unwrap_or(0);
        match cil_evaluate(&view, &state.preference).expect("a full collect is non-empty") {
            Evaluation::Decide(v) => {
                state.output = Some(v);
                state.phase = CilPhase::Done;
            }
            Evaluation::Continue(v) => {
                state.preference = v;
                state.phase = CilPhase::Advance { maxround };
            }
        }
    }
}

impl<V: Value> Protocol for Cil<V> {
    type Value = V;
    type State = CilState<V>;
    type Msg = NoMsg;
    type Reg = ProcessId;
    type Word = CilRegister<V>;

    fn name(&self) -> &'static str {
        "cil"
    }

    fn check_params(&self, n: usize, t: usize, _inputs: &[V]) -> Result<(), ConfigError> {
        if t >= n {
            return Err(ConfigError::WaitFreeBound { n, t });
        }
        Ok(())
    }

    fn init(&self, _ctx: Ctx, input: &V) -> CilState<V> {
        CilState {
            preference: input.clone(),
            round: 1,
            view: Vec::new(),
            phase: CilPhase::Write,
            passes: 0,
            advances: 0,
            output: None,
        }
    }

    fn next_op(&self, ctx: Ctx, state: &CilState<V>) -> Option<ProtoOp<Self>> {
        match state.phase {
            CilPhase::Write => Some(Op::Write(
                ctx.me,
                CilRegister::new(state.preference.clone(), state.round),
            )),
            CilPhase::Collect(i) => Some(Op::Read(ProcessId(i))),
            CilPhase::Advance { maxround } if self.atomic => Some(Op::FlipAndWrite {
                reg: ctx.me,
                bias: advancement_bias(ctx.n),
                if_zero: CilRegister::new(
                    state.preference.clone(),
                    cil_advance(state.round, maxround, Bit::Zero),
                ),
                if_one: CilRegister::new(
                    state.preference.clone(),
                    cil_advance(state.round, maxround, Bit::One),
                ),
            }),
            CilPhase::Advance { .. } => Some(Op::Flip(advancement_bias(ctx.n))),
            CilPhase::Done => None,
        }
    }

    fn on_op(&self, ctx: Ctx, state: &mut CilState<V>, outcome: ProtoOutcome<Self>) {
        match (&state.phase, outcome) {
            (CilPhase::Write, Outcome::None) => state.phase = CilPhase::Collect(0),
            (CilPhase::Collect(i), Outcome::Read(word)) => {
                let i = *i;
                state.view.push(word);
                if i + 1 == ctx.n {
                    state.passes += 1;
                    self.evaluate(state);
                } else {
                    state.phase = CilPhase::Collect(i + 1);
                }
            }
            (CilPhase::Advance { maxround }, Outcome::Coin(c)) => {
                let next = cil_advance(state.round, *maxround, c);
                if next != state.round {
                    state.advances += 1;
                }
                state.round = next;
                state.phase = if self.atomic {
                    CilPhase::Collect(0)
                } else {
                    CilPhase::Write
                };
            }
            (phase, outcome) => panic!("cil: unexpected outcome {outcome:?} in {phase:?}"),
        }
    }

    fn decision(&self, state: &CilState<V>) -> Option<V> {
        state.output.clone()
    }

    fn halted(&self, state: &CilState<V>) -> bool {
        state.phase == CilPhase::Done
    }

    fn rounds(&self, state: &CilState<V>) -> u64 {
        state.passes
    }

    fn current_round(&self, state: &CilState<V>) -> u64 {
        state.round
    }

    fn race_round(&self, state: &CilState<V>) -> Option<u64> {
        Some(state.round)
    }

    fn counter_names(&self) -> &'static [&'static str] {
        &["passes", "advances", "max_round", "crashed"]
    }

    fn counters(&self, config: &SystemConfig<Self>) -> Vec<u64> {
        let states = || config.procs.iter().map(|s| &s.state);
        vec![
            states().map(|s| s.passes).sum(),
            states().map(|s| s.advances).sum(),
            states().map(|s| s.round).max().unwrap_or(0),
            config.crashed() as u64,
        ]
    }
}
