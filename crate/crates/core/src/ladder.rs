//! Wait-free binary consensus on a two-column ladder of marks, driven by a
//! pluggable shared coin that is invoked when a process finds itself tied.

use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::ConfigError;
use crate::model::{
    Bit, CoinBias, Ctx, Datum, NoMsg, Op, Outcome, ProtoOp, ProtoOutcome, Protocol, SystemConfig,
};

pub type CoinOp<C> = Op<NoMsg, <C as SharedCoin>::Reg, <C as SharedCoin>::Word>;
pub type CoinOutcome<C> = Outcome<NoMsg, <C as SharedCoin>::Word>;

/// A shared-coin subprotocol, one instance per ladder round.
///
/// An instance runs until [`SharedCoin::result`] is `Some`; until then
/// [`SharedCoin::next_op`] must return an operation.
pub trait SharedCoin: Send + Sync {
    type State: Datum;
    type Reg: Datum + Ord + Display;
    type Word: Datum + Default + Display;

    fn name(&self) -> &'static str;

    fn start(&self, ctx: Ctx, instance: u64) -> Self::State;

    fn next_op(&self, ctx: Ctx, state: &Self::State) -> Option<CoinOp<Self>>;

    fn on_op(&self, ctx: Ctx, state: &mut Self::State, outcome: CoinOutcome<Self>);

    fn result(&self, state: &Self::State) -> Option<Bit>;

    fn pending_vote(&self, _state: &Self::State) -> Option<Bit> {
        None
    }

    fn in_final_scan(&self, _state: &Self::State) -> bool {
        false
    }
}

/// Always returns the same bit without taking a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedCoin(pub Bit);

pub fn make_deterministic_coin(value: Bit) -> FixedCoin {
    FixedCoin(value)
}

impl SharedCoin for FixedCoin {
    type State = ();
    type Reg = crate::model::NoReg;
    type Word = crate::model::NoWord;

    fn name(&self) -> &'static str {
        "fixed"
    }

    fn start(&self, _ctx: Ctx, _instance: u64) {}

    fn next_op(&self, _ctx: Ctx, _state: &()) -> Option<CoinOp<Self>> {
        None
    }

    fn on_op(&self, _ctx: Ctx, _state: &mut (), outcome: CoinOutcome<Self>) {
        panic!("fixed coin takes no steps, got {outcome:?}");
    }

    fn result(&self, _state: &()) -> Option<Bit> {
        Some(self.0)
    }
}

/// Each process flips its own fair coin: agreement only by luck.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LocalFlipCoin;

impl SharedCoin for LocalFlipCoin {
    type State = Option<Bit>;
    type Reg = crate::model::NoReg;
    type Word = crate::model::NoWord;

    fn name(&self) -> &'static str {
        "local"
    }

    fn start(&self, _ctx: Ctx, _instance: u64) -> Option<Bit> {
        None
    }

    fn next_op(&self, _ctx: Ctx, state: &Option<Bit>) -> Option<CoinOp<Self>> {
        state.is_none().then_some(Op::Flip(CoinBias::Fair))
    }

    fn on_op(&self, _ctx: Ctx, state: &mut Option<Bit>, outcome: CoinOutcome<Self>) {
        match outcome {
            Outcome::Coin(c) => *state = Some(c),
            other => panic!("local coin expects a flip, got {other:?}"),
        }
    }

    fn result(&self, state: &Option<Bit>) -> Option<Bit> {
        *state
    }
}

/// Replaces the coin of selected instances with fixed bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundOverride<C> {
    pub inner: C,
    pub fixed: BTreeMap<u64, Bit>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OverrideState<S> {
    Fixed(Bit),
    Inner(S),
}

impl<C: SharedCoin> SharedCoin for RoundOverride<C> {
    type State = OverrideState<C::State>;
    type Reg = C::Reg;
    type Word = C::Word;

    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn start(&self, ctx: Ctx, instance: u64) -> Self::State {
        match self.fixed.get(&instance) {
            Some(&b) => OverrideState::Fixed(b),
            None => OverrideState::Inner(self.inner.start(ctx, instance)),
        }
    }

    fn next_op(&self, ctx: Ctx, state: &Self::State) -> Option<CoinOp<Self>> {
        match state {
            OverrideState::Fixed(_) => None,
            OverrideState::Inner(s) => self.inner.next_op(ctx, s),
        }
    }

    fn on_op(&self, ctx: Ctx, state: &mut Self::State, outcome: CoinOutcome<Self>) {
        match state {
            OverrideState::Fixed(_) => panic!("fixed instance takes no steps"),
            OverrideState::Inner(s) => self.inner.on_op(ctx, s, outcome),
        }
    }

    fn result(&self, state: &Self::State) -> Option<Bit> {
        match state {
            OverrideState::Fixed(b) => Some(*b),
            OverrideState::Inner(s) => self.inner.result(s),
        }
    }

    fn pending_vote(&self, state: &Self::State) -> Option<Bit> {
        match state {
            OverrideState::Fixed(_) => None,
            OverrideState::Inner(s) => self.inner.pending_vote(s),
        }
    }

    fn in_final_scan(&self, state: &Self::State) -> bool {
        match state {
            OverrideState::Fixed(_) => false,
            OverrideState::Inner(s) => self.inner.in_final_scan(s),
        }
    }
}

/// Where the opposite column stands relative to the reader.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Standing {
    Behind,
    Tied,
    Ahead,
    Clear,
}

/// Classifies the three reads of the opposite column at `r+1`, `r`, `r-1`.
pub fn ladder_classify(behind: bool, tied: bool, ahead: bool) -> Standing {
    if behind {
        Standing::Behind
    } else if tied {
        Standing::Tied
    } else if ahead {
        Standing::Ahead
    } else {
        Standing::Clear
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LadderPhase {
    WriteMark,
    ReadBehind,
    ReadTied,
    ReadAhead,
    Coin,
    Commit,
    Done,
}

/// Per-process state. Holds no process identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LadderState<S> {
    pub p: Bit,
    pub r: u64,
    pub p_prime: Bit,
    pub phase: LadderPhase,
    pub coin: Option<S>,
    pub output: Option<Bit>,
    pub coin_calls: u64,
    /// Grid operations in the current round.
    pub grid_ops: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ladder<C> {
    pub coin: C,
}

impl<C: SharedCoin> Ladder<C> {
    pub fn new(coin: C) -> Self {
        Ladder { coin }
    }

    fn settle_coin(&self, state: &mut LadderState<C::State>) {
        if let Some(b) = state.coin.as_ref().and_then(|c| self.coin.result(c)) {
            state.p_prime = b;
            state.coin = None;
            state.phase = LadderPhase::Commit;
        }
    }

    fn after_reads(&self, ctx: Ctx, state: &mut LadderState<C::State>, standing: Standing) {
        match standing {
            Standing::Behind => {
                state.p_prime = !state.p;
                state.phase = LadderPhase::Commit;
            }
            Standing::Ahead => {
                state.p_prime = state.p;
                state.phase = LadderPhase::Commit;
            }
            Standing::Tied => {
                state.coin_calls += 1;
                state.coin = Some(self.coin.start(ctx, state.r));
                state.phase = LadderPhase::Coin;
                self.settle_coin(state);
            }
            Standing::Clear => {
                state.output = Some(state.p);
                state.phase = LadderPhase::Done;
            }
        }
    }
}

impl<C: SharedCoin> Protocol for Ladder<C> {
    type Value = Bit;
    type State = LadderState<C::State>;
    type Msg = NoMsg;
    type Reg = C::Reg;
    type Word = C::Word;

    fn name(&self) -> &'static str {
        "ladder"
    }

    fn check_params(&self, n: usize, t: usize, _inputs: &[Bit]) -> Result<(), ConfigError> {
        if t >= n {
            return Err(ConfigError::WaitFreeBound { n, t });
        }
        Ok(())
    }

    fn init(&self, _ctx: Ctx, input: &Bit) -> Self::State {
        LadderState {
            p: *input,
            r: 1,
            p_prime: *input,
            phase: LadderPhase::WriteMark,
            coin: None,
            output: None,
            coin_calls: 0,
            grid_ops: 0,
        }
    }

    fn next_op(&self, ctx: Ctx, s: &Self::State) -> Option<ProtoOp<Self>> {
        let other = !s.p;
        match s.phase {
            LadderPhase::WriteMark => Some(Op::SetBit(s.p, s.r)),
            LadderPhase::ReadBehind => Some(Op::ReadBit(other, s.r + 1)),
            LadderPhase::ReadTied => Some(Op::ReadBit(other, s.r)),
            LadderPhase::ReadAhead => Some(Op::ReadBit(other, s.r - 1)),
            LadderPhase::Coin => self.coin.next_op(ctx, s.coin.as_ref()?),
            LadderPhase::Commit => Some(Op::ReadBit(s.p, s.r + 1)),
            LadderPhase::Done => None,
        }
    }

    fn on_op(&self, ctx: Ctx, s: &mut Self::State, outcome: ProtoOutcome<Self>) {
        if s.phase == LadderPhase::Coin {
            let coin = s.coin.as_mut().expect("coin phase has an instance");
            self.coin.on_op(ctx, coin, outcome);
            self.settle_coin(s);
            return;
        }
        s.grid_ops += 1;
        let bit = match outcome {
            Outcome::Bit(b) => b,
            Outcome::None => false,
            other => panic!("ladder: unexpected outcome {other:?} in {:?}", s.phase),
        };
        match s.phase {
            LadderPhase::WriteMark => s.phase = LadderPhase::ReadBehind,
            LadderPhase::ReadBehind if bit => self.after_reads(ctx, s, Standing::Behind),
            LadderPhase::ReadBehind => s.phase = LadderPhase::ReadTied,
            LadderPhase::ReadTied if bit => self.after_reads(ctx, s, Standing::Tied),
            LadderPhase::ReadTied => s.phase = LadderPhase::ReadAhead,
            LadderPhase::ReadAhead => {
                let standing = ladder_classify(false, false, bit);
                self.after_reads(ctx, s, standing);
            }
            LadderPhase::Commit => {
                if !bit {
                    s.p = s.p_prime;
                }
                s.r += 1;
                s.grid_ops = 0;
                s.phase = LadderPhase::WriteMark;
            }
            LadderPhase::Coin | LadderPhase::Done => unreachable!(),
        }
    }

    fn decision(&self, s: &Self::State) -> Option<Bit> {
        s.output
    }

    fn halted(&self, s: &Self::State) -> bool {
        s.phase == LadderPhase::Done
    }

    fn rounds(&self, s: &Self::State) -> u64 {
        s.r
    }

    fn race_round(&self, s: &Self::State) -> Option<u64> {
        Some(s.r)
    }

    fn pending_vote(&self, s: &Self::State) -> Option<Bit> {
        s.coin.as_ref().and_then(|c| self.coin.pending_vote(c))
    }

    fn in_final_scan(&self, s: &Self::State) -> bool {
        s.coin.as_ref().is_some_and(|c| self.coin.in_final_scan(c))
    }

    fn local_violation(&self, s: &Self::State) -> Option<&'static str> {
        (s.grid_ops > 5).then_some("ladder-round-budget")
    }

    fn counter_names(&self) -> &'static [&'static str] {
        &["coin_calls", "flips", "crashed"]
    }

    fn counters(&self, config: &SystemConfig<Self>) -> Vec<u64> {
        vec![
            config.procs.iter().map(|s| s.state.coin_calls).sum(),
            config.procs.iter().map(|s| s.flips).sum(),
            config.crashed() as u64,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{Adversary, RoundRobin, View};
    use crate::error::AdversaryError;
    use crate::model::{run, CoinSource, ProcessId, RunOptions};

    #[test]
    fn classify_examples() {
        assert_eq!(ladder_classify(true, false, true), Standing::Behind);
        assert_eq!(ladder_classify(true, true, false), Standing::Behind);
        assert_eq!(ladder_classify(false, false, true), Standing::Ahead);
        assert_eq!(ladder_classify(false, true, true), Standing::Tied);
        assert_eq!(ladder_classify(false, false, false), Standing::Clear);
    }

    #[test]
    fn deterministic_coin_returns_its_value() {
        let ctx = Ctx {
            me: ProcessId(0),
            n: 2,
            t: 1,
        };
        for b in Bit::ALL {
            let c = make_deterministic_coin(b);
            for r in 1..5 {
                c.start(ctx, r);
                assert_eq!(c.next_op(ctx, &()), None);
                assert_eq!(c.result(&()), Some(b));
            }
        }
    }

    #[test]
    fn override_replaces_only_selected_rounds() {
        let ctx = Ctx {
            me: ProcessId(0),
            n: 2,
            t: 1,
        };
        let coin = RoundOverride {
            inner: LocalFlipCoin,
            fixed: BTreeMap::from([(3, Bit::One)]),
        };
        assert_eq!(coin.result(&coin.start(ctx, 3)), Some(Bit::One));
        let s = coin.start(ctx, 2);
        assert_eq!(coin.result(&s), None);
        assert_eq!(coin.next_op(ctx, &s), Some(Op::Flip(CoinBias::Fair)));
    }

    #[test]
    fn solo_run_decides_in_round_two() {
        let p = Ladder::new(FixedCoin(Bit::Zero));
        let out = run(
            &p,
            1,
            0,
            &[Bit::One],
            &mut RoundRobin::new(),
            &mut CoinSource::new(0),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.report.decisions, vec![Some(Bit::One)]);
        assert_eq!(out.report.rounds, vec![2]);
        assert_eq!(out.report.total_steps, 9);
        let trace = out.trace.dump(&[]);
        assert!(trace.contains("readbit:0.0 1"), "{trace}");
    }

    #[test]
    fn tied_process_invokes_coin_for_its_round() {
        let p = Ladder::new(FixedCoin(Bit::Zero));
        let ctx = Ctx {
            me: ProcessId(0),
            n: 2,
            t: 1,
        };
        let mut s = p.init(ctx, &Bit::One);
        s.r = 4;
        s.phase = LadderPhase::ReadBehind;
        p.on_op(ctx, &mut s, Outcome::Bit(false));
        p.on_op(ctx, &mut s, Outcome::Bit(true));
        assert_eq!(s.coin_calls, 1);
        assert_eq!((s.phase, s.p_prime), (LadderPhase::Commit, Bit::Zero));
    }

    /// Runs process 0 until it decides, then process 1.
    #[derive(Clone)]
    struct SoloFirst;

    impl<P: Protocol + 'static> Adversary<P> for SoloFirst {
        fn visibility(&self) -> crate::adversary::Visibility {
            crate::adversary::Visibility::Oblivious
        }

        fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
            let choices: Vec<_> = (0..view.len()).map(|i| view.choice(i)).collect();
            choices
                .iter()
                .position(|c| !c.crash && c.actor == ProcessId(0))
                .or_else(|| choices.iter().position(|c| !c.crash))
                .ok_or(AdversaryError::NothingEnabled)
        }

        fn box_clone(&self) -> Box<dyn Adversary<P>> {
            Box::new(self.clone())
        }
    }

    #[test]
    fn late_process_follows_early_decider() {
        let p = Ladder::new(LocalFlipCoin);
        let out = run(
            &p,
            2,
            1,
            &[Bit::Zero, Bit::One],
            &mut SoloFirst,
            &mut CoinSource::new(5),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.report.decisions, vec![Some(Bit::Zero), Some(Bit::Zero)]);
        assert_eq!(out.report.rounds[0], 2);
        assert!(out.report.is_safe());
    }
}
