//! Bracha-Rachman weak shared coin: processes write batches of local votes to
//! their own registers, stop once more than `n²` votes are visible, and output
//! the majority of a fresh final scan.

use std::fmt;

use crate::error::ConfigError;
use crate::ladder::{CoinOp, CoinOutcome, SharedCoin};
use crate::model::{
    Action, Bit, CoinBias, Ctx, NoMsg, Op, Outcome, ProcessId, ProtoOp, ProtoOutcome, Protocol,
    ProtocolKind, SystemConfig, TraceEntry,
};

/// `(flips, ones)` published by one process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct VoteRegister {
    pub flips: u64,
    pub ones: u64,
}

impl VoteRegister {
    pub fn with_vote(self, c: Bit) -> Self {
        VoteRegister {
            flips: self.flips + 1,
            ones: self.ones + u64::from(c.is_one()),
        }
    }
}

impl fmt::Display for VoteRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.flips, self.ones)
    }
}

/// Register of `owner` in coin instance `instance`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoinReg {
    pub instance: u64,
    pub owner: ProcessId,
}

impl fmt::Display for CoinReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}.{}", self.instance, self.owner)
    }
}

/// Votes per batch: `n / log₂ n`, at least 1.
pub fn batch_size(n: usize) -> u64 {
    if n <= 2 {
        return n.max(1) as u64;
    }
    let log = f64::from(n as u32).log2();
    ((n as f64 / log).floor() as u64).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanVerdict {
    Continue,
    Finish,
}

pub fn br_termination_scan(view: &[VoteRegister], n: usize) -> ScanVerdict {
    let total: u64 = view.iter().map(|r| r.flips).sum();
    if total > (n * n) as u64 {
        ScanVerdict::Finish
    } else {
        ScanVerdict::Continue
    }
}

/// 1 iff at least half of the visible votes are ones.
pub fn br_output(view: &[VoteRegister]) -> Bit {
    let total: u64 = view.iter().map(|r| r.flips).sum();
    let ones: u64 = view.iter().map(|r| r.ones).sum();
    Bit::from(2 * ones >= total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BrPhase {
    Voting,
    /// Flipped `c`; the write is pending.
    Publish(Bit),
    Scanning(usize),
    FinalScan(usize),
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BrState {
    pub instance: u64,
    /// Mirror of the process's own register.
    pub mine: VoteRegister,
    pub batch_remaining: u64,
    pub phase: BrPhase,
    pub scan_total: u64,
    pub scan_ones: u64,
    pub scans: u64,
    pub output: Option<Bit>,
}

/// The voting coin as a subprotocol.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BrCoin;

impl SharedCoin for BrCoin {
    type State = BrState;
    type Reg = CoinReg;
    type Word = VoteRegister;

    fn name(&self) -> &'static str {
        "br"
    }

    fn start(&self, ctx: Ctx, instance: u64) -> BrState {
        BrState {
            instance,
            mine: VoteRegister::default(),
            batch_remaining: batch_size(ctx.n),
            phase: BrPhase::Voting,
            scan_total: 0,
            scan_ones: 0,
            scans: 0,
            output: None,
        }
    }

    fn next_op(&self, ctx: Ctx, s: &BrState) -> Option<CoinOp<Self>> {
        let reg = |owner| CoinReg {
            instance: s.instance,
            owner,
        };
        match s.phase {
            BrPhase::Voting => Some(Op::Flip(CoinBias::Fair)),
            BrPhase::Publish(c) => Some(Op::Write(reg(ctx.me), s.mine.with_vote(c))),
            BrPhase::Scanning(i) | BrPhase::FinalScan(i) => Some(Op::Read(reg(ProcessId(i)))),
            BrPhase::Output => None,
        }
    }

    fn on_op(&self, ctx: Ctx, s: &mut BrState, outcome: CoinOutcome<Self>) {
        match (s.phase, outcome) {
            (BrPhase::Voting, Outcome::Coin(c)) => s.phase = BrPhase::Publish(c),
            (BrPhase::Publish(c), Outcome::None) => {
                s.mine = s.mine.with_vote(c);
                s.batch_remaining -= 1;
                s.phase = if s.batch_remaining == 0 {
                    s.scan_total = 0;
                    BrPhase::Scanning(0)
                } else {
                    BrPhase::Voting
                };
            }
            (BrPhase::Scanning(i), Outcome::Read(r)) => {
                s.scan_total += r.flips;
                if i + 1 < ctx.n {
                    s.phase = BrPhase::Scanning(i + 1);
                    return;
                }
                s.scans += 1;
                let total = VoteRegister {
                    flips: s.scan_total,
                    ones: 0,
                };
                s.phase = match br_termination_scan(&[total], ctx.n) {
                    ScanVerdict::Finish => BrPhase::FinalScan(0),
                    ScanVerdict::Continue => {
                        s.batch_remaining = batch_size(ctx.n);
                        BrPhase::Voting
                    }
                };
                s.scan_total = 0;
                s.scan_ones = 0;
            }
            (BrPhase::FinalScan(i), Outcome::Read(r)) => {
                s.scan_total += r.flips;
                s.scan_ones += r.ones;
                if i + 1 < ctx.n {
                    s.phase = BrPhase::FinalScan(i + 1);
                    return;
                }
                let seen = VoteRegister {
                    flips: s.scan_total,
                    ones: s.scan_ones,
                };
                s.output = Some(br_output(&[seen]));
                s.phase = BrPhase::Output;
            }
            (phase, outcome) => panic!("br coin: unexpected outcome {outcome:?} in {phase:?}"),
        }
    }

    fn result(&self, s: &BrState) -> Option<Bit> {
        s.output
    }

    fn pending_vote(&self, s: &BrState) -> Option<Bit> {
        match s.phase {
            BrPhase::Publish(c) => Some(c),
            _ => None,
        }
    }

    fn in_final_scan(&self, s: &BrState) -> bool {
        matches!(s.phase, BrPhase::FinalScan(_))
    }
}

/// One coin instance run on its own as an `n`-process protocol. Inputs are
/// ignored; each process's output is its coin value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BrCoinProtocol;

impl Protocol for BrCoinProtocol {
    type Value = Bit;
    type State = BrState;
    type Msg = NoMsg;
    type Reg = CoinReg;
    type Word = VoteRegister;

    fn name(&self) -> &'static str {
        "br-coin"
    }

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Coin
    }

    fn check_params(&self, n: usize, t: usize, _inputs: &[Bit]) -> Result<(), ConfigError> {
        if t >= n {
            return Err(ConfigError::WaitFreeBound { n, t });
        }
        Ok(())
    }

    fn init(&self, ctx: Ctx, _input: &Bit) -> BrState {
        BrCoin.start(ctx, 0)
    }

    fn next_op(&self, ctx: Ctx, s: &BrState) -> Option<ProtoOp<Self>> {
        BrCoin.next_op(ctx, s)
    }

    fn on_op(&self, ctx: Ctx, s: &mut BrState, outcome: ProtoOutcome<Self>) {
        BrCoin.on_op(ctx, s, outcome)
    }

    fn decision(&self, s: &BrState) -> Option<Bit> {
        s.output
    }

    fn halted(&self, s: &BrState) -> bool {
        s.phase == BrPhase::Output
    }

    fn rounds(&self, s: &BrState) -> u64 {
        s.scans
    }

    fn pending_vote(&self, s: &BrState) -> Option<Bit> {
        BrCoin.pending_vote(s)
    }

    fn in_final_scan(&self, s: &BrState) -> bool {
        BrCoin.in_final_scan(s)
    }

    fn counter_names(&self) -> &'static [&'static str] {
        &["flips", "written_flips", "written_ones", "crashed"]
    }

    fn counters(&self, config: &SystemConfig<Self>) -> Vec<u64> {
        vec![
            config.procs.iter().map(|s| s.flips).sum(),
            config.registers.values().map(|r| r.flips).sum(),
            config.registers.values().map(|r| r.ones).sum(),
            config.crashed() as u64,
        ]
    }
}

/// Outcome of a coin trial: the bit every live process output, or a split.
pub fn coin_outcome(decisions: &[Option<Bit>], crashed: &[bool]) -> Option<Bit> {
    let mut live = decisions
        .iter()
        .zip(crashed)
        .filter(|(_, c)| !**c)
        .map(|(d, _)| *d);
    let first = live.next()??;
    live.all(|d| d == Some(first)).then_some(first)
}

/// Checks the vote accounting of a standalone coin run, one step at a time,
/// using only the trace and the shared registers.
#[derive(Clone, Debug)]
pub struct VoteAudit {
    n: usize,
    batch: u64,
    hidden: Vec<u32>,
    max_hidden: u32,
    generated: u64,
    threshold_crossed: bool,
    common: Option<u64>,
    post_threshold_writes: Vec<u64>,
    crashed: bool,
    violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub max_hidden: u32,
    pub max_post_threshold_writes: u64,
    /// Votes generated before the written total first exceeded `n²`.
    pub common_votes: Option<u64>,
    pub crash_free: bool,
    pub violations: Vec<String>,
}

impl VoteAudit {
    pub fn new(n: usize) -> Self {
        VoteAudit {
            n,
            batch: batch_size(n),
            hidden: vec![0; n],
            max_hidden: 0,
            generated: 0,
            threshold_crossed: false,
            common: None,
            post_threshold_writes: vec![0; n],
            crashed: false,
            violations: Vec::new(),
        }
    }

    pub fn observe(
        &mut self,
        config: &SystemConfig<BrCoinProtocol>,
        entry: &TraceEntry<BrCoinProtocol>,
    ) {
        let p = entry.step.actor.index();
        match &entry.step.action {
            Action::Flip(_) => {
                self.generated += 1;
                self.hidden[p] += 1;
                self.max_hidden = self.max_hidden.max(self.hidden[p]);
                if self.hidden[p] > 1 {
                    self.violations.push(format!(
                        "{} holds {} hidden votes",
                        entry.step.actor, self.hidden[p]
                    ));
                }
            }
            Action::Write(..) => {
                self.hidden[p] = self.hidden[p].saturating_sub(1);
                if self.threshold_crossed {
                    self.post_threshold_writes[p] += 1;
                    if self.post_threshold_writes[p] > self.batch {
                        self.violations.push(format!(
                            "{} wrote {} votes after the threshold",
                            entry.step.actor, self.post_threshold_writes[p]
                        ));
                    }
                } else {
                    let written: u64 = config.registers.values().map(|r| r.flips).sum();
                    if written > (self.n * self.n) as u64 {
                        self.threshold_crossed = true;
                        self.common = Some(self.generated);
                    }
                }
            }
            Action::Crash => self.crashed = true,
            _ => {}
        }
    }

    pub fn finish(mut self) -> AuditReport {
        let nn = (self.n * self.n) as u64;
        if let (false, Some(c)) = (self.crashed, self.common) {
            if c < nn + 1 || c > nn + self.n as u64 {
                self.violations.push(format!(
                    "{c} common votes outside [{}, {}]",
                    nn + 1,
                    nn + self.n as u64
                ));
            }
        }
        AuditReport {
            max_hidden: self.max_hidden,
            max_post_threshold_writes: self
                .post_threshold_writes
                .iter()
                .copied()
                .max()
                .unwrap_or(0),
            common_votes: self.common,
            crash_free: !self.crashed,
            violations: self.violations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{RoundRobin, UniformRandom, VoteHider};
    use crate::model::{run_observed, CoinSource, RunOptions};

    #[test]
    fn batch_size_examples() {
        assert_eq!(batch_size(16), 4);
        assert_eq!(batch_size(2), 2);
        assert_eq!(batch_size(1), 1);
        assert_eq!(batch_size(8), 2);
        assert_eq!(batch_size(4), 2);
    }

    #[test]
    fn vote_examples() {
        let r = VoteRegister { flips: 4, ones: 2 };
        assert_eq!(r.with_vote(Bit::One), VoteRegister { flips: 5, ones: 3 });
        assert_eq!(
            VoteRegister::default().with_vote(Bit::Zero),
            VoteRegister { flips: 1, ones: 0 }
        );
    }

    #[test]
    fn termination_scan_examples() {
        let v = |f: &[u64]| {
            f.iter()
                .map(|&flips| VoteRegister { flips, ones: 0 })
                .collect::<Vec<_>>()
        };
        assert_eq!(
            br_termination_scan(&v(&[3, 3, 3]), 3),
            ScanVerdict::Continue
        );
        assert_eq!(br_termination_scan(&v(&[4, 3, 3]), 3), ScanVerdict::Finish);
        assert_eq!(br_termination_scan(&v(&[2]), 1), ScanVerdict::Finish);
    }

    #[test]
    fn output_examples() {
        let one = |flips, ones| vec![VoteRegister { flips, ones }];
        assert_eq!(br_output(&one(5, 3)), Bit::One);
        assert_eq!(br_output(&one(4, 2)), Bit::One);
        assert_eq!(br_output(&one(9, 4)), Bit::Zero);
    }

    #[test]
    fn vote_is_flip_then_separate_write() {
        let ctx = Ctx {
            me: ProcessId(1),
            n: 3,
            t: 2,
        };
        let mut s = BrCoin.start(ctx, 7);
        assert_eq!(BrCoin.next_op(ctx, &s), Some(Op::Flip(CoinBias::Fair)));
        BrCoin.on_op(ctx, &mut s, Outcome::Coin(Bit::One));
        assert_eq!(BrCoin.pending_vote(&s), Some(Bit::One));
        assert_eq!(
            BrCoin.next_op(ctx, &s),
            Some(Op::Write(
                CoinReg {
                    instance: 7,
                    owner: ProcessId(1)
                },
                VoteRegister { flips: 1, ones: 1 }
            ))
        );
    }

    fn audited(
        n: usize,
        t: usize,
        adv: &mut dyn crate::adversary::Adversary<BrCoinProtocol>,
        seed: u64,
    ) -> AuditReport {
        let mut audit = VoteAudit::new(n);
        let out = run_observed(
            &BrCoinProtocol,
            n,
            t,
            &vec![Bit::Zero; n],
            adv,
            &mut CoinSource::new(seed),
            &RunOptions::default(),
            &mut |c, e| audit.observe(c, e),
        )
        .unwrap();
        assert!(out.report.terminated);
        audit.finish()
    }

    #[test]
    fn audit_holds_under_several_schedules() {
        for seed in 0..5 {
            for r in [
                audited(4, 0, &mut RoundRobin::new(), seed),
                audited(5, 0, &mut UniformRandom::new(seed), seed),
                audited(4, 0, &mut VoteHider::new(Bit::One, false, seed), seed),
            ] {
                assert!(r.violations.is_empty(), "{:?}", r.violations);
                assert!(r.max_hidden <= 1);
                assert!(r.common_votes.is_some());
            }
        }
    }

    #[test]
    fn coin_outcome_requires_all_live_processes() {
        assert_eq!(
            coin_outcome(&[Some(Bit::One), None], &[false, true]),
            Some(Bit::One)
        );
        assert_eq!(
            coin_outcome(&[Some(Bit::One), Some(Bit::Zero)], &[false, false]),
            None
        );
    }
}
