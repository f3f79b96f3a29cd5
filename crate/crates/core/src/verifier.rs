//! Bounded exhaustive exploration and trial statistics.
//!
//! [`explore`] enumerates every adversary choice (including crash
//! placements within the fault budget) and every coin outcome from the
//! initial configuration, up to a round cap, checking agreement, validity,
//! irrevocability, protocol alarms, and caller-supplied invariants at every
//! reached configuration.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use rustc_hash::FxHashMap;
use serde::Serialize;
use xxhash_rust::xxh3::xxh3_128;

use crate::adversary::{Adversary, StrategyConfig};
use crate::error::{ExploreError, StatsError, TraceError};
use crate::model::{
    apply_step, build_view, check_safety, enabled_steps_capped, initial_config, Bit, CoinOracle,
    ExecutionTrace, FixedCoins, ForcedCoin, Outcome, ProcessId, Protocol, StepOf, SystemConfig,
    TrialReport, ViolationKind,
};

/// Largest supported per-path coin budget for [`CoinUniverse::EnumerateAll`].
pub const MAX_COIN_BUDGET: u32 = 20;

#[derive(Clone, Debug)]
pub enum CoinUniverse {
    /// Branch on both outcomes of every flip; at most `budget` flips per path.
    EnumerateAll { budget: u32 },
    /// A single fixed assignment by (process, draw index).
    FixedAssignment(FixedCoins),
}

#[derive(Clone, Debug)]
pub enum ScheduleUniverse {
    AllSchedules,
    /// Only the schedules these strategies produce (coins still branch).
    StrategySet(Vec<StrategyConfig>),
}

#[derive(Clone, Debug)]
pub struct ExploreBounds {
    /// Processes past this round are frozen.
    pub max_rounds: u64,
    /// Longest path allowed before the exploration is refused.
    pub max_steps: u64,
    pub coins: CoinUniverse,
    pub schedules: ScheduleUniverse,
    /// Distinct configurations allowed before the exploration is refused.
    pub node_budget: u64,
    /// Share work between identical configurations reached along different paths.
    pub memoize: bool,
}

impl ExploreBounds {
    pub fn new(max_rounds: u64) -> Self {
        ExploreBounds {
            max_rounds,
            max_steps: 10_000,
            coins: CoinUniverse::EnumerateAll {
                budget: MAX_COIN_BUDGET,
            },
            schedules: ScheduleUniverse::AllSchedules,
            node_budget: 50_000_000,
            memoize: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Checked at every reached configuration.
    State,
    /// Checked where an execution ends: no process can take a non-crash step.
    Leaf,
}

type Check<P> = dyn Fn(&P, &SystemConfig<P>) -> bool + Send + Sync;

/// A named predicate that must hold; failures are reported as
/// [`ViolationKind::InvariantViolation`].
pub struct Invariant<P: Protocol> {
    pub name: String,
    pub scope: Scope,
    check: Box<Check<P>>,
}

impl<P: Protocol> Invariant<P> {
    pub fn new(
        name: impl Into<String>,
        scope: Scope,
        check: impl Fn(&P, &SystemConfig<P>) -> bool + Send + Sync + 'static,
    ) -> Self {
        Invariant {
            name: name.into(),
            scope,
            check: Box::new(check),
        }
    }
}

/// A safety failure with the execution that reaches it.
pub struct ViolationReport<P: Protocol> {
    pub kind: ViolationKind,
    pub witness: ExecutionTrace<P>,
}

impl<P: Protocol> fmt::Debug for ViolationReport<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ViolationReport")
            .field("kind", &self.kind)
            .field("witness_len", &self.witness.len())
            .finish()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    /// Distinct configurations expanded.
    pub states: u64,
    /// Complete executions (root-to-leaf paths), counted through shared
    /// subtrees. Saturates at `u128::MAX`.
    pub executions: u128,
    pub max_depth: u64,
    /// Distinct leaf configurations by the set of values decided there, e.g.
    /// `"0"`, `"0,1"`, or `"-"`.
    pub leaf_outcomes: BTreeMap<String, u64>,
}

#[derive(Debug)]
pub enum Verdict<P: Protocol> {
    Exhausted(ExploreStats),
    Violation(ViolationReport<P>),
}

impl<P: Protocol> Verdict<P> {
    pub fn is_exhausted(&self) -> bool {
        matches!(self, Verdict::Exhausted(_))
    }

    pub fn stats(&self) -> Option<&ExploreStats> {
        match self {
            Verdict::Exhausted(s) => Some(s),
            Verdict::Violation(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&ViolationReport<P>> {
        match self {
            Verdict::Violation(v) => Some(v),
            Verdict::Exhausted(_) => None,
        }
    }
}

/// 128-bit XXH3 fingerprint of a configuration.
pub fn fingerprint<P: Protocol>(config: &SystemConfig<P>) -> u128 {
    thread_local! {
        static BUF: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
    }
    BUF.with_borrow_mut(|buf| {
        buf.clear();
        config.hash(&mut ByteSink(buf));
        xxh3_128(buf)
    })
}

/// Collects the byte stream of a `Hash` impl so it can be digested in one pass.
struct ByteSink<'a>(&'a mut Vec<u8>);

impl Hasher for ByteSink<'_> {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }

    #[inline]
    fn write_u8(&mut self, i: u8) {
        self.0.push(i);
    }

    #[inline]
    fn write_u32(&mut self, i: u32) {
        self.0.extend_from_slice(&i.to_le_bytes());
    }

    #[inline]
    fn write_u64(&mut self, i: u64) {
        self.0.extend_from_slice(&i.to_le_bytes());
    }

    #[inline]
    fn write_usize(&mut self, i: usize) {
        self.0.extend_from_slice(&(i as u64).to_le_bytes());
    }

    fn finish(&self) -> u64 {
        unreachable!("digested with xxh3_128")
    }
}

/// Explores with the built-in safety checks only.
pub fn explore<P: Protocol + 'static>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
    bounds: &ExploreBounds,
) -> Result<Verdict<P>, ExploreError> {
    explore_with(protocol, n, t, inputs, bounds, &[])
}

/// Explores and additionally checks `invariants`.
pub fn explore_with<P: Protocol + 'static>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
    bounds: &ExploreBounds,
    invariants: &[Invariant<P>],
) -> Result<Verdict<P>, ExploreError> {
    if let CoinUniverse::EnumerateAll { budget } = bounds.coins {
        if budget > MAX_COIN_BUDGET {
            return Err(ExploreError::CoinBudgetTooLarge(budget));
        }
    }
    let root = initial_config(protocol, n, t, inputs)?;
    let mut ex = Explorer {
        protocol,
        bounds,
        invariants,
        stats: ExploreStats::default(),
    };
    if let Some(kind) = ex.violation(&root, &[]) {
        return Ok(Verdict::Violation(ViolationReport {
            kind,
            witness: ExecutionTrace::new(),
        }));
    }
    let outcome = match &bounds.schedules {
        ScheduleUniverse::AllSchedules => ex.all_schedules(root)?,
        ScheduleUniverse::StrategySet(strategies) => {
            let mut found = None;
            for (i, s) in strategies.iter().enumerate() {
                let adversary = s.build::<P>(i as u64);
                if let Some(v) = ex.strategy(root.clone(), adversary)? {
                    found = Some(v);
                    break;
                }
            }
            found
        }
    };
    Ok(match outcome {
        Some(v) => Verdict::Violation(v),
        None => Verdict::Exhausted(ex.stats),
    })
}

/// Coin oracle for one explored step.
enum StepCoin<'a> {
    Forced(ForcedCoin),
    Fixed(&'a mut FixedCoins),
}

impl CoinOracle for StepCoin<'_> {
    fn flip(&mut self, p: ProcessId, k: u64, bias: crate::model::CoinBias) -> Bit {
        match self {
            StepCoin::Forced(c) => c.flip(p, k, bias),
            StepCoin::Fixed(c) => c.flip(p, k, bias),
        }
    }
}

struct Frame<P: Protocol> {
    config: SystemConfig<P>,
    fp: u128,
    children: Vec<(StepOf<P>, Option<Bit>)>,
    next: usize,
    paths: u128,
    flips: u32,
}

struct Explorer<'a, P: Protocol> {
    protocol: &'a P,
    bounds: &'a ExploreBounds,
    invariants: &'a [Invariant<P>],
    stats: ExploreStats,
}

impl<P: Protocol + 'static> Explorer<'_, P> {
    fn enabled(&self, config: &SystemConfig<P>) -> Vec<StepOf<P>> {
        let steps = enabled_steps_capped(self.protocol, config, Some(self.bounds.max_rounds));
        if steps.iter().all(|s| s.is_crash()) {
            Vec::new()
        } else {
            steps
        }
    }

    fn branches(&self, steps: Vec<StepOf<P>>) -> Vec<(StepOf<P>, Option<Bit>)> {
        let enumerate = matches!(self.bounds.coins, CoinUniverse::EnumerateAll { .. });
        let mut out = Vec::with_capacity(steps.len());
        for s in steps {
            if enumerate && s.action.is_flip() {
                out.push((s.clone(), Some(Bit::Zero)));
                out.push((s, Some(Bit::One)));
            } else {
                out.push((s, None));
            }
        }
        out
    }

    fn violation(
        &self,
        config: &SystemConfig<P>,
        steps_if_leaf: &[StepOf<P>],
    ) -> Option<ViolationKind> {
        if let Some(v) = check_safety(self.protocol, config) {
            return Some(v);
        }
        let leaf = steps_if_leaf.is_empty();
        self.invariants
            .iter()
            .filter(|inv| inv.scope == Scope::State || leaf)
            .find(|inv| !(inv.check)(self.protocol, config))
            .map(|inv| ViolationKind::InvariantViolation(inv.name.clone()))
    }

    fn step(
        &self,
        config: &mut SystemConfig<P>,
        step: &StepOf<P>,
        forced: Option<Bit>,
        fixed: &mut FixedCoins,
    ) -> Result<crate::model::ProtoOutcome<P>, ExploreError> {
        let mut coin = match forced {
            Some(b) => StepCoin::Forced(ForcedCoin(b)),
            None => StepCoin::Fixed(fixed),
        };
        Ok(apply_step(self.protocol, config, step, &mut coin)?)
    }

    fn check_flips(&self, flips: u32) -> Result<(), ExploreError> {
        if let CoinUniverse::EnumerateAll { budget } = self.bounds.coins {
            if flips > budget {
                return Err(ExploreError::CoinBudget { budget });
            }
        }
        Ok(())
    }

    fn record_leaf(&mut self, config: &SystemConfig<P>) {
        let mut vals: Vec<String> = config
            .procs
            .iter()
            .filter_map(|s| s.decided.as_ref().map(|d| d.to_string()))
            .collect();
        vals.sort();
        vals.dedup();
        let key = if vals.is_empty() {
            "-".to_string()
        } else {
            vals.join(",")
        };
        *self.stats.leaf_outcomes.entry(key).or_insert(0) += 1;
    }

    fn witness(
        &self,
        stack: &[Frame<P>],
        last: (StepOf<P>, crate::model::ProtoOutcome<P>),
    ) -> ExecutionTrace<P> {
        let mut trace = ExecutionTrace::new();
        let mut replay = stack[0].config.clone();
        let mut fixed = self.fixed_coins();
        for w in stack.windows(2) {
            let (step, forced) = w[0].children[w[0].next - 1].clone();
            let outcome = self
                .step(&mut replay, &step, forced, &mut fixed)
                .expect("path steps were applicable");
            trace.push(step, outcome);
        }
        trace.push(last.0, last.1);
        trace
    }

    fn fixed_coins(&self) -> FixedCoins {
        match &self.bounds.coins {
            CoinUniverse::FixedAssignment(c) => c.clone(),
            CoinUniverse::EnumerateAll { .. } => FixedCoins::default(),
        }
    }

    fn all_schedules(
        &mut self,
        root: SystemConfig<P>,
    ) -> Result<Option<ViolationReport<P>>, ExploreError> {
        let mut memo: FxHashMap<u128, u128> = FxHashMap::default();
        let mut fixed = self.fixed_coins();
        let steps = self.enabled(&root);
        let root_fp = fingerprint(&root);
        let mut stack = vec![Frame {
            children: self.branches(steps),
            config: root,
            fp: root_fp,
            next: 0,
            paths: 0,
            flips: 0,
        }];
        self.stats.states = 1;
        loop {
            let top = stack.last_mut().expect("non-empty stack");
            if top.next == top.children.len() {
                let frame = stack.pop().expect("non-empty stack");
                let paths = if frame.children.is_empty() {
                    self.record_leaf(&frame.config);
                    1
                } else {
                    frame.paths
                };
                if self.bounds.memoize {
                    memo.insert(frame.fp, paths);
                }
                match stack.last_mut() {
                    Some(parent) => parent.paths = parent.paths.saturating_add(paths),
                    None => {
                        self.stats.executions = paths;
                        return Ok(None);
                    }
                }
                continue;
            }
            let (step, forced) = top.children[top.next].clone();
            top.next += 1;
            let mut config = top.config.clone();
            let flips = top.flips + u32::from(step.action.is_flip());
            let depth = stack.len() as u64;
            self.check_flips(flips)?;
            if depth > self.bounds.max_steps {
                return Err(ExploreError::Depth {
                    max_steps: self.bounds.max_steps,
                });
            }
            self.stats.max_depth = self.stats.max_depth.max(depth);
            let outcome = self.step(&mut config, &step, forced, &mut fixed)?;
            let fp = fingerprint(&config);
            if self.bounds.memoize {
                if let Some(&paths) = memo.get(&fp) {
                    let parent = stack.last_mut().expect("parent");
                    parent.paths = parent.paths.saturating_add(paths);
                    continue;
                }
            }
            let steps = self.enabled(&config);
            if let Some(kind) = self.violation(&config, &steps) {
                let witness = self.witness(&stack, (step, outcome));
                return Ok(Some(ViolationReport { kind, witness }));
            }
            self.stats.states += 1;
            if self.stats.states > self.bounds.node_budget {
                return Err(ExploreError::NodeBudget {
                    visited: self.stats.states,
                    budget: self.bounds.node_budget,
                });
            }
            stack.push(Frame {
                children: self.branches(steps),
                config,
                fp,
                next: 0,
                paths: 0,
                flips,
            });
        }
    }

    /// Follows one strategy, branching only on coin outcomes.
    fn strategy(
        &mut self,
        root: SystemConfig<P>,
        adversary: Box<dyn Adversary<P>>,
    ) -> Result<Option<ViolationReport<P>>, ExploreError> {
        struct Node<P: Protocol> {
            config: SystemConfig<P>,
            adversary: Box<dyn Adversary<P>>,
            trace: ExecutionTrace<P>,
            flips: u32,
        }
        let mut fixed = self.fixed_coins();
        let enumerate = matches!(self.bounds.coins, CoinUniverse::EnumerateAll { .. });
        let mut stack = vec![Node {
            config: root,
            adversary,
            trace: ExecutionTrace::new(),
            flips: 0,
        }];
        while let Some(mut node) = stack.pop() {
            self.stats.states += 1;
            if self.stats.states > self.bounds.node_budget {
                return Err(ExploreError::NodeBudget {
                    visited: self.stats.states,
                    budget: self.bounds.node_budget,
                });
            }
            let steps = self.enabled(&node.config);
            if steps.is_empty() {
                self.stats.executions = self.stats.executions.saturating_add(1);
                self.record_leaf(&node.config);
                continue;
            }
            if node.trace.len() as u64 >= self.bounds.max_steps {
                return Err(ExploreError::Depth {
                    max_steps: self.bounds.max_steps,
                });
            }
            let index = {
                let view = build_view(
                    self.protocol,
                    &node.config,
                    &node.trace,
                    &steps,
                    node.adversary.visibility(),
                );
                node.adversary.choose(&view)?
            };
            let step =
                steps
                    .get(index)
                    .cloned()
                    .ok_or(crate::error::AdversaryError::OutOfRange {
                        index,
                        len: steps.len(),
                    })?;
            let flips = node.flips + u32::from(step.action.is_flip());
            self.check_flips(flips)?;
            let forks: Vec<Option<Bit>> = if enumerate && step.action.is_flip() {
                vec![Some(Bit::One), Some(Bit::Zero)]
            } else {
                vec![None]
            };
            for forced in forks {
                let mut config = node.config.clone();
                let outcome = self.step(&mut config, &step, forced, &mut fixed)?;
                let mut trace = node.trace.clone();
                trace.push(step.clone(), outcome);
                self.stats.max_depth = self.stats.max_depth.max(trace.len() as u64);
                let next_steps = self.enabled(&config);
                if let Some(kind) = self.violation(&config, &next_steps) {
                    return Ok(Some(ViolationReport {
                        kind,
                        witness: trace,
                    }));
                }
                stack.push(Node {
                    config,
                    adversary: node.adversary.box_clone(),
                    trace,
                    flips,
                });
            }
        }
        Ok(None)
    }
}

/// Re-executes a recorded trace from the initial configuration, taking every
/// coin outcome from the record, and returns the final configuration.
pub fn replay<P: Protocol>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
    trace: &ExecutionTrace<P>,
) -> Result<SystemConfig<P>, TraceError> {
    let mut config =
        initial_config(protocol, n, t, inputs).map_err(|e| TraceError::Header(e.to_string()))?;
    for (seq, entry) in trace.iter().enumerate() {
        let coin = match &entry.outcome {
            Outcome::Coin(b) => *b,
            _ => Bit::Zero,
        };
        let enabled = enabled_steps_capped(protocol, &config, None);
        if !enabled.contains(&entry.step) {
            return Err(TraceError::NotEnabled {
                seq,
                actor: entry.step.actor,
                action: entry.step.action.to_string(),
            });
        }
        let outcome = apply_step(protocol, &mut config, &entry.step, &mut ForcedCoin(coin))
            .map_err(|source| TraceError::Step { seq, source })?;
        if outcome != entry.outcome {
            return Err(TraceError::Diverged {
                seq,
                recorded: entry.outcome.to_string(),
                replayed: outcome.to_string(),
            });
        }
    }
    Ok(config)
}

/// Explores each input vector independently, in parallel when enabled.
pub fn explore_inputs<P: Protocol + 'static>(
    protocol: &P,
    n: usize,
    t: usize,
    input_vectors: &[Vec<P::Value>],
    bounds: &ExploreBounds,
) -> Vec<Result<Verdict<P>, ExploreError>>
where
    P::State: Send,
{
    crate::parallel::map_ordered(input_vectors, |inputs| {
        explore(protocol, n, t, inputs, bounds)
    })
}

/// Every binary input vector of length `n`, in lexicographic order.
pub fn all_binary_inputs(n: usize) -> Vec<Vec<Bit>> {
    (0..1u64 << n)
        .map(|mask| {
            (0..n)
                .map(|i| Bit::from(mask >> (n - 1 - i) & 1 == 1))
                .collect()
        })
        .collect()
}

/// Summary statistics over identically configured trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatSummary {
    pub trials: u64,
    pub terminated: u64,
    pub mean_rounds: f64,
    pub max_rounds: u64,
    pub mean_steps: f64,
    pub max_steps: u64,
    /// Trials in which every live process decided the same value, by value.
    pub decisions: BTreeMap<String, u64>,
    /// Trials in which live processes decided different values.
    pub split: u64,
    pub violating_trials: u64,
    /// 95% normal-approximation confidence radius of `mean_rounds`.
    pub rounds_radius: f64,
    /// 95% normal-approximation confidence radius of `mean_steps`.
    pub steps_radius: f64,
}

fn mean_and_radius(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, 1.96 * (var / k).sqrt())
}

/// Aggregates trial reports; a trial's round count is its slowest process's.
pub fn aggregate<V: Clone + Eq + fmt::Display>(
    reports: &[TrialReport<V>],
) -> Result<StatSummary, StatsError> {
    if reports.is_empty() {
        return Err(StatsError::Empty);
    }
    let rounds: Vec<f64> = reports.iter().map(|r| r.max_rounds() as f64).collect();
    let steps: Vec<f64> = reports.iter().map(|r| r.total_steps as f64).collect();
    let (mean_rounds, rounds_radius) = mean_and_radius(&rounds);
    let (mean_steps, steps_radius) = mean_and_radius(&steps);
    let mut decisions = BTreeMap::new();
    let mut split = 0;
    for r in reports {
        match r.unanimous_decision() {
            Some(v) => *decisions.entry(v.to_string()).or_insert(0) += 1,
            None if r.common_decision() == Some(Err(())) => split += 1,
            None => {}
        }
    }
    Ok(StatSummary {
        trials: reports.len() as u64,
        terminated: reports.iter().filter(|r| r.terminated).count() as u64,
        mean_rounds,
        max_rounds: reports.iter().map(|r| r.max_rounds()).max().unwrap_or(0),
        mean_steps,
        max_steps: reports.iter().map(|r| r.total_steps).max().unwrap_or(0),
        decisions,
        split,
        violating_trials: reports.iter().filter(|r| !r.is_safe()).count() as u64,
        rounds_radius,
        steps_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ben_or::BenOr;
    use crate::ladder::{make_deterministic_coin, Ladder};

    fn report(rounds: u64, decision: Option<Bit>, terminated: bool) -> TrialReport<Bit> {
        TrialReport {
            decisions: vec![decision; 2],
            rounds: vec![rounds; 2],
            total_steps: 10,
            terminated,
            crashed: vec![false; 2],
            violations: Vec::new(),
            counters: Vec::new(),
        }
    }

    #[test]
    fn aggregate_constant_rounds_has_zero_radius() {
        let reports = vec![report(2, Some(Bit::One), true); 100];
        let s = aggregate(&reports).unwrap();
        assert_eq!(s.mean_rounds, 2.0);
        assert_eq!(s.rounds_radius, 0.0);
        assert_eq!(s.decisions.get("1"), Some(&100));
    }

    #[test]
    fn aggregate_counts_terminated_and_decided() {
        let reports = vec![
            report(1, Some(Bit::Zero), true),
            report(3, None, false),
            report(2, Some(Bit::One), true),
        ];
        let s = aggregate(&reports).unwrap();
        assert_eq!(s.terminated, 2);
        assert_eq!(s.decisions.values().sum::<u64>(), 2);
        assert_eq!(s.max_rounds, 3);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert_eq!(aggregate::<Bit>(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn binary_inputs_enumerated() {
        let all = all_binary_inputs(3);
        assert_eq!(all.len(), 8);
        assert_eq!(all[1], vec![Bit::Zero, Bit::Zero, Bit::One]);
    }

    #[test]
    fn coin_budget_above_twenty_is_refused() {
        let mut bounds = ExploreBounds::new(1);
        bounds.coins = CoinUniverse::EnumerateAll { budget: 21 };
        let err = explore(&BenOr::default(), 1, 0, &[Bit::Zero], &bounds).unwrap_err();
        assert_eq!(err, ExploreError::CoinBudgetTooLarge(21));
    }

    #[test]
    fn node_budget_refusal_reports_count() {
        let mut bounds = ExploreBounds::new(2);
        bounds.node_budget = 50;
        let err = explore(
            &BenOr::default(),
            3,
            1,
            &[Bit::Zero, Bit::One, Bit::One],
            &bounds,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ExploreError::NodeBudget {
                visited: 51,
                budget: 50
            }
        );
    }

    #[test]
    fn solo_ladder_has_exactly_one_execution() {
        let bounds = ExploreBounds::new(4);
        let v = explore(
            &Ladder::new(make_deterministic_coin(Bit::Zero)),
            1,
            0,
            &[Bit::One],
            &bounds,
        )
        .unwrap();
        let stats = v.stats().expect("exhausted");
        assert_eq!(stats.executions, 1);
        assert_eq!(stats.states, 10);
    }
}
