//! Adversary strategies and the visibility contract.
//!
//! A strategy is a decision rule from (a projection of) the partial execution
//! to the next enabled step. The engine hands each strategy a [`View`] filtered
//! to the strategy's declared [`Visibility`]; the view types expose nothing
//! beyond what that level permits.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{AdversaryError, RunError};
use crate::model::{
    build_view, run, ActionKind, Bit, CoinSource, ExecutionTrace, InvertedCoin, MsgId, ProcessId,
    Protocol, RunOptions, StepOf, StepShape, SystemConfig,
};

/// How much of the execution a strategy may observe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Visibility {
    /// Only which process acts.
    Oblivious,
    /// The operation sequence with parameters and results erased.
    ContentOblivious,
    /// Everything: states, messages, registers, past coin results.
    Strong,
}

/// Full view for strong strategies.
pub struct StrongView<'a, P: Protocol> {
    pub protocol: &'a P,
    pub config: &'a SystemConfig<P>,
    pub trace: &'a ExecutionTrace<P>,
    pub enabled: &'a [StepOf<P>],
}

/// Content-free view: step shapes only.
pub struct ContentView<'a, P: Protocol> {
    trace: &'a ExecutionTrace<P>,
    enabled: Vec<StepShape>,
}

impl<'a, P: Protocol> ContentView<'a, P> {
    pub(crate) fn new(trace: &'a ExecutionTrace<P>, enabled: Vec<StepShape>) -> Self {
        ContentView { trace, enabled }
    }

    pub fn enabled(&self) -> &[StepShape] {
        &self.enabled
    }

    pub fn history(&self) -> impl Iterator<Item = StepShape> + '_ {
        self.trace.shapes()
    }

    pub fn step_index(&self) -> u64 {
        self.trace.len() as u64
    }
}

/// An enabled step as an oblivious strategy sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Choice {
    pub actor: ProcessId,
    /// Crash pseudo-steps are adversary actions, not process operations, so
    /// even an oblivious adversary can tell them apart.
    pub crash: bool,
}

/// Actor-only view.
pub struct ObliviousView<'a, P: Protocol> {
    trace: &'a ExecutionTrace<P>,
    enabled: Vec<Choice>,
}

impl<'a, P: Protocol> ObliviousView<'a, P> {
    pub(crate) fn new(trace: &'a ExecutionTrace<P>, enabled: Vec<Choice>) -> Self {
        ObliviousView { trace, enabled }
    }

    pub fn enabled(&self) -> &[Choice] {
        &self.enabled
    }

    pub fn actors(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.trace.iter().map(|e| e.step.actor)
    }

    pub fn step_index(&self) -> u64 {
        self.trace.len() as u64
    }
}

pub enum View<'a, P: Protocol> {
    Strong(StrongView<'a, P>),
    ContentOblivious(ContentView<'a, P>),
    Oblivious(ObliviousView<'a, P>),
}

impl<P: Protocol> View<'_, P> {
    pub fn step_index(&self) -> u64 {
        match self {
            View::Strong(v) => v.trace.len() as u64,
            View::ContentOblivious(v) => v.step_index(),
            View::Oblivious(v) => v.step_index(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            View::Strong(v) => v.enabled.len(),
            View::ContentOblivious(v) => v.enabled.len(),
            View::Oblivious(v) => v.enabled.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Actor of the `i`-th enabled step and whether it is a crash.
    pub fn choice(&self, i: usize) -> Choice {
        match self {
            View::Strong(v) => Choice {
                actor: v.enabled[i].actor,
                crash: v.enabled[i].is_crash(),
            },
            View::ContentOblivious(v) => Choice {
                actor: v.enabled[i].actor,
                crash: v.enabled[i].kind == ActionKind::Crash,
            },
            View::Oblivious(v) => v.enabled[i],
        }
    }

    pub fn crash_index(&self, p: ProcessId) -> Option<usize> {
        (0..self.len()).find(|&i| {
            let c = self.choice(i);
            c.crash && c.actor == p
        })
    }
}

/// A scheduling strategy.
pub trait Adversary<P: Protocol>: Send {
    fn visibility(&self) -> Visibility;

    /// Index into the enabled steps of `view`.
    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError>;

    fn box_clone(&self) -> Box<dyn Adversary<P>>;
}

impl<P: Protocol> Clone for Box<dyn Adversary<P>> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Cycles through actors in index order; within an actor, runs its local
/// operation first and otherwise delivers its oldest message.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    next: usize,
    first_seen: HashMap<MsgId, u64>,
    seen: u64,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<P: Protocol> Adversary<P> for RoundRobin {
    fn visibility(&self) -> Visibility {
        Visibility::ContentOblivious
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        let shapes: Vec<StepShape> = match view {
            View::ContentOblivious(v) => v.enabled().to_vec(),
            View::Strong(v) => v.enabled.iter().map(|s| s.shape()).collect(),
            View::Oblivious(_) => unreachable!("round robin is content-oblivious"),
        };
        for s in &shapes {
            if let Some(id) = s.msg {
                let seen = &mut self.seen;
                self.first_seen.entry(id).or_insert_with(|| {
                    *seen += 1;
                    *seen
                });
            }
        }
        let n = shapes
            .iter()
            .map(|s| s.actor.index() + 1)
            .max()
            .unwrap_or(0)
            .max(self.next + 1);
        for off in 0..n {
            let actor = ProcessId((self.next + off) % n);
            let mine = shapes
                .iter()
                .enumerate()
                .filter(|(_, s)| s.actor == actor && s.kind != ActionKind::Crash);
            let mut best: Option<(usize, u64)> = None;
            for (i, s) in mine {
                let age = match s.msg {
                    None => 0,
                    Some(id) => self.first_seen[&id],
                };
                if best.is_none_or(|(_, a)| age < a) {
                    best = Some((i, age));
                }
            }
            if let Some((i, _)) = best {
                if let Some(id) = shapes[i].msg {
                    self.first_seen.remove(&id);
                }
                self.next = actor.index() + 1;
                return Ok(i);
            }
        }
        Err(AdversaryError::NothingEnabled)
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(self.clone())
    }
}

/// Picks an enabled actor uniformly at random, then one of its enabled steps
/// uniformly. A fairness guard serves any actor left waiting for close to
/// `window_factor * n` choices, so every continuously enabled process runs
/// within that window.
#[derive(Clone, Debug)]
pub struct UniformRandom {
    rng: ChaCha8Rng,
    window_factor: u64,
    tick: u64,
    /// Tick since which each actor has been enabled without being served.
    waiting_since: Vec<Option<u64>>,
}

pub const DEFAULT_WINDOW_FACTOR: u64 = 2;

impl UniformRandom {
    pub fn new(seed: u64) -> Self {
        Self::with_window(seed, DEFAULT_WINDOW_FACTOR)
    }

    pub fn with_window(seed: u64, window_factor: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Keep clear of the keystreams the coin source uses for processes.
        rng.set_stream(u64::MAX);
        UniformRandom {
            rng,
            window_factor: window_factor.max(1),
            tick: 0,
            waiting_since: Vec::new(),
        }
    }
}

impl<P: Protocol> Adversary<P> for UniformRandom {
    fn visibility(&self) -> Visibility {
        Visibility::Oblivious
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        let choices: Vec<Choice> = (0..view.len()).map(|i| view.choice(i)).collect();
        let mut actors: Vec<usize> = choices
            .iter()
            .filter(|c| !c.crash)
            .map(|c| c.actor.index())
            .collect();
        actors.sort_unstable();
        actors.dedup();
        if actors.is_empty() {
            return Err(AdversaryError::NothingEnabled);
        }
        let max = *actors.last().expect("non-empty");
        if self.waiting_since.len() <= max {
            self.waiting_since.resize(max + 1, None);
        }
        // Every process is enabled at the start, so this is n after one choice.
        let n = self.waiting_since.len() as u64;
        for (a, w) in self.waiting_since.iter_mut().enumerate() {
            if actors.binary_search(&a).is_err() {
                *w = None;
            } else if w.is_none() {
                *w = Some(self.tick);
            }
        }
        let slack = (self.window_factor * n).saturating_sub(actors.len() as u64);
        let overdue = actors
            .iter()
            .copied()
            .filter_map(|a| self.waiting_since[a].map(|since| (since, a)))
            .filter(|(since, _)| self.tick - since >= slack)
            .min();
        let actor = match overdue {
            Some((_, a)) => a,
            None => actors[self.rng.random_range(0..actors.len())],
        };
        self.waiting_since[actor] = None;
        self.tick += 1;
        let mine: Vec<usize> = choices
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.crash && c.actor.index() == actor)
            .map(|(i, _)| i)
            .collect();
        Ok(mine[self.rng.random_range(0..mine.len())])
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(self.clone())
    }
}

/// Never lets a process run while some other live, undecided process is at a
/// lower race round; otherwise round-robin.
#[derive(Clone, Debug, Default)]
pub struct Lockstep {
    next: usize,
}

impl Lockstep {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<P: Protocol> Adversary<P> for Lockstep {
    fn visibility(&self) -> Visibility {
        Visibility::Strong
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        let View::Strong(v) = view else {
            unreachable!("lockstep is a strong strategy")
        };
        let round = |p: ProcessId| v.protocol.race_round(v.config.state(p));
        let floor = v
            .config
            .process_ids()
            .filter(|&p| {
                v.config.alive(p)
                    && v.config.decided(p).is_none()
                    && !v.protocol.halted(v.config.state(p))
            })
            .filter_map(round)
            .min();
        let candidates: Vec<usize> = (0..v.enabled.len())
            .filter(|&i| !v.enabled[i].is_crash())
            .collect();
        let allowed: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| match (floor, round(v.enabled[i].actor)) {
                (Some(f), Some(r)) => r <= f,
                _ => true,
            })
            .collect();
        let pool = if allowed.is_empty() {
            &candidates
        } else {
            &allowed
        };
        let n = v.config.n;
        for off in 0..n {
            let actor = ProcessId((self.next + off) % n);
            if let Some(&i) = pool.iter().find(|&&i| v.enabled[i].actor == actor) {
                self.next = actor.index() + 1;
                return Ok(i);
            }
        }
        Err(AdversaryError::NothingEnabled)
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(self.clone())
    }
}

/// Withholds vote writes whose coin equals `target` (at most one per process,
/// since a process cannot flip again before writing) until some process starts
/// its final scan. With `crash` set it instead crashes such voters while the
/// crash budget lasts. Other choices are uniform among the allowed steps.
#[derive(Clone, Debug)]
pub struct VoteHider {
    target: Bit,
    crash: bool,
    rng: ChaCha8Rng,
}

impl VoteHider {
    pub fn new(target: Bit, crash: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - 1);
        VoteHider { target, crash, rng }
    }
}

impl<P: Protocol> Adversary<P> for VoteHider {
    fn visibility(&self) -> Visibility {
        Visibility::Strong
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        let View::Strong(v) = view else {
            unreachable!("vote hider is a strong strategy")
        };
        let holds_target = |p: ProcessId| {
            v.config.alive(p) && v.protocol.pending_vote(v.config.state(p)) == Some(self.target)
        };
        if self.crash {
            if let Some(i) = (0..v.enabled.len())
                .find(|&i| v.enabled[i].is_crash() && holds_target(v.enabled[i].actor))
            {
                return Ok(i);
            }
        }
        let release = v
            .config
            .process_ids()
            .any(|p| v.config.alive(p) && v.protocol.in_final_scan(v.config.state(p)));
        let candidates: Vec<usize> = (0..v.enabled.len())
            .filter(|&i| !v.enabled[i].is_crash())
            .collect();
        if candidates.is_empty() {
            return Err(AdversaryError::NothingEnabled);
        }
        let allowed: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| {
                let s = &v.enabled[i];
                release || s.action.kind() != ActionKind::Write || !holds_target(s.actor)
            })
            .collect();
        if allowed.is_empty() {
            // Every process is holding a hidden vote; let the lowest one through.
            return Ok(candidates[0]);
        }
        Ok(allowed[self.rng.random_range(0..allowed.len())])
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(self.clone())
    }
}

/// Crashes processes at planned step indices, then defers to `inner`.
pub struct CrashPlanned<P: Protocol> {
    inner: Box<dyn Adversary<P>>,
    plan: Vec<(u64, ProcessId)>,
    next: usize,
}

impl<P: Protocol> CrashPlanned<P> {
    pub fn new(inner: Box<dyn Adversary<P>>, mut plan: Vec<(u64, ProcessId)>) -> Self {
        plan.sort();
        CrashPlanned {
            inner,
            plan,
            next: 0,
        }
    }
}

impl<P: Protocol + 'static> Adversary<P> for CrashPlanned<P> {
    fn visibility(&self) -> Visibility {
        self.inner.visibility()
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        while let Some(&(at, p)) = self.plan.get(self.next) {
            if view.step_index() < at {
                break;
            }
            self.next += 1;
            if let Some(i) = view.crash_index(p) {
                return Ok(i);
            }
        }
        self.inner.choose(view)
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(CrashPlanned {
            inner: self.inner.box_clone(),
            plan: self.plan.clone(),
            next: self.next,
        })
    }
}

/// Which strategy to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StrategyKind {
    RoundRobin,
    UniformRandom { seed: u64 },
    Lockstep,
    VoteHider { target: Bit, crash: bool, seed: u64 },
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::RoundRobin => f.write_str("round-robin"),
            StrategyKind::UniformRandom { .. } => f.write_str("uniform-random"),
            StrategyKind::Lockstep => f.write_str("lockstep"),
            StrategyKind::VoteHider {
                target,
                crash: false,
                ..
            } => write!(f, "vote-hider({target})"),
            StrategyKind::VoteHider {
                target,
                crash: true,
                ..
            } => write!(f, "vote-hider-crash({target})"),
        }
    }
}

/// Strategy selection plus an optional crash plan of `(step index, process)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub crash_plan: Vec<(u64, ProcessId)>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            crash_plan: Vec::new(),
        }
    }

    pub fn with_crash_plan(mut self, plan: Vec<(u64, ProcessId)>) -> Self {
        self.crash_plan = plan;
        self
    }

    pub fn visibility(&self) -> Visibility {
        match self.kind {
            StrategyKind::RoundRobin => Visibility::ContentOblivious,
            StrategyKind::UniformRandom { .. } => Visibility::Oblivious,
            StrategyKind::Lockstep | StrategyKind::VoteHider { .. } => Visibility::Strong,
        }
    }

    /// Instantiates the strategy for one trial. Seeded strategies mix the
    /// trial id into their seed so trials are independent.
    pub fn build<P: Protocol + 'static>(&self, trial: u64) -> Box<dyn Adversary<P>> {
        let mix = |seed: u64| seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let base: Box<dyn Adversary<P>> = match self.kind {
            StrategyKind::RoundRobin => Box::new(RoundRobin::new()),
            StrategyKind::UniformRandom { seed } => Box::new(UniformRandom::new(mix(seed))),
            StrategyKind::Lockstep => Box::new(Lockstep::new()),
            StrategyKind::VoteHider {
                target,
                crash,
                seed,
            } => Box::new(VoteHider::new(target, crash, mix(seed))),
        };
        if self.crash_plan.is_empty() {
            base
        } else {
            Box::new(CrashPlanned::new(base, self.crash_plan.clone()))
        }
    }
}

/// Wraps a strategy, asks for a strong view, and records the content-free
/// shape of every enabled set and every choice.
struct Recorder<P: Protocol> {
    inner: Box<dyn Adversary<P>>,
    log: Vec<(Vec<StepShape>, StepShape)>,
}

impl<P: Protocol + 'static> Adversary<P> for Recorder<P> {
    fn visibility(&self) -> Visibility {
        Visibility::Strong
    }

    fn choose(&mut self, view: &View<'_, P>) -> Result<usize, AdversaryError> {
        let View::Strong(v) = view else {
            unreachable!("recorder requests a strong view")
        };
        let inner_view = build_view(
            v.protocol,
            v.config,
            v.trace,
            v.enabled,
            self.inner.visibility(),
        );
        let i = self.inner.choose(&inner_view)?;
        let shapes: Vec<StepShape> = v.enabled.iter().map(|s| s.shape()).collect();
        let chosen = shapes.get(i).copied().ok_or(AdversaryError::OutOfRange {
            index: i,
            len: shapes.len(),
        })?;
        self.log.push((shapes, chosen));
        Ok(i)
    }

    fn box_clone(&self) -> Box<dyn Adversary<P>> {
        Box::new(Recorder {
            inner: self.inner.box_clone(),
            log: self.log.clone(),
        })
    }
}

/// Parameters of a scrambled-replay visibility check.
pub struct ScrambleCheck<'a, P: Protocol> {
    pub protocol: &'a P,
    pub n: usize,
    pub t: usize,
    pub inputs: &'a [P::Value],
    /// The inputs under a consistent relabeling of values.
    pub scrambled_inputs: &'a [P::Value],
    pub coin_seed: u64,
    pub trial: u64,
    pub max_steps: u64,
}

/// Runs the strategy on an execution and on a content-scrambled twin (every
/// coin inverted, inputs relabeled) and reports whether it made the same choice
/// after every pair of equivalent partial executions.
///
/// Comparison stops once the two executions stop being equivalent, i.e. their
/// enabled sets differ in shape.
pub fn visibility_check<P: Protocol + 'static>(
    strategy: &StrategyConfig,
    check: &ScrambleCheck<'_, P>,
) -> Result<bool, RunError> {
    let opts = RunOptions {
        max_steps: check.max_steps,
        ..RunOptions::default()
    };
    let mut plain = Recorder {
        inner: strategy.build::<P>(check.trial),
        log: Vec::new(),
    };
    run(
        check.protocol,
        check.n,
        check.t,
        check.inputs,
        &mut plain,
        &mut CoinSource::new(check.coin_seed),
        &opts,
    )?;
    let mut scrambled = Recorder {
        inner: strategy.build::<P>(check.trial),
        log: Vec::new(),
    };
    run(
        check.protocol,
        check.n,
        check.t,
        check.scrambled_inputs,
        &mut scrambled,
        &mut InvertedCoin(CoinSource::new(check.coin_seed)),
        &opts,
    )?;
    for ((enabled_a, chose_a), (enabled_b, chose_b)) in plain.log.iter().zip(&scrambled.log) {
        if enabled_a != enabled_b {
            return Ok(true);
        }
        if chose_a != chose_b {
            return Ok(false);
        }
    }
    Ok(true)
}
