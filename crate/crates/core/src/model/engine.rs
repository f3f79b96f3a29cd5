//! The adversary -> step -> apply loop.

use std::fmt;

use serde::Serialize;

use super::coin::CoinOracle;
use super::config::{FaultBudget, MarkGrid, ProcSlot, SystemConfig};
use super::ids::{MsgId, ProcessId};
use super::protocol::{Ctx, ProtoOutcome, Protocol, ProtocolKind};
use super::step::{Action, Dest, Op, Outcome, Step};
use super::trace::{ExecutionTrace, StepOf, TraceEntry};
use crate::adversary::{
    Adversary, Choice, ContentView, ObliviousView, StrongView, View, Visibility,
};
use crate::error::{AdversaryError, ConfigError, RunError, StepError};

fn ctx(config_n: usize, t: usize, p: ProcessId) -> Ctx {
    Ctx {
        me: p,
        n: config_n,
        t,
    }
}

/// Builds the initial configuration after validating the protocol's fault model.
pub fn initial_config<P: Protocol>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
) -> Result<SystemConfig<P>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::NoProcesses);
    }
    if inputs.len() != n {
        return Err(ConfigError::InputCount {
            n,
            got: inputs.len(),
        });
    }
    protocol.check_params(n, t, inputs)?;
    let procs = inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let state = protocol.init(ctx(n, t, ProcessId(i)), input);
            let decided = protocol.decision(&state);
            ProcSlot {
                state,
                alive: true,
                flips: 0,
                sent: 0,
                decided,
            }
        })
        .collect();
    Ok(SystemConfig {
        n,
        inputs: inputs.into(),
        procs,
        pool: Default::default(),
        registers: Default::default(),
        grid: MarkGrid::default(),
        faults: FaultBudget::new(t),
    })
}

/// Every step some process could take next: each live process's pending
/// operation, every deliverable message, and a crash pseudo-step per live
/// process while the crash budget is unspent.
pub fn enabled_steps<P: Protocol>(protocol: &P, config: &SystemConfig<P>) -> Vec<StepOf<P>> {
    enabled_steps_capped(protocol, config, None)
}

/// Like [`enabled_steps`], but processes whose current round exceeds
/// `round_cap` are frozen and offer nothing.
pub fn enabled_steps_capped<P: Protocol>(
    protocol: &P,
    config: &SystemConfig<P>,
    round_cap: Option<u64>,
) -> Vec<StepOf<P>> {
    let t = config.faults.t;
    let can_crash = config.faults.remaining() > 0;
    let mut out = Vec::new();
    for (i, slot) in config.procs.iter().enumerate() {
        let p = ProcessId(i);
        if !slot.alive || protocol.halted(&slot.state) {
            continue;
        }
        if let Some(cap) = round_cap {
            if protocol.current_round(&slot.state) > cap {
                continue;
            }
        }
        let c = ctx(config.n, t, p);
        if let Some(op) = protocol.next_op(c, &slot.state) {
            out.push(Step::new(p, op.into()));
        }
        for (id, env) in config.pool.iter() {
            if env.to == p && protocol.accepts(c, &slot.state, &env.msg) {
                out.push(Step::new(p, Action::Deliver(*id)));
            }
        }
        if can_crash {
            out.push(Step::crash(p));
        }
    }
    out
}

/// Applies one step in place and returns its observable result.
///
/// Deterministic given `(config, step, coins)`. A flip consumes exactly one
/// index of the actor's coin stream.
pub fn apply_step<P: Protocol, C: CoinOracle + ?Sized>(
    protocol: &P,
    config: &mut SystemConfig<P>,
    step: &StepOf<P>,
    coins: &mut C,
) -> Result<ProtoOutcome<P>, StepError> {
    let p = step.actor;
    let n = config.n;
    let t = config.faults.t;
    if p.index() >= n {
        return Err(StepError::UnknownProcess(p));
    }
    if !config.procs[p.index()].alive {
        return Err(StepError::Crashed(p));
    }
    if protocol.halted(&config.procs[p.index()].state) {
        return Err(StepError::Halted(p));
    }
    let c = ctx(n, t, p);
    let not_enabled = || StepError::NotEnabled {
        actor: p,
        action: step.action.to_string(),
    };

    let outcome = match &step.action {
        Action::Crash => {
            if config.faults.remaining() == 0 {
                return Err(StepError::FaultBudget);
            }
            config.faults.crashed_so_far += 1;
            config.procs[p.index()].alive = false;
            return Ok(Outcome::None);
        }
        Action::Deliver(id) => {
            let env = config.pool.get(id).ok_or_else(not_enabled)?;
            if env.to != p || !protocol.accepts(c, &config.procs[p.index()].state, &env.msg) {
                return Err(not_enabled());
            }
            let env = config.pool.remove(id).expect("checked above");
            let slot = &mut config.procs[p.index()];
            protocol.on_deliver(c, &mut slot.state, id.sender, env.msg.clone());
            Outcome::Delivered(id.sender, env.msg)
        }
        action => {
            let op = protocol
                .next_op(c, &config.procs[p.index()].state)
                .ok_or_else(not_enabled)?;
            if Action::from(op.clone()) != *action {
                return Err(not_enabled());
            }
            let outcome = execute(config, p, op, coins);
            protocol.on_op(c, &mut config.procs[p.index()].state, outcome.clone());
            outcome
        }
    };

    let procs = &config.procs;
    config
        .pool
        .retain(|_, env| !protocol.discards(&procs[env.to.index()].state, &env.msg));
    let slot = &mut config.procs[p.index()];
    if slot.decided.is_none() {
        slot.decided = protocol.decision(&slot.state);
    }
    Ok(outcome)
}

fn execute<P: Protocol, C: CoinOracle + ?Sized>(
    config: &mut SystemConfig<P>,
    p: ProcessId,
    op: Op<P::Msg, P::Reg, P::Word>,
    coins: &mut C,
) -> ProtoOutcome<P> {
    match op {
        Op::Send { to, msg } => {
            let n = config.n;
            let recipients: Vec<ProcessId> = match to {
                Dest::To(q) => vec![q],
                Dest::All => (0..n).map(|k| ProcessId((p.index() + k) % n)).collect(),
            };
            let slot = &mut config.procs[p.index()];
            for to in recipients {
                let id = MsgId {
                    sender: p,
                    seq: slot.sent,
                };
                slot.sent += 1;
                config.pool.insert(
                    id,
                    super::config::Envelope {
                        to,
                        msg: msg.clone(),
                    },
                );
            }
            Outcome::None
        }
        Op::Read(reg) => Outcome::Read(config.read_register(&reg)),
        Op::Write(reg, word) => {
            config.registers.insert(reg, word);
            Outcome::None
        }
        Op::SetBit(b, i) => {
            config.grid.set(b, i);
            Outcome::None
        }
        Op::ReadBit(b, i) => Outcome::Bit(config.grid.get(b, i)),
        Op::Flip(bias) => {
            let slot = &mut config.procs[p.index()];
            let bit = coins.flip(p, slot.flips, bias);
            slot.flips += 1;
            Outcome::Coin(bit)
        }
        Op::FlipAndWrite {
            reg,
            bias,
            if_zero,
            if_one,
        } => {
            let slot = &mut config.procs[p.index()];
            let bit = coins.flip(p, slot.flips, bias);
            slot.flips += 1;
            config
                .registers
                .insert(reg, if bit.is_one() { if_one } else { if_zero });
            Outcome::Coin(bit)
        }
        Op::Local => Outcome::None,
    }
}

/// Functional form of [`apply_step`].
pub fn apply_step_owned<P: Protocol, C: CoinOracle + ?Sized>(
    protocol: &P,
    config: &SystemConfig<P>,
    step: &StepOf<P>,
    coins: &mut C,
) -> Result<(SystemConfig<P>, ProtoOutcome<P>), StepError> {
    let mut next = config.clone();
    let outcome = apply_step(protocol, &mut next, step, coins)?;
    Ok((next, outcome))
}

/// Safety property broken by a configuration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    AgreementViolation,
    ValidityViolation,
    IrrevocabilityViolation,
    InvariantViolation(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::AgreementViolation => f.write_str("agreement"),
            ViolationKind::ValidityViolation => f.write_str("validity"),
            ViolationKind::IrrevocabilityViolation => f.write_str("irrevocability"),
            ViolationKind::InvariantViolation(name) => write!(f, "invariant:{name}"),
        }
    }
}

/// Checks agreement, validity, irrevocability, and protocol-internal alarms.
pub fn check_safety<P: Protocol>(protocol: &P, config: &SystemConfig<P>) -> Option<ViolationKind> {
    for slot in &config.procs {
        if let Some(first) = &slot.decided {
            if protocol.decision(&slot.state).as_ref() != Some(first) {
                return Some(ViolationKind::IrrevocabilityViolation);
            }
        }
        if let Some(name) = protocol.local_violation(&slot.state) {
            return Some(ViolationKind::InvariantViolation(name.to_string()));
        }
    }
    if protocol.kind() == ProtocolKind::Consensus {
        let mut decided = config.procs.iter().filter_map(|s| s.decided.as_ref());
        if let Some(first) = decided.next() {
            if decided.any(|d| d != first) {
                return Some(ViolationKind::AgreementViolation);
            }
        }
        if config
            .procs
            .iter()
            .filter_map(|s| s.decided.as_ref())
            .any(|d| !config.inputs.contains(d))
        {
            return Some(ViolationKind::ValidityViolation);
        }
    }
    None
}

/// Knobs for [`run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub max_steps: u64,
    /// Most visibility any strategy may use in this run.
    pub granted: Visibility,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_steps: 1_000_000,
            granted: Visibility::Strong,
        }
    }
}

/// Outcome record of one trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialReport<V> {
    pub decisions: Vec<Option<V>>,
    /// Per-process protocol round counts (decision round for deciders).
    pub rounds: Vec<u64>,
    pub total_steps: u64,
    /// Every live process decided before the step limit.
    pub terminated: bool,
    pub crashed: Vec<bool>,
    pub violations: Vec<ViolationKind>,
    /// Protocol-specific counters, in `Protocol::counter_names` order.
    pub counters: Vec<u64>,
}

impl<V: Clone + Eq> TrialReport<V> {
    /// The value every decider chose, if they agree; `None` if nobody decided.
    pub fn common_decision(&self) -> Option<Result<V, ()>> {
        let mut it = self.decisions.iter().flatten();
        let first = it.next()?.clone();
        if it.all(|d| *d == first) {
            Some(Ok(first))
        } else {
            Some(Err(()))
        }
    }

    /// Decision of every live process when all of them decided the same value.
    pub fn unanimous_decision(&self) -> Option<V> {
        let mut vals = self
            .decisions
            .iter()
            .zip(&self.crashed)
            .filter(|(_, c)| !**c)
            .map(|(d, _)| d.clone());
        let first = vals.next()??;
        vals.all(|d| d.as_ref() == Some(&first)).then_some(first)
    }

    pub fn max_rounds(&self) -> u64 {
        self.rounds.iter().copied().max().unwrap_or(0)
    }

    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A finished run: report, full trace, and final configuration.
pub struct RunOutput<P: Protocol> {
    pub report: TrialReport<P::Value>,
    pub trace: ExecutionTrace<P>,
    pub config: SystemConfig<P>,
}

/// Runs one trial. See [`run_observed`].
pub fn run<P: Protocol, C: CoinOracle + ?Sized>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
    adversary: &mut dyn Adversary<P>,
    coins: &mut C,
    opts: &RunOptions,
) -> Result<RunOutput<P>, RunError> {
    run_observed(
        protocol,
        n,
        t,
        inputs,
        adversary,
        coins,
        opts,
        &mut |_, _| {},
    )
}

/// Runs one trial, calling `observer` with the post-step configuration after
/// every applied step.
///
/// Stops when every live process has decided, when `max_steps` steps have
/// been applied, or when only crash pseudo-steps remain.
#[allow(clippy::too_many_arguments)]
pub fn run_observed<P: Protocol, C: CoinOracle + ?Sized>(
    protocol: &P,
    n: usize,
    t: usize,
    inputs: &[P::Value],
    adversary: &mut dyn Adversary<P>,
    coins: &mut C,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&SystemConfig<P>, &TraceEntry<P>),
) -> Result<RunOutput<P>, RunError> {
    let mut config = initial_config(protocol, n, t, inputs)?;
    let required = adversary.visibility();
    if required > opts.granted {
        return Err(AdversaryError::Visibility {
            required,
            granted: opts.granted,
        }
        .into());
    }
    let mut trace = ExecutionTrace::new();
    let mut violations: Vec<ViolationKind> = Vec::new();
    let mut terminated = all_live_decided(&config);

    while !terminated && (trace.len() as u64) < opts.max_steps {
        let enabled = enabled_steps(protocol, &config);
        if enabled.iter().all(|s| s.is_crash()) {
            break;
        }
        let index = {
            let view = build_view(protocol, &config, &trace, &enabled, required);
            adversary.choose(&view)?
        };
        let step = enabled
            .get(index)
            .cloned()
            .ok_or(AdversaryError::OutOfRange {
                index,
                len: enabled.len(),
            })?;
        let outcome = apply_step(protocol, &mut config, &step, coins)?;
        trace.push(step, outcome);
        observer(&config, trace.entries().last().expect("just pushed"));
        if let Some(v) = check_safety(protocol, &config) {
            if !violations.contains(&v) {
                violations.push(v);
            }
        }
        terminated = all_live_decided(&config);
    }

    let report = TrialReport {
        decisions: config.procs.iter().map(|s| s.decided.clone()).collect(),
        rounds: config
            .procs
            .iter()
            .map(|s| protocol.rounds(&s.state))
            .collect(),
        total_steps: trace.len() as u64,
        terminated,
        crashed: config.procs.iter().map(|s| !s.alive).collect(),
        violations,
        counters: protocol.counters(&config),
    };
    Ok(RunOutput {
        report,
        trace,
        config,
    })
}

fn all_live_decided<P: Protocol>(config: &SystemConfig<P>) -> bool {
    config
        .procs
        .iter()
        .filter(|s| s.alive)
        .all(|s| s.decided.is_some())
}

/// Projects the execution onto what a strategy of the given visibility may see.
pub(crate) fn build_view<'a, P: Protocol>(
    protocol: &'a P,
    config: &'a SystemConfig<P>,
    trace: &'a ExecutionTrace<P>,
    enabled: &'a [StepOf<P>],
    level: Visibility,
) -> View<'a, P> {
    match level {
        Visibility::Strong => View::Strong(StrongView {
            protocol,
            config,
            trace,
            enabled,
        }),
        Visibility::ContentOblivious => View::ContentOblivious(ContentView::new(
            trace,
            enabled.iter().map(|s| s.shape()).collect(),
        )),
        Visibility::Oblivious => View::Oblivious(ObliviousView::new(
            trace,
            enabled
                .iter()
                .map(|s| Choice {
                    actor: s.actor,
                    crash: s.is_crash(),
                })
                .collect(),
        )),
    }
}
