//! End-to-end acceptance gate. Runs each criterion, prints one PASS/FAIL line
//! per criterion, and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use consim_core::adversary::{StrategyConfig, StrategyKind};
use consim_core::br_coin::{batch_size, BrCoinProtocol, VoteAudit};
use consim_core::harness::{self, CheckOutcome, Experiment, InputSpec, ProtocolName, RunSpec};
use consim_core::model::{run_observed, CoinSource, RunOptions};
use consim_core::parallel::run_trials;
use consim_core::verifier::{explore_with, ExploreBounds, Invariant, Scope, Verdict};
use consim_core::{BenOr, Bit};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// CSV (or report) text produced by a criterion, keyed by a stable name.
type Artifacts = BTreeMap<String, String>;

fn spec(
    protocol: ProtocolName,
    n: usize,
    t: usize,
    inputs: InputSpec,
    kind: StrategyKind,
) -> RunSpec {
    let mut s = RunSpec::new(protocol, n, t);
    s.inputs = inputs;
    s.adversary = StrategyConfig::new(kind);
    s
}

fn run(spec: &RunSpec, name: String, artifacts: &mut Artifacts) -> Experiment {
    let exp = harness::run_experiment(spec).expect("valid spec");
    artifacts.insert(name, exp.to_csv().expect("csv"));
    exp
}

fn ratio(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let min = xs.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn exhaustive_safety() -> Outcome {
    let s = spec(
        ProtocolName::BenOr,
        3,
        1,
        InputSpec::All,
        StrategyKind::RoundRobin,
    );
    let results = harness::check(&s, ExploreBounds::new(2)).expect("valid spec");
    let mut states = 0;
    let mut bad = Vec::new();
    for r in &results {
        match &r.outcome {
            CheckOutcome::Exhausted(st) => states += st.states,
            CheckOutcome::Violation { kind, .. } => bad.push(format!("{:?}: {kind}", r.inputs)),
            CheckOutcome::Refused(e) => bad.push(format!("{:?}: {e}", r.inputs)),
        }
    }
    Outcome::new(
        results.len() == 8 && bad.is_empty(),
        format!(
            "{} input vectors exhausted, {states} states, problems: {bad:?}",
            results.len()
        ),
    )
}

fn unanimous_fast_path(artifacts: &mut Artifacts) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for v in [Bit::Zero, Bit::One] {
        let fast = Invariant::new(
            "decides-input-in-round-1",
            Scope::State,
            move |_: &BenOr, cfg| {
                cfg.procs.iter().all(|s| {
                    s.decided
                        .is_none_or(|d| d == v && s.state.decided_round == Some(1))
                })
            },
        );
        let verdict = explore_with(
            &BenOr::default(),
            3,
            1,
            &[v; 3],
            &ExploreBounds::new(2),
            &[fast],
        );
        match verdict {
            Ok(Verdict::Exhausted(st)) => {
                let deciding = st.leaf_outcomes.get(&v.to_string()).copied().unwrap_or(0);
                ok &= deciding > 0 && st.leaf_outcomes.len() == 1;
                notes.push(format!(
                    "{v}: {} states, leaves {:?}",
                    st.states, st.leaf_outcomes
                ));
                artifacts.insert(
                    format!("c2-unanimous-{v}"),
                    format!(
                        "{} {} {} {:?}\n",
                        st.states, st.executions, st.max_depth, st.leaf_outcomes
                    ),
                );
            }
            Ok(Verdict::Violation(r)) => {
                ok = false;
                notes.push(format!("{v}: {} after {} steps", r.kind, r.witness.len()));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{v}: {e}"));
            }
        }
    }
    Outcome::new(ok, notes.join("; "))
}

fn cil_passes(artifacts: &mut Artifacts) -> Outcome {
    let mut total_over_n = Vec::new();
    let mut per_process_over_n = Vec::new();
    let mut all_terminated = true;
    for n in [4, 8, 16] {
        let mut s = spec(
            ProtocolName::Cil,
            n,
            0,
            InputSpec::Random(30 + n as u64),
            StrategyKind::UniformRandom { seed: 3 },
        );
        s.seed = 300 + n as u64;
        s.trials = 500;
        let exp = run(&s, format!("c3-cil-n{n}"), artifacts);
        all_terminated &= exp.rows.iter().all(|r| r.terminated);
        let passes = exp.counter("passes").expect("cil counts passes");
        let mean_total = passes.iter().sum::<u64>() as f64 / passes.len() as f64;
        let mean_per_process = mean_total / n as f64;
        total_over_n.push(mean_total / n as f64);
        per_process_over_n.push(mean_per_process / n as f64);
    }
    let r = ratio(&total_over_n);
    Outcome::new(
        all_terminated && r <= 3.0,
        format!(
            "total passes / n = {total_over_n:.3?} (max/min {r:.2}); per-process passes / n = {per_process_over_n:.3?} (max/min {:.2})",
            ratio(&per_process_over_n)
        ),
    )
}

fn lockstep_attack(artifacts: &mut Artifacts) -> Outcome {
    let n = 4;
    let mut s = spec(
        ProtocolName::Cil,
        n,
        0,
        InputSpec::Split,
        StrategyKind::Lockstep,
    );
    s.trials = 100;
    s.max_steps = 100 * (n * n) as u64;
    s.seed = 4;
    s.cil_atomic = false;
    let split = run(&s, "c4-split".into(), artifacts);
    let split_deciding = split.rows.iter().filter(|r| r.deciders > 0).count();
    s.cil_atomic = true;
    let atomic = run(&s, "c4-atomic".into(), artifacts);
    let atomic_decided = atomic.rows.iter().filter(|r| r.terminated).count();
    Outcome::new(
        split_deciding == 0 && atomic_decided >= 95 && !split.has_violation() && !atomic.has_violation(),
        format!("split substrate: {split_deciding}/100 trials decide; atomic substrate: {atomic_decided}/100 decide"),
    )
}

fn br_strategies() -> Vec<(String, usize, StrategyKind)> {
    let hider = |target, crash| StrategyKind::VoteHider {
        target,
        crash,
        seed: 51,
    };
    vec![
        ("round-robin".into(), 0, StrategyKind::RoundRobin),
        (
            "uniform-random".into(),
            0,
            StrategyKind::UniformRandom { seed: 50 },
        ),
        ("vote-hider-0".into(), 0, hider(Bit::Zero, false)),
        ("vote-hider-1".into(), 0, hider(Bit::One, false)),
        ("vote-hider-crash-0".into(), 7, hider(Bit::Zero, true)),
        ("vote-hider-crash-1".into(), 7, hider(Bit::One, true)),
    ]
}

fn br_spec(t: usize, kind: StrategyKind) -> RunSpec {
    let mut s = spec(ProtocolName::BrCoin, 8, t, InputSpec::Unanimous(0), kind);
    s.trials = 1000;
    s.seed = 5;
    s
}

fn br_bias_floor(artifacts: &mut Artifacts) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, t, kind) in br_strategies() {
        let exp = run(&br_spec(t, kind), format!("c5-{name}"), artifacts);
        let h = harness::decision_histogram(&exp.rows);
        let freq = |b: &str| *h.get(b).unwrap_or(&0) as f64 / exp.rows.len() as f64;
        let (f0, f1) = (freq("0"), freq("1"));
        ok &= f0 >= 0.05 && f1 >= 0.05 && !exp.has_violation();
        notes.push(format!("{name} {f0:.3}/{f1:.3}"));
    }
    Outcome::new(ok, format!("P(0)/P(1): {}", notes.join(", ")))
}

fn br_vote_accounting() -> Outcome {
    let n = 8;
    let batch = batch_size(n);
    let mut failures = Vec::new();
    let mut audited = 0;
    let mut common = (u64::MAX, 0);
    for (name, t, kind) in br_strategies() {
        let s = br_spec(t, kind);
        let exp = harness::run_experiment(&s).expect("valid spec");
        let reports = run_trials(s.trials, |trial| {
            let mut audit = VoteAudit::new(n);
            let out = run_observed(
                &BrCoinProtocol,
                n,
                t,
                &[Bit::Zero; 8],
                s.adversary.build::<BrCoinProtocol>(trial).as_mut(),
                &mut CoinSource::new(s.seed ^ trial),
                &RunOptions {
                    max_steps: s.max_steps,
                    ..RunOptions::default()
                },
                &mut |c, e| audit.observe(c, e),
            )
            .expect("run");
            (out.report.total_steps, audit.finish())
        });
        for (trial, ((steps, report), row)) in reports.iter().zip(&exp.rows).enumerate() {
            audited += 1;
            if *steps != row.total_steps {
                failures.push(format!(
                    "{name}#{trial}: audited run diverged from the criterion 5 trial"
                ));
            }
            if report.max_hidden > 1
                || report.max_post_threshold_writes > batch
                || !report.violations.is_empty()
            {
                failures.push(format!("{name}#{trial}: {:?}", report.violations));
            }
            if let (true, Some(c)) = (report.crash_free, report.common_votes) {
                common = (common.0.min(c), common.1.max(c));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{audited} traces audited, batch size {batch}, crash-free common votes in [{}, {}] (allowed [{}, {}]), failures: {:?}",
            common.0,
            common.1,
            n * n + 1,
            n * n + n,
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn composed_scaling(artifacts: &mut Artifacts) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let strategies = [
        ("uniform-random", StrategyKind::UniformRandom { seed: 70 }),
        (
            "vote-hider-1",
            StrategyKind::VoteHider {
                target: Bit::One,
                crash: false,
                seed: 71,
            },
        ),
        (
            "vote-hider-0",
            StrategyKind::VoteHider {
                target: Bit::Zero,
                crash: false,
                seed: 72,
            },
        ),
    ];
    for (name, kind) in strategies {
        let mut rounds = Vec::new();
        let mut work = Vec::new();
        for n in [4, 8, 16] {
            let mut s = spec(ProtocolName::LadderBr, n, 0, InputSpec::Random(7), kind);
            s.trials = 200;
            s.seed = 700 + n as u64;
            let exp = run(&s, format!("c7-{name}-n{n}"), artifacts);
            let summary = exp.summary.clone().expect("non-empty");
            let agreed = exp
                .rows
                .iter()
                .all(|r| r.decision == "0" || r.decision == "1");
            ok &= summary.terminated == 200 && summary.violating_trials == 0 && agreed;
            rounds.push(summary.mean_rounds);
            work.push(summary.mean_steps / ProtocolName::LadderBr.work_scale(n));
        }
        let (rr, wr) = (ratio(&rounds), ratio(&work));
        ok &= rr <= 3.0 && wr <= 3.0;
        notes.push(format!(
            "{name}: mean rounds {rounds:.2?} (max/min {rr:.2}), steps/(n^2 log2 n) {work:.2?} (max/min {wr:.2})"
        ));
    }
    Outcome::new(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let mut artifacts = Artifacts::new();
    let mut lines = Vec::new();
    let mut record = |id: u32, outcome: Outcome, started: Instant| {
        let line = format!(
            "criterion {id}: {} ({:.1}s) {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
        println!("{line}");
        lines.push((outcome.pass, line));
    };

    let t = Instant::now();
    record(1, exhaustive_safety(), t);
    let t = Instant::now();
    record(2, unanimous_fast_path(&mut artifacts), t);
    let t = Instant::now();
    record(3, cil_passes(&mut artifacts), t);
    let t = Instant::now();
    record(4, lockstep_attack(&mut artifacts), t);
    let t = Instant::now();
    record(5, br_bias_floor(&mut artifacts), t);
    let t = Instant::now();
    record(6, br_vote_accounting(), t);
    let t = Instant::now();
    record(7, composed_scaling(&mut artifacts), t);

    let t = Instant::now();
    let mut again = Artifacts::new();
    unanimous_fast_path(&mut again);
    cil_passes(&mut again);
    lockstep_attack(&mut again);
    br_bias_floor(&mut again);
    composed_scaling(&mut again);
    let differing: Vec<&String> = artifacts
        .keys()
        .filter(|k| again.get(*k) != artifacts.get(*k))
        .collect();
    record(
        8,
        Outcome::new(
            differing.is_empty() && again.len() == artifacts.len(),
            format!(
                "{} artifacts regenerated, differing: {differing:?}",
                artifacts.len()
            ),
        ),
        t,
    );

    let failed = lines.iter().filter(|(p, _)| !p).count();
    println!(
        "acceptance: {} of {} criteria pass",
        lines.len() - failed,
        lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
