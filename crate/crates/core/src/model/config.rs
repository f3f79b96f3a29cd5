use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::ids::{Bit, MsgId, ProcessId};
use super::protocol::Protocol;

/// Crash allowance for one execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaultBudget {
    pub t: usize,
    pub crashed_so_far: usize,
}

impl FaultBudget {
    pub fn new(t: usize) -> Self {
        FaultBudget {
            t,
            crashed_so_far: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.t - self.crashed_so_far
    }
}

/// Two-column grid of monotone multi-writer bits. `mark[0][0]` and `mark[1][0]`
/// start out set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MarkGrid {
    /// Bit `i - 1` of column `b` is `mark[b][i]`; row 0 is implicit.
    cols: [Vec<u64>; 2],
}

impl MarkGrid {
    pub fn get(&self, b: Bit, i: u64) -> bool {
        if i == 0 {
            return true;
        }
        let (w, k) = ((i - 1) / 64, (i - 1) % 64);
        self.cols[b.index()]
            .get(w as usize)
            .is_some_and(|word| word >> k & 1 == 1)
    }

    /// Sets a bit. There is deliberately no way to clear one.
    pub fn set(&mut self, b: Bit, i: u64) {
        if i == 0 {
            return;
        }
        let (w, k) = (((i - 1) / 64) as usize, (i - 1) % 64);
        let col = &mut self.cols[b.index()];
        if col.len() <= w {
            col.resize(w + 1, 0);
        }
        col[w] |= 1 << k;
    }

    /// Set bits in `(Bit::Zero, 0), (Bit::Zero, 1), ..., (Bit::One, 0), ...` order.
    pub fn iter(&self) -> impl Iterator<Item = (Bit, u64)> + '_ {
        [Bit::Zero, Bit::One].into_iter().flat_map(move |b| {
            let col = &self.cols[b.index()];
            let rows = 1 + 64 * col.len() as u64;
            (0..rows)
                .filter(move |&i| self.get(b, i))
                .map(move |i| (b, i))
        })
    }
}

/// Undelivered messages, ordered by id.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MessagePool<M> {
    entries: Vec<(MsgId, Envelope<M>)>,
}

impl<M> Default for MessagePool<M> {
    fn default() -> Self {
        MessagePool {
            entries: Vec::new(),
        }
    }
}

impl<M> MessagePool<M> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &MsgId) -> Option<&Envelope<M>> {
        let i = self.entries.binary_search_by_key(id, |(k, _)| *k).ok()?;
        Some(&self.entries[i].1)
    }

    pub fn insert(&mut self, id: MsgId, env: Envelope<M>) {
        match self.entries.binary_search_by_key(&id, |(k, _)| *k) {
            Ok(i) => self.entries[i].1 = env,
            Err(i) => self.entries.insert(i, (id, env)),
        }
    }

    pub fn remove(&mut self, id: &MsgId) -> Option<Envelope<M>> {
        let i = self.entries.binary_search_by_key(id, |(k, _)| *k).ok()?;
        Some(self.entries.remove(i).1)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&MsgId, &Envelope<M>) -> bool) {
        self.entries.retain(|(k, e)| keep(k, e));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MsgId, &Envelope<M>)> {
        self.entries.iter().map(|(k, e)| (k, e))
    }
}

/// A message in flight.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Envelope<M> {
    pub to: ProcessId,
    pub msg: M,
}

/// Everything the engine keeps about one process.
pub struct ProcSlot<P: Protocol> {
    pub state: P::State,
    pub alive: bool,
    /// Number of flips taken so far; the index of the next flip.
    pub flips: u64,
    /// Messages sent so far; the sequence number of the next one.
    pub sent: u32,
    /// First decision observed by the engine. Write-once.
    pub decided: Option<P::Value>,
}

impl<P: Protocol> Clone for ProcSlot<P> {
    fn clone(&self) -> Self {
        ProcSlot {
            state: self.state.clone(),
            alive: self.alive,
            flips: self.flips,
            sent: self.sent,
            decided: self.decided.clone(),
        }
    }
}

impl<P: Protocol> PartialEq for ProcSlot<P> {
    fn eq(&self, o: &Self) -> bool {
        self.state == o.state
            && self.alive == o.alive
            && self.flips == o.flips
            && self.sent == o.sent
            && self.decided == o.decided
    }
}

impl<P: Protocol> Eq for ProcSlot<P> {}

impl<P: Protocol> Hash for ProcSlot<P> {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.state.hash(h);
        self.alive.hash(h);
        self.flips.hash(h);
        self.sent.hash(h);
        self.decided.hash(h);
    }
}

impl<P: Protocol> fmt::Debug for ProcSlot<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcSlot")
            .field("state", &self.state)
            .field("alive", &self.alive)
            .field("flips", &self.flips)
            .field("decided", &self.decided)
            .finish()
    }
}

/// Full system state: process states, the message pool, the register store, and
/// the mark grid. Contains no history, so two configurations reached along
/// different paths compare equal when they are the same state.
pub struct SystemConfig<P: Protocol> {
    pub n: usize,
    pub inputs: Arc<[P::Value]>,
    pub procs: Vec<ProcSlot<P>>,
    pub pool: MessagePool<P::Msg>,
    pub registers: BTreeMap<P::Reg, P::Word>,
    pub grid: MarkGrid,
    pub faults: FaultBudget,
}

impl<P: Protocol> SystemConfig<P> {
    pub fn read_register(&self, reg: &P::Reg) -> P::Word {
        self.registers.get(reg).cloned().unwrap_or_default()
    }

    pub fn state(&self, p: ProcessId) -> &P::State {
        &self.procs[p.index()].state
    }

    pub fn alive(&self, p: ProcessId) -> bool {
        self.procs[p.index()].alive
    }

    pub fn decided(&self, p: ProcessId) -> Option<&P::Value> {
        self.procs[p.index()].decided.as_ref()
    }

    pub fn process_ids(&self) -> impl Iterator<Item = ProcessId> {
        (0..self.n).map(ProcessId)
    }

    pub fn crashed(&self) -> usize {
        self.faults.crashed_so_far
    }
}

impl<P: Protocol> Clone for SystemConfig<P> {
    fn clone(&self) -> Self {
        SystemConfig {
            n: self.n,
            inputs: self.inputs.clone(),
            procs: self.procs.clone(),
            pool: self.pool.clone(),
            registers: self.registers.clone(),
            grid: self.grid.clone(),
            faults: self.faults,
        }
    }
}

impl<P: Protocol> PartialEq for SystemConfig<P> {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.inputs == o.inputs
            && self.procs == o.procs
            && self.pool == o.pool
            && self.registers == o.registers
            && self.grid == o.grid
            && self.faults == o.faults
    }
}

impl<P: Protocol> Eq for SystemConfig<P> {}

impl<P: Protocol> Hash for SystemConfig<P> {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.n.hash(h);
        self.inputs.hash(h);
        self.procs.hash(h);
        self.pool.hash(h);
        self.registers.hash(h);
        self.grid.hash(h);
        self.faults.hash(h);
    }
}

impl<P: Protocol> fmt::Debug for SystemConfig<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemConfig")
            .field("procs", &self.procs)
            .field("pool", &self.pool)
            .field("registers", &self.registers)
            .field("grid", &self.grid)
            .field("faults", &self.faults)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_starts_with_both_zero_marks() {
        let g = MarkGrid::default();
        assert!(g.get(Bit::Zero, 0));
        assert!(g.get(Bit::One, 0));
        assert!(!g.get(Bit::One, 1));
    }

    #[test]
    fn grid_set_is_monotone() {
        let mut g = MarkGrid::default();
        g.set(Bit::One, 3);
        g.set(Bit::One, 3);
        assert!(g.get(Bit::One, 3));
        assert_eq!(g.iter().count(), 3);
    }
}
