//! Execution traces and the line-oriented dump format.
//!
//! Dump format: optional `#` header lines, then one applied step per line as
//! `seq actor action result`, separated by single spaces. None of the four
//! fields contains whitespace.

use std::fmt::Write as _;

use super::ids::ProcessId;
use super::protocol::{ProtoOutcome, Protocol};
use super::step::{Step, StepShape};
use crate::error::TraceError;

pub type StepOf<P> = Step<<P as Protocol>::Msg, <P as Protocol>::Reg, <P as Protocol>::Word>;

pub struct TraceEntry<P: Protocol> {
    pub step: StepOf<P>,
    pub outcome: ProtoOutcome<P>,
}

impl<P: Protocol> Clone for TraceEntry<P> {
    fn clone(&self) -> Self {
        TraceEntry {
            step: self.step.clone(),
            outcome: self.outcome.clone(),
        }
    }
}

impl<P: Protocol> std::fmt::Debug for TraceEntry<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.step, self.outcome)
    }
}

/// Append-only sequence of applied steps with their observable results.
pub struct ExecutionTrace<P: Protocol> {
    entries: Vec<TraceEntry<P>>,
}

impl<P: Protocol> Default for ExecutionTrace<P> {
    fn default() -> Self {
        ExecutionTrace {
            entries: Vec::new(),
        }
    }
}

impl<P: Protocol> Clone for ExecutionTrace<P> {
    fn clone(&self) -> Self {
        ExecutionTrace {
            entries: self.entries.clone(),
        }
    }
}

impl<P: Protocol> std::fmt::Debug for ExecutionTrace<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(&self.entries).finish()
    }
}

impl<P: Protocol> ExecutionTrace<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: StepOf<P>, outcome: ProtoOutcome<P>) {
        self.entries.push(TraceEntry { step, outcome });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TraceEntry<P>] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEntry<P>> {
        self.entries.iter()
    }

    pub fn shapes(&self) -> impl Iterator<Item = StepShape> + '_ {
        self.entries.iter().map(|e| e.step.shape())
    }

    pub fn crash_count(&self) -> usize {
        self.entries.iter().filter(|e| e.step.is_crash()).count()
    }

    /// Renders the trace in dump format, preceded by `header` lines (each
    /// prefixed with `# `).
    pub fn dump(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        for (seq, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{seq} {} {}", e.step, e.outcome);
        }
        out
    }
}

/// One parsed line of a trace dump.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLine {
    pub seq: usize,
    pub actor: ProcessId,
    pub action: String,
    pub result: String,
}

/// A parsed dump: header lines (without the `# ` prefix) and step lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceDump {
    pub header: Vec<String>,
    pub lines: Vec<TraceLine>,
}

impl TraceDump {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut dump = TraceDump::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                dump.header.push(h.trim().to_string());
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 4 {
                return Err(TraceError::Malformed {
                    line: lineno + 1,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let seq: usize = fields[0].parse().map_err(|_| TraceError::Malformed {
                line: lineno + 1,
                reason: format!("bad sequence number `{}`", fields[0]),
            })?;
            if seq != dump.lines.len() {
                return Err(TraceError::Malformed {
                    line: lineno + 1,
                    reason: format!("expected sequence {}, found {seq}", dump.lines.len()),
                });
            }
            let actor = fields[1].parse().map_err(|e| TraceError::Malformed {
                line: lineno + 1,
                reason: e,
            })?;
            dump.lines.push(TraceLine {
                seq,
                actor,
                action: fields[2].to_string(),
                result: fields[3].to_string(),
            });
        }
        Ok(dump)
    }

    /// Looks up `key=value` in the header lines.
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .flat_map(|h| h.split_whitespace())
            .find_map(|kv| {
                let (k, v) = kv.split_once('=')?;
                (k == key).then_some(v)
            })
    }
}
