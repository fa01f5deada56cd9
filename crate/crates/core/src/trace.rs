//! Structured traversal recording and trace comparison.
//!
//! The engine reports one `TraceEvent` per port it passes; sinks decide
//! whether to keep, count, or serialize them. The serialized form is one
//! tab-separated line per event under a `ldtrace 1` header, with `-` for
//! fields an event does not carry. Comparison works on projected traces
//! and treats node ids up to order-isomorphism, because bookkeeping goals
//! inserted by the transformations shift the raw counters.

use std::fmt;
use std::io::{self, Write};

use crate::term::Pred;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EventKind {
    Call,
    Exit,
    Redo,
    Fail,
    ClauseTry,
    Throw,
    Catch,
    Backjump,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Call => "Call",
            EventKind::Exit => "Exit",
            EventKind::Redo => "Redo",
            EventKind::Fail => "Fail",
            EventKind::ClauseTry => "ClauseTry",
            EventKind::Throw => "Throw",
            EventKind::Catch => "Catch",
            EventKind::Backjump => "Backjump",
        };
        f.write_str(s)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: EventKind,
    pub pred: Pred,
    /// Node id, for ClauseTry/Redo/Fail of user calls and for Backjump.
    pub node: Option<u64>,
    /// 1-based clause ordinal within the predicate, for ClauseTry.
    pub clause_index: Option<usize>,
    /// Rendered ball snapshot, for Throw/Catch.
    pub ball: Option<String>,
}

impl TraceEvent {
    /// The serialized line: step, kind, pred, node, clause_index, ball.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step,
            self.kind,
            self.pred,
            self.node.map_or_else(|| "-".into(), |n| n.to_string()),
            self.clause_index
                .map_or_else(|| "-".into(), |n| n.to_string()),
            self.ball.as_deref().unwrap_or("-"),
        )
    }
}

/// Receives events as they happen. Append-only; a write failure aborts the
/// engine run with an error status.
pub trait TraceSink {
    fn record(&mut self, ev: &TraceEvent) -> io::Result<()>;
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _ev: &TraceEvent) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps the events in memory, for comparison and statistics.
#[derive(Default)]
pub struct MemorySink {
    pub events: Vec<TraceEvent>,
}

impl MemorySink {
    pub fn new() -> Self {
        MemorySink::default()
    }
}

impl TraceSink for MemorySink {
    fn record(&mut self, ev: &TraceEvent) -> io::Result<()> {
        self.events.push(ev.clone());
        Ok(())
    }
}

/// Counts events without storing them; used for long benchmark runs.
#[derive(Default)]
pub struct CountingSink {
    pub stats: TraceStats,
}

impl TraceSink for CountingSink {
    fn record(&mut self, ev: &TraceEvent) -> io::Result<()> {
        self.stats.observe(ev);
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "ldtrace 1";

/// Serializes events to a writer in the line format, emitting the header
/// before the first event.
pub struct WriterSink<W: Write> {
    w: W,
    wrote_header: bool,
}

impl<W: Write> WriterSink<W> {
    pub fn new(w: W) -> Self {
        WriterSink {
            w,
            wrote_header: false,
        }
    }

    /// Flushes and returns the underlying writer.
    pub fn finish(mut self) -> io::Result<W> {
        if !self.wrote_header {
            writeln!(self.w, "{}", TRACE_HEADER)?;
        }
        self.w.flush()?;
        Ok(self.w)
    }
}

impl<W: Write> TraceSink for WriterSink<W> {
    fn record(&mut self, ev: &TraceEvent) -> io::Result<()> {
        if !self.wrote_header {
            writeln!(self.w, "{}", TRACE_HEADER)?;
            self.wrote_header = true;
        }
        writeln!(self.w, "{}", ev.to_line())
    }
}

/// Feeds two sinks at once.
pub struct Tee<'a, 'b>(pub &'a mut dyn TraceSink, pub &'b mut dyn TraceSink);

impl TraceSink for Tee<'_, '_> {
    fn record(&mut self, ev: &TraceEvent) -> io::Result<()> {
        self.0.record(ev)?;
        self.1.record(ev)
    }
}

/// True for predicates that transformations (or the two backjump modes)
/// introduce as bookkeeping and that projection therefore erases.
fn is_bookkeeping(pred: &Pred) -> bool {
    matches!(
        (pred.name.as_str(), pred.arity),
        ("btid", 2) | ("catch", 3) | ("throw", 1) | ("=", 2) | ("backjump", 1) | ("parent_choice", 1)
    ) || pred.name.as_str().starts_with('$')
}

/// Removes bookkeeping events, keeping user predicates. Idempotent.
pub fn project_user(events: &[TraceEvent]) -> Vec<TraceEvent> {
    events
        .iter()
        .filter(|e| !is_bookkeeping(&e.pred))
        .cloned()
        .collect()
}

/// Keeps only ClauseTry events (used for the paper-level equivalence
/// checks, where only the visited-alternative sequence matters).
pub fn clause_tries(events: &[TraceEvent]) -> Vec<TraceEvent> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::ClauseTry)
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equal,
    /// Index of the first differing position with the step numbers of the
    /// events on either side (None when the side ran out of events).
    FirstDivergence {
        index: usize,
        left_step: Option<u64>,
        right_step: Option<u64>,
    },
}

/// Structural trace comparison: events must agree on kind, predicate,
/// clause index and ball text; node ids are compared up to relabeling by
/// first occurrence. Step numbers are reporting-only.
pub fn compare(left: &[TraceEvent], right: &[TraceEvent]) -> Verdict {
    let mut fwd: Vec<(u64, u64)> = Vec::new();
    let n = left.len().max(right.len());
    for i in 0..n {
        let (l, r) = match (left.get(i), right.get(i)) {
            (Some(l), Some(r)) => (l, r),
            (l, r) => {
                return Verdict::FirstDivergence {
                    index: i,
                    left_step: l.map(|e| e.step),
                    right_step: r.map(|e| e.step),
                }
            }
        };
        let same = l.kind == r.kind
            && l.pred == r.pred
            && l.clause_index == r.clause_index
            && l.ball == r.ball
            && nodes_correspond(&mut fwd, l.node, r.node);
        if !same {
            return Verdict::FirstDivergence {
                index: i,
                left_step: Some(l.step),
                right_step: Some(r.step),
            };
        }
    }
    Verdict::Equal
}

fn nodes_correspond(map: &mut Vec<(u64, u64)>, l: Option<u64>, r: Option<u64>) -> bool {
    match (l, r) {
        (None, None) => true,
        (Some(l), Some(r)) => {
            let fwd = map.iter().find(|(a, _)| *a == l).map(|(_, b)| *b);
            let bwd = map.iter().find(|(_, b)| *b == r).map(|(a, _)| *a);
            match (fwd, bwd) {
                (None, None) => {
                    map.push((l, r));
                    true
                }
                (Some(b), Some(a)) => b == r && a == l,
                _ => false,
            }
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub calls: u64,
    pub redos: u64,
    pub fails: u64,
    pub clause_tries: u64,
    pub throws: u64,
    pub catches: u64,
    pub backjumps: u64,
    /// Peak number of pending calls (calls minus completed exits/fails);
    /// an upper bound on derivation depth when exceptions truncate calls.
    pub max_depth: u64,
    depth: u64,
}

impl TraceStats {
    pub fn observe(&mut self, ev: &TraceEvent) {
        match ev.kind {
            EventKind::Call => {
                self.calls += 1;
                self.depth += 1;
                self.max_depth = self.max_depth.max(self.depth);
            }
            EventKind::Exit | EventKind::Fail => {
                if ev.kind == EventKind::Fail {
                    self.fails += 1;
                }
                self.depth = self.depth.saturating_sub(1);
            }
            EventKind::Redo => self.redos += 1,
            EventKind::ClauseTry => self.clause_tries += 1,
            EventKind::Throw => self.throws += 1,
            EventKind::Catch => self.catches += 1,
            EventKind::Backjump => self.backjumps += 1,
        }
    }
}

/// Counters over a recorded trace.
pub fn stats(events: &[TraceEvent]) -> TraceStats {
    let mut s = TraceStats::default();
    for e in events {
        s.observe(e);
    }
    s
}

/// Validates call nesting over the node ids that user-call events carry.
///
/// Every node records its parent chain at Call time. An Exit must close
/// the innermost open node (an exception may have truncated nodes above
/// it, which is tolerated only when the trace contains Throw or Backjump
/// events); Redo and Fail restore the chain the node was called under;
/// ClauseTry must name the innermost open node. Events without a node
/// (builtins) take no part. Node ids must be fresh and increasing.
pub fn check_well_nested(events: &[TraceEvent]) -> Result<(), String> {
    let truncation_possible = events
        .iter()
        .any(|e| matches!(e.kind, EventKind::Throw | EventKind::Backjump));
    let mut chain: Vec<u64> = Vec::new();
    let mut known: Vec<(u64, Vec<u64>, Pred)> = Vec::new(); // node, parent chain, pred
    let mut max_node: Option<u64> = None;
    for (i, e) in events.iter().enumerate() {
        let Some(n) = e.node else { continue };
        if e.kind == EventKind::Backjump {
            continue;
        }
        let err = |msg: String| Err(format!("event {i} ({} {}): {msg}", e.kind, e.pred));
        match e.kind {
            EventKind::Call => {
                if max_node.is_some_and(|m| n <= m) {
                    return err(format!("node {n} is not fresh"));
                }
                max_node = Some(n);
                known.push((n, chain.clone(), e.pred.clone()));
                chain.push(n);
            }
            EventKind::Exit => match chain.iter().rposition(|&m| m == n) {
                Some(pos) if pos + 1 == chain.len() => {
                    chain.pop();
                }
                Some(pos) if truncation_possible => chain.truncate(pos),
                Some(_) => return err(format!("node {n} exits over open inner calls")),
                None => return err(format!("node {n} exits but is not open")),
            },
            EventKind::Redo | EventKind::Fail => {
                let Some((_, parents, pred)) = known.iter().find(|(m, _, _)| *m == n) else {
                    return err(format!("node {n} was never called"));
                };
                if *pred != e.pred {
                    return err(format!("node {n} belongs to {pred}"));
                }
                chain = parents.clone();
                if e.kind == EventKind::Redo {
                    chain.push(n);
                }
            }
            EventKind::ClauseTry => {
                if chain.last() != Some(&n) {
                    return err(format!("node {n} tries a clause while not innermost"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}
