//! Ordered event log of a run, detailed enough to reconstruct a Gantt chart,
//! plus the jsonl/csv serializers.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::policy::Subject;
use crate::task::{CtId, JobKey, TaskId, Tick};

/// What happened at a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Release,
    Fault,
    BackupActivate,
    Alter,
    Reassign,
    Preempt,
    Dispatch,
    ServerReplenish,
    Complete,
    Miss,
    Discard,
}

impl EventKind {
    /// Fixed intra-tick precedence; events sharing a tick are emitted in this
    /// order so traces are deterministic.
    pub fn intra_tick_rank(self) -> u8 {
        match self {
            EventKind::Release => 0,
            EventKind::Fault => 1,
            EventKind::BackupActivate => 2,
            EventKind::Alter => 3,
            EventKind::Reassign => 4,
            EventKind::Preempt => 5,
            EventKind::Dispatch => 6,
            EventKind::ServerReplenish => 7,
            EventKind::Complete => 8,
            EventKind::Miss => 9,
            EventKind::Discard => 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Release => "Release",
            EventKind::Fault => "Fault",
            EventKind::BackupActivate => "BackupActivate",
            EventKind::Alter => "Alter",
            EventKind::Reassign => "Reassign",
            EventKind::Preempt => "Preempt",
            EventKind::Dispatch => "Dispatch",
            EventKind::ServerReplenish => "ServerReplenish",
            EventKind::Complete => "Complete",
            EventKind::Miss => "Miss",
            EventKind::Discard => "Discard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Release" => EventKind::Release,
            "Fault" => EventKind::Fault,
            "BackupActivate" => EventKind::BackupActivate,
            "Alter" => EventKind::Alter,
            "Reassign" => EventKind::Reassign,
            "Preempt" => EventKind::Preempt,
            "Dispatch" => EventKind::Dispatch,
            "ServerReplenish" => EventKind::ServerReplenish,
            "Complete" => EventKind::Complete,
            "Miss" => EventKind::Miss,
            "Discard" => EventKind::Discard,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One trace record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: Tick,
    pub proc: Option<u32>,
    pub kind: EventKind,
    pub subject: Option<Subject>,
    pub detail: String,
}

impl TraceEvent {
    pub fn subject_label(&self) -> String {
        self.subject.map(|s| s.label()).unwrap_or_default()
    }
}

/// Append-only event log; events at equal ticks follow the fixed intra-tick
/// kind order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(events: Vec<TraceEvent>) -> Self {
        Trace { events }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    pub fn count_kind(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// First event matching kind and subject, if any.
    pub fn find(&self, kind: EventKind, subject: Subject) -> Option<&TraceEvent> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.subject == Some(subject))
    }

    /// Who occupied each processor at every tick of [0, until), rebuilt from
    /// Dispatch/Preempt/Complete/Miss/Discard/Fault events. Used by the
    /// oracle-equivalence tests and the Gantt exporter.
    pub fn occupancy(&self, procs: u32, until: Tick) -> Vec<Vec<Option<Subject>>> {
        let mut grid = vec![vec![None; until as usize]; procs as usize];
        let mut current: Vec<Option<Subject>> = vec![None; procs as usize];
        let mut cursor: Tick = 0;
        for ev in &self.events {
            while cursor < ev.tick && cursor < until {
                for (p, cur) in current.iter().enumerate() {
                    grid[p][cursor as usize] = *cur;
                }
                cursor += 1;
            }
            if ev.tick >= until && cursor >= until {
                // Still apply state changes? No: occupancy only covers [0, until).
                break;
            }
            let Some(p) = ev.proc else { continue };
            let p = p as usize;
            if p >= current.len() {
                continue;
            }
            match ev.kind {
                EventKind::Dispatch => current[p] = ev.subject,
                EventKind::Preempt | EventKind::Fault => {
                    if ev.kind == EventKind::Fault || current[p] == ev.subject {
                        current[p] = None;
                    }
                }
                EventKind::Complete | EventKind::Discard => {
                    if current[p] == ev.subject {
                        current[p] = None;
                    }
                }
                _ => {}
            }
        }
        while cursor < until {
            for (p, cur) in current.iter().enumerate() {
                grid[p][cursor as usize] = *cur;
            }
            cursor += 1;
        }
        grid
    }
}

/// Trace serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Jsonl,
    Csv,
}

impl TraceFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jsonl" => Some(TraceFormat::Jsonl),
            "csv" => Some(TraceFormat::Csv),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Jsonl => "jsonl",
            TraceFormat::Csv => "csv",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WireEvent<'a> {
    t: Tick,
    proc: Option<u32>,
    kind: &'a str,
    id: &'a str,
    detail: &'a str,
}

/// Write a trace: jsonl is one event object per line, csv the same columns
/// with a header row. Ordering is identical to the in-memory trace.
pub fn emit_trace(trace: &Trace, path: &Path, format: TraceFormat) -> Result<(), ScenarioError> {
    let display = path.display().to_string();
    match format {
        TraceFormat::Jsonl => {
            let mut out = std::io::BufWriter::new(
                std::fs::File::create(path).map_err(|e| ScenarioError::io(&display, e))?,
            );
            for ev in trace.iter() {
                let label = ev.subject_label();
                let wire = WireEvent {
                    t: ev.tick,
                    proc: ev.proc,
                    kind: ev.kind.as_str(),
                    id: &label,
                    detail: &ev.detail,
                };
                serde_json::to_writer(&mut out, &wire)
                    .map_err(|e| ScenarioError::io(&display, e.into()))?;
                out.write_all(b"\n")
                    .map_err(|e| ScenarioError::io(&display, e))?;
            }
            out.flush().map_err(|e| ScenarioError::io(&display, e))?;
        }
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(&display, e))?;
            w.write_record(["t", "proc", "kind", "id", "detail"])
                .map_err(|e| csv_io(&display, e))?;
            for ev in trace.iter() {
                let proc = ev.proc.map(|p| p.to_string()).unwrap_or_default();
                w.write_record([
                    ev.tick.to_string(),
                    proc,
                    ev.kind.as_str().to_string(),
                    ev.subject_label(),
                    ev.detail.clone(),
                ])
                .map_err(|e| csv_io(&display, e))?;
            }
            w.flush().map_err(|e| ScenarioError::io(&display, e))?;
        }
    }
    Ok(())
}

fn csv_io(path: &str, e: csv::Error) -> ScenarioError {
    ScenarioError::io(path, std::io::Error::other(e))
}

/// Parse a subject label of the form `J<task>.<index>` or `CT<id>`.
pub fn parse_subject(label: &str) -> Option<Subject> {
    if label.is_empty() {
        return None;
    }
    if let Some(rest) = label.strip_prefix("CT") {
        return rest.parse::<u32>().ok().map(|id| Subject::Critical(CtId(id)));
    }
    let rest = label.strip_prefix('J')?;
    let (task, index) = rest.split_once('.')?;
    Some(Subject::Job(JobKey {
        task: TaskId(task.parse().ok()?),
        index: index.parse().ok()?,
    }))
}

/// Read back a jsonl trace written by `emit_trace`.
pub fn parse_trace_jsonl(path: &Path) -> Result<Trace, ScenarioError> {
    let display = path.display().to_string();
    let data =
        std::fs::read_to_string(path).map_err(|e| ScenarioError::io(&display, e))?;
    let mut events = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireEvent = serde_json::from_str(line).map_err(|e| ScenarioError::Parse {
            path: display.clone(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let kind = EventKind::parse(wire.kind).ok_or_else(|| ScenarioError::Parse {
            path: display.clone(),
            line: i + 1,
            column: 1,
            message: format!("unknown event kind {:?}", wire.kind),
        })?;
        events.push(TraceEvent {
            tick: wire.t,
            proc: wire.proc,
            kind,
            subject: parse_subject(wire.id),
            detail: wire.detail.to_string(),
        });
    }
    Ok(Trace::new(events))
}

/// One contiguous execution segment on a processor: [start, end) ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GanttSegment {
    pub proc: u32,
    pub subject: Subject,
    pub start: Tick,
    pub end: Tick,
    /// Why the segment ended: preempt, complete, discard, fault, or open
    /// (still running when the trace stops).
    pub end_kind: &'static str,
}

/// Merge the trace into per-processor execution segments. Segments on one
/// processor never overlap.
///
/// Events sharing a tick are applied closers-first (the intra-tick kind order
/// puts Dispatch before Complete, but the outgoing occupant's segment ends
/// for its own reason, not as a bare switch).
pub fn gantt_segments(trace: &Trace) -> Vec<GanttSegment> {
    use std::collections::BTreeMap;
    let mut open: BTreeMap<u32, (Subject, Tick)> = BTreeMap::new();
    let mut segments = Vec::new();
    let mut close =
        |open: &mut BTreeMap<u32, (Subject, Tick)>, p: u32, end: Tick, why: &'static str| {
            if let Some((subj, start)) = open.remove(&p) {
                if end > start {
                    segments.push(GanttSegment {
                        proc: p,
                        subject: subj,
                        start,
                        end,
                        end_kind: why,
                    });
                }
            }
        };
    let events = trace.events();
    let mut last_tick = 0;
    let mut i = 0;
    while i < events.len() {
        let tick = events[i].tick;
        last_tick = tick;
        let mut j = i;
        while j < events.len() && events[j].tick == tick {
            j += 1;
        }
        for ev in &events[i..j] {
            let Some(p) = ev.proc else { continue };
            let why = match ev.kind {
                EventKind::Preempt => "preempt",
                EventKind::Complete => "complete",
                EventKind::Discard => "discard",
                EventKind::Fault => "fault",
                _ => continue,
            };
            if ev.kind == EventKind::Fault
                || open.get(&p).map(|(s, _)| Some(*s)) == Some(ev.subject)
            {
                close(&mut open, p, tick, why);
            }
        }
        for ev in &events[i..j] {
            let Some(p) = ev.proc else { continue };
            if ev.kind == EventKind::Dispatch {
                close(&mut open, p, tick, "switch");
                if let Some(s) = ev.subject {
                    open.insert(p, (s, tick));
                }
            }
        }
        i = j;
    }
    let procs: Vec<u32> = open.keys().copied().collect();
    for p in procs {
        close(&mut open, p, last_tick, "open");
    }
    segments.sort_by_key(|s| (s.proc, s.start));
    segments
}

/// Export the Gantt data as CSV rows (proc, id, start, end, kind).
pub fn emit_gantt(trace: &Trace, path: &Path) -> Result<(), ScenarioError> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(&display, e))?;
    w.write_record(["proc", "id", "start", "end", "kind"])
        .map_err(|e| csv_io(&display, e))?;
    for seg in gantt_segments(trace) {
        w.write_record([
            seg.proc.to_string(),
            seg.subject.label(),
            seg.start.to_string(),
            seg.end.to_string(),
            seg.end_kind.to_string(),
        ])
        .map_err(|e| csv_io(&display, e))?;
    }
    w.flush().map_err(|e| ScenarioError::io(&display, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(tick: Tick, proc: u32, kind: EventKind, label: &str) -> TraceEvent {
        TraceEvent {
            tick,
            proc: Some(proc),
            kind,
            subject: parse_subject(label),
            detail: String::new(),
        }
    }

    #[test]
    fn subject_labels_round_trip() {
        for label in ["J1.1", "J12.34", "CT3"] {
            assert_eq!(parse_subject(label).unwrap().label(), label);
        }
        assert_eq!(parse_subject(""), None);
        assert_eq!(parse_subject("X9"), None);
    }

    #[test]
    fn gantt_unpreempted_run_is_one_segment() {
        let trace = Trace::new(vec![
            ev(0, 0, EventKind::Dispatch, "J1.1"),
            ev(5, 0, EventKind::Complete, "J1.1"),
        ]);
        let segs = gantt_segments(&trace);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (0, 5));
        assert_eq!(segs[0].end_kind, "complete");
    }

    #[test]
    fn gantt_preemption_splits_segments() {
        let trace = Trace::new(vec![
            ev(0, 0, EventKind::Dispatch, "J1.1"),
            ev(2, 0, EventKind::Preempt, "J1.1"),
            ev(2, 0, EventKind::Dispatch, "J2.1"),
            ev(5, 0, EventKind::Preempt, "J2.1"),
            ev(5, 0, EventKind::Dispatch, "J1.1"),
            ev(7, 0, EventKind::Complete, "J1.1"),
        ]);
        let segs = gantt_segments(&trace);
        let j1: Vec<_> = segs
            .iter()
            .filter(|s| s.subject.label() == "J1.1")
            .map(|s| (s.start, s.end))
            .collect();
        assert_eq!(j1, vec![(0, 2), (5, 7)]);
        // Segments per processor are disjoint and sorted.
        for w in segs.windows(2) {
            if w[0].proc == w[1].proc {
                assert!(w[0].end <= w[1].start);
            }
        }
    }

    #[test]
    fn emit_gantt_empty_trace_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        emit_gantt(&Trace::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "proc,id,start,end,kind");
    }

    #[test]
    fn emit_trace_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let trace = Trace::new(vec![
            TraceEvent {
                tick: 0,
                proc: Some(0),
                kind: EventKind::Release,
                subject: parse_subject("J1.1"),
                detail: "d=4".into(),
            },
            TraceEvent {
                tick: 3,
                proc: None,
                kind: EventKind::Release,
                subject: parse_subject("CT1"),
                detail: "d=9".into(),
            },
        ]);
        emit_trace(&trace, &path, TraceFormat::Jsonl).unwrap();
        let back = parse_trace_jsonl(&path).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn emit_trace_empty_jsonl_is_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        emit_trace(&Trace::default(), &path, TraceFormat::Jsonl).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn emit_trace_single_event_single_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let trace = Trace::new(vec![ev(0, 0, EventKind::Dispatch, "J1.1")]);
        emit_trace(&trace, &path, TraceFormat::Jsonl).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("\"Dispatch\""));
    }
}
