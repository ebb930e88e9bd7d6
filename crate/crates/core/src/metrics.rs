//! Offline schedulability tests, overload detection, and post-run metrics:
//! miss rate, guarantee ratio, pre/post-critical success rates, and the
//! stability condition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::policy::Subject;
use crate::task::{CriticalTask, TaskId, TaskSet, Tick};
use crate::trace::{EventKind, Trace};

/// Counters and ratios extracted from one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Ordinary job instances released to the processor set.
    pub n_total: u64,
    /// Ordinary jobs that missed their deadline.
    pub miss_n: u64,
    /// Jobs pushed to the postponed state by critical arrivals.
    pub waited_tx: u64,
    /// Critical tasks that arrived.
    pub ct_arrived: u64,
    /// Critical tasks that completed without missing.
    pub ct_met: u64,
    /// Guarantee ratio over arrivals with deadlines before the first critical
    /// arrival; `None` when that set is empty or no critical task arrived.
    pub success_before_x: Option<f64>,
    /// Guarantee ratio from the first critical arrival on (critical tasks
    /// included); `None` when no critical task arrived.
    pub success_after_y: Option<f64>,
    pub miss_rate: f64,
    pub guarantee_ratio: f64,
    /// Deadline misses per task.
    pub per_task_miss: BTreeMap<u32, u64>,
}

/// Liu-Layland utilization bound n*(2^(1/n) - 1).
pub fn ll_bound(n: usize) -> Result<f64, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroTasks);
    }
    let n = n as f64;
    Ok(n * (2f64.powf(1.0 / n) - 1.0))
}

/// Sufficient rate-monotonic schedulability verdict. The bound is sufficient
/// but not necessary, so the negative answer is `Unknown`, never "no".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RmVerdict {
    Yes,
    Unknown,
}

pub fn rm_schedulable(ts: &TaskSet) -> RmVerdict {
    if ts.is_empty() {
        return RmVerdict::Yes;
    }
    let u = crate::task::total_utilization(ts);
    let bound = ll_bound(ts.len()).expect("non-empty");
    if u <= bound + 1e-12 {
        RmVerdict::Yes
    } else {
        RmVerdict::Unknown
    }
}

/// EDF feasibility for implicit-deadline sets on one processor: total
/// utilization at most 1. The boundary U = 1 is included.
pub fn edf_feasible(ts: &TaskSet) -> bool {
    crate::task::total_utilization(ts) <= 1.0 + 1e-12
}

/// Demand-bound function of one task over a window of `window` ticks:
/// jobs whose whole [release, deadline] span fits inside the window.
fn demand_bound(wcet: Tick, period: Tick, deadline: Tick, window: Tick) -> u128 {
    if window < deadline {
        return 0;
    }
    let n = (window - deadline) / period + 1;
    n as u128 * wcet as u128
}

/// Overload test: total demanded work in [0, window) — periodic demand bound
/// plus the wcet of every critical task whose absolute deadline falls inside
/// the window — exceeds the capacity procs * window.
pub fn is_overloaded(ts: &TaskSet, cts: &[CriticalTask], window: Tick, procs: u32) -> bool {
    assert!(window > 0, "window must be positive");
    let mut demand: u128 = ts
        .tasks
        .iter()
        .map(|t| demand_bound(t.wcet, t.period, t.deadline, window))
        .sum();
    demand += cts
        .iter()
        .filter(|ct| ct.abs_deadline <= window)
        .map(|ct| ct.wcet as u128)
        .sum::<u128>();
    demand > procs as u128 * window as u128
}

/// Per-subject outcome distilled from a trace.
#[derive(Debug, Default, Clone)]
struct Outcome {
    released: bool,
    deadline: Option<Tick>,
    missed: bool,
    completed: bool,
    postponed: bool,
}

fn outcomes(trace: &Trace) -> BTreeMap<Subject, Outcome> {
    let mut map: BTreeMap<Subject, Outcome> = BTreeMap::new();
    for ev in trace.iter() {
        let Some(subject) = ev.subject else { continue };
        let entry = map.entry(subject).or_default();
        match ev.kind {
            EventKind::Release => {
                entry.released = true;
                entry.deadline = ev
                    .detail
                    .strip_prefix("d=")
                    .and_then(|d| d.parse().ok())
                    .or(entry.deadline);
            }
            EventKind::Miss => entry.missed = true,
            EventKind::Complete => entry.completed = true,
            EventKind::Preempt => {
                if ev.detail.starts_with("postponed") {
                    entry.postponed = true;
                }
            }
            _ => {}
        }
    }
    map
}

/// Ratio of released ordinary job instances that missed their deadline.
/// Zero when nothing was released.
pub fn miss_rate(trace: &Trace) -> f64 {
    let map = outcomes(trace);
    let mut released = 0u64;
    let mut missed = 0u64;
    for (subject, o) in &map {
        if matches!(subject, Subject::Job(_)) && o.released {
            released += 1;
            if o.missed {
                missed += 1;
            }
        }
    }
    if released == 0 {
        0.0
    } else {
        missed as f64 / released as f64
    }
}

/// Fraction of arrived instances (critical tasks included) whose deadlines
/// were met. An empty trace is vacuously 1.0.
pub fn guarantee_ratio(trace: &Trace) -> f64 {
    let map = outcomes(trace);
    let mut arrived = 0u64;
    let mut met = 0u64;
    for o in map.values() {
        if o.released {
            arrived += 1;
            if o.completed && !o.missed {
                met += 1;
            }
        }
    }
    if arrived == 0 {
        1.0
    } else {
        met as f64 / arrived as f64
    }
}

/// Which reading of the stability formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityForm {
    /// Verbatim printed formula: waited_TX - miss_n / N.
    Raw,
    /// Success-rate reading: (N - miss_n) / N. The default.
    Normalized,
}

/// Evaluate the stability condition. Stable means value strictly above 0.7.
pub fn stability(metrics: &RunMetrics, form: StabilityForm) -> Result<(f64, bool), ModelError> {
    if metrics.n_total == 0 {
        return Err(ModelError::NoInstances);
    }
    let n = metrics.n_total as f64;
    let value = match form {
        StabilityForm::Raw => metrics.waited_tx as f64 - metrics.miss_n as f64 / n,
        StabilityForm::Normalized => (metrics.n_total - metrics.miss_n) as f64 / n,
    };
    Ok((value, value > 0.7))
}

/// Success rates before and after the first critical arrival.
///
/// X covers arrivals whose absolute deadline falls strictly before the first
/// critical arrival tick; Y covers the rest, the critical tasks included.
/// Either side is `None` when undefined (no critical arrival for Y, empty
/// pre-arrival set for X).
pub fn success_rates(trace: &Trace) -> (Option<f64>, Option<f64>) {
    let map = outcomes(trace);
    let first_ct = trace
        .iter()
        .filter(|e| {
            e.kind == EventKind::Release && matches!(e.subject, Some(Subject::Critical(_)))
        })
        .map(|e| e.tick)
        .min();
    let Some(split) = first_ct else {
        let overall = guarantee_ratio(trace);
        let any = map.values().any(|o| o.released);
        return (if any { Some(overall) } else { None }, None);
    };
    let mut pre = (0u64, 0u64);
    let mut post = (0u64, 0u64);
    for o in map.values() {
        if !o.released {
            continue;
        }
        let side = match o.deadline {
            Some(d) if d < split => &mut pre,
            _ => &mut post,
        };
        side.0 += 1;
        if o.completed && !o.missed {
            side.1 += 1;
        }
    }
    let ratio = |(n, met): (u64, u64)| {
        if n == 0 {
            None
        } else {
            Some(met as f64 / n as f64)
        }
    };
    (ratio(pre), ratio(post))
}

/// Distill the full metric set from a completed trace.
pub fn run_metrics(trace: &Trace) -> RunMetrics {
    let map = outcomes(trace);
    let mut n_total = 0u64;
    let mut miss_n = 0u64;
    let mut waited = 0u64;
    let mut ct_arrived = 0u64;
    let mut ct_met = 0u64;
    let mut per_task: BTreeMap<u32, u64> = BTreeMap::new();
    let mut seen_tasks: BTreeSet<TaskId> = BTreeSet::new();
    for (subject, o) in &map {
        if !o.released {
            continue;
        }
        match subject {
            Subject::Job(k) => {
                n_total += 1;
                seen_tasks.insert(k.task);
                if o.missed {
                    miss_n += 1;
                    *per_task.entry(k.task.0).or_default() += 1;
                }
                if o.postponed {
                    waited += 1;
                }
            }
            Subject::Critical(_) => {
                ct_arrived += 1;
                if o.completed && !o.missed {
                    ct_met += 1;
                }
            }
        }
    }
    for t in seen_tasks {
        per_task.entry(t.0).or_default();
    }
    let (x, y) = success_rates(trace);
    RunMetrics {
        n_total,
        miss_n,
        waited_tx: waited,
        ct_arrived,
        ct_met,
        success_before_x: x,
        success_after_y: y,
        miss_rate: miss_rate(trace),
        guarantee_ratio: guarantee_ratio(trace),
        per_task_miss: per_task,
    }
}
