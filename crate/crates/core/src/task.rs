//! Task model: periodic tasks, released jobs, one-shot critical tasks, and
//! task-set arithmetic (utilization, hyperperiod, job release schedules).
//!
//! Time is integer ticks throughout. All execution demands, periods and
//! deadlines are integers, which keeps traces bit-reproducible.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Discrete simulation time. One tick = one unit of work on any processor.
pub type Tick = u64;

/// Identifier of a periodic task, unique within a scenario.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Identifier of a critical (catastrophic) task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CtId(pub u32);

impl fmt::Display for CtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CT{}", self.0)
    }
}

/// Which half of the hybrid scheme a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Fixed-priority region, dispatched rate-monotonically.
    FixedRm,
    /// Dynamic-priority region, dispatched earliest-deadline-first.
    DynamicEdf,
}

/// A periodic hard real-time task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    /// Worst-case execution time, in ticks.
    pub wcet: Tick,
    /// Inter-arrival time, in ticks.
    pub period: Tick,
    /// Relative deadline, in ticks.
    pub deadline: Tick,
    pub region: Region,
    /// Rate-monotonic rank. Assigned by `policy::rm_assign`; lower is higher
    /// priority. `None` until assignment, and for pure-EDF tasks.
    pub base_priority: Option<u32>,
}

impl Task {
    pub fn new(id: u32, wcet: Tick, period: Tick, deadline: Tick, region: Region) -> Self {
        Task {
            id: TaskId(id),
            wcet,
            period,
            deadline,
            region,
            base_priority: None,
        }
    }

    /// Implicit-deadline constructor (D = T), the common case.
    pub fn implicit(id: u32, wcet: Tick, period: Tick, region: Region) -> Self {
        Self::new(id, wcet, period, period, region)
    }

    pub fn utilization(&self) -> f64 {
        self.wcet as f64 / self.period as f64
    }
}

/// Key identifying one released instance of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobKey {
    pub task: TaskId,
    /// 1-based instance index; instance j is released at (j-1)*T.
    pub index: u32,
}

impl fmt::Display for JobKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J{}.{}", self.task.0, self.index)
    }
}

/// Lifecycle of a job inside the engine.
///
/// Ready -> Running -> {Ready | Postponed | Completed}; Missed and Discarded
/// are terminal. Postponed jobs return to Ready when the super scheduler
/// drains its stack (or via backup activation after a fault).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Ready,
    Running,
    Postponed,
    Completed,
    Missed,
    Discarded,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Missed | JobState::Discarded)
    }

    /// Live jobs still compete for processor time.
    pub fn is_live(self) -> bool {
        !self.is_terminal()
    }
}

/// One released instance of a periodic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub key: JobKey,
    pub release: Tick,
    pub abs_deadline: Tick,
    /// Work still owed; 0 if and only if the job completed.
    pub remaining: Tick,
    /// Full demand, kept so backup copies can restart from scratch.
    pub wcet: Tick,
    pub region: Region,
    /// Copied from the task after RM assignment; u32::MAX for EDF-region jobs.
    pub base_priority: u32,
    /// Rank in the owning processor's current priority order (0 = highest).
    pub effective_priority: i64,
    pub state: JobState,
}

impl Job {
    pub fn from_task(task: &Task, index: u32) -> Self {
        let release = (index as Tick - 1) * task.period;
        Job {
            key: JobKey {
                task: task.id,
                index,
            },
            release,
            abs_deadline: release + task.deadline,
            remaining: task.wcet,
            wcet: task.wcet,
            region: task.region,
            base_priority: task.base_priority.unwrap_or(u32::MAX),
            effective_priority: 0,
            state: JobState::Ready,
        }
    }
}

/// A single-shot catastrophic task injected by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalTask {
    pub id: CtId,
    pub wcet: Tick,
    /// Absolute release instant.
    pub arrival: Tick,
    /// Absolute deadline. Scenarios may omit it; the loader defaults to
    /// arrival + 2*wcet.
    pub abs_deadline: Tick,
}

impl CriticalTask {
    pub fn new(id: u32, wcet: Tick, arrival: Tick, abs_deadline: Tick) -> Self {
        CriticalTask {
            id: CtId(id),
            wcet,
            arrival,
            abs_deadline,
        }
    }

    /// Ticks between arrival and deadline.
    pub fn window(&self) -> Tick {
        self.abs_deadline.saturating_sub(self.arrival)
    }
}

/// An ordered set of periodic tasks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    /// Enforce implicit deadlines (D = T) on every task.
    pub strict_mode: bool,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>) -> Self {
        TaskSet {
            tasks,
            strict_mode: false,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Structural invariants. Returns every violation, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.id) {
                errors.push(format!("task {}: duplicate id", t.id));
            }
            if t.wcet == 0 {
                errors.push(format!("task {}: wcet must be positive", t.id));
            }
            if t.period == 0 {
                errors.push(format!("task {}: period must be positive", t.id));
            }
            if t.deadline == 0 {
                errors.push(format!("task {}: deadline must be positive", t.id));
            }
            if t.wcet > t.deadline {
                errors.push(format!(
                    "task {}: wcet {} exceeds relative deadline {}",
                    t.id, t.wcet, t.deadline
                ));
            }
            if self.strict_mode && t.deadline != t.period {
                errors.push(format!(
                    "task {}: strict mode requires deadline == period ({} != {})",
                    t.id, t.deadline, t.period
                ));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Total utilization sum(C_i / T_i). Empty set yields 0.
pub fn total_utilization(ts: &TaskSet) -> f64 {
    ts.tasks.iter().map(Task::utilization).sum()
}

/// Least common multiple of all periods, the major cycle of the set.
///
/// Overflow of the tick type is an explicit error, never a silent wrap.
pub fn hyperperiod(ts: &TaskSet) -> Result<Tick, ModelError> {
    if ts.is_empty() {
        return Err(ModelError::EmptyTaskSet);
    }
    let mut acc: Tick = 1;
    for t in &ts.tasks {
        acc = lcm_checked(acc, t.period).ok_or(ModelError::Overflow("hyperperiod"))?;
    }
    Ok(acc)
}

fn gcd(mut a: Tick, mut b: Tick) -> Tick {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn lcm_checked(a: Tick, b: Tick) -> Option<Tick> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// All jobs of `task` released in [t0, t1), in release order, state Ready.
pub fn jobs_in_window(task: &Task, t0: Tick, t1: Tick) -> Vec<Job> {
    assert!(t0 <= t1, "window must be ordered");
    let mut out = Vec::new();
    if t1 == 0 {
        return out;
    }
    // First index j with release (j-1)*T >= t0.
    let mut j = t0.div_ceil(task.period) + 1;
    loop {
        let release = (j - 1) * task.period;
        if release >= t1 {
            break;
        }
        debug_assert!(release >= t0);
        out.push(Job::from_task(task, j as u32));
        j += 1;
    }
    out
}
