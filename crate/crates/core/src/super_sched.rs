//! Super scheduler state: the precomputed schedule table for the fixed-priority
//! region, the suspended/active mode, the critical-task queue, and the LIFO
//! stack of postponed jobs.
//!
//! The dispatch-time behavior (seizing a processor on critical arrival,
//! draining the stack on completion) lives in the engine, which owns the
//! single logical thread of a run; this module holds the state it drives.

use std::collections::VecDeque;

use crate::error::ModelError;
use crate::metrics::ll_bound;
use crate::policy::rm_assign;
use crate::task::{hyperperiod, total_utilization, CriticalTask, JobKey, TaskId, TaskSet, Tick};

/// Precomputed dispatch sequence of the RM region over one major cycle.
/// Frame k holds the task dispatched at tick k of the cycle, or `None` for an
/// idle frame. Immutable during a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTable {
    entries: Vec<Option<TaskId>>,
    cursor: usize,
}

impl ScheduleTable {
    pub fn entries(&self) -> &[Option<TaskId>] {
        &self.entries
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Entry for an absolute tick; the table repeats every major cycle.
    pub fn at(&self, tick: Tick) -> Option<TaskId> {
        if self.entries.is_empty() {
            return None;
        }
        self.entries[(tick % self.entries.len() as Tick) as usize]
    }

    /// Advance the cursor one frame, wrapping modulo the entry count.
    pub fn advance(&mut self) -> Option<TaskId> {
        if self.entries.is_empty() {
            return None;
        }
        let current = self.entries[self.cursor];
        self.cursor = (self.cursor + 1) % self.entries.len();
        current
    }
}

/// Simulate the RM region offline for one hyperperiod and record the dispatch
/// sequence. The region must pass the Liu-Layland admission test first; an
/// empty region yields a valid empty table.
pub fn build_schedule_table(ts: &TaskSet) -> Result<ScheduleTable, ModelError> {
    let rm_tasks: Vec<_> = ts
        .tasks
        .iter()
        .filter(|t| t.region == crate::task::Region::FixedRm)
        .cloned()
        .collect();
    if rm_tasks.is_empty() {
        return Ok(ScheduleTable {
            entries: Vec::new(),
            cursor: 0,
        });
    }
    let rm_set = TaskSet::new(rm_tasks);
    let u = total_utilization(&rm_set);
    let bound = ll_bound(rm_set.len())?;
    if u > bound + 1e-12 {
        return Err(ModelError::RmBoundExceeded {
            utilization: u,
            bound,
            n: rm_set.len(),
        });
    }
    let horizon = hyperperiod(&rm_set)?;
    let priorities = rm_assign(&rm_set);

    // Plain fixed-priority simulation on a dedicated processor.
    let mut entries = Vec::with_capacity(horizon as usize);
    let mut remaining: Vec<(TaskId, Tick)> = Vec::new();
    for now in 0..horizon {
        for t in &rm_set.tasks {
            if now % t.period == 0 {
                remaining.push((t.id, t.wcet));
            }
        }
        remaining.sort_by_key(|(id, _)| priorities[id]);
        match remaining.first_mut() {
            Some((id, rem)) => {
                entries.push(Some(*id));
                *rem -= 1;
                if *rem == 0 {
                    remaining.remove(0);
                }
            }
            None => entries.push(None),
        }
    }
    Ok(ScheduleTable { entries, cursor: 0 })
}

/// Whether the super scheduler currently holds a processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperMode {
    /// Critical queue empty: the hybrid schedule runs untouched.
    Suspended,
    Active,
}

/// A critical task being executed under the alter protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCritical {
    pub ct: CriticalTask,
    pub remaining: Tick,
    pub proc: u32,
}

/// Runtime state of the super scheduler.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuperState {
    pub active: Option<ActiveCritical>,
    /// Critical tasks that arrived while another was active, FIFO by
    /// (arrival, id).
    pub queue: VecDeque<CriticalTask>,
    /// Jobs postponed by the alter protocol, drained LIFO on completion.
    pub postponed_stack: Vec<JobKey>,
    /// Tables for the RM region of each processor that passed admission.
    pub tables: Vec<Option<ScheduleTable>>,
}

impl SuperState {
    pub fn mode(&self) -> SuperMode {
        if self.active.is_some() || !self.queue.is_empty() {
            SuperMode::Active
        } else {
            SuperMode::Suspended
        }
    }

    /// Push a postponed job (stack discipline: last postponed resumes first).
    pub fn push_postponed(&mut self, job: JobKey) {
        self.postponed_stack.push(job);
    }

    /// Pop the whole stack in LIFO order for the resume drain.
    pub fn drain_lifo(&mut self) -> Vec<JobKey> {
        let mut out = Vec::with_capacity(self.postponed_stack.len());
        while let Some(j) = self.postponed_stack.pop() {
            out.push(j);
        }
        out
    }

    pub fn forget_postponed(&mut self, job: JobKey) {
        self.postponed_stack.retain(|j| *j != job);
    }
}
