//! Priority assignment and selection policies: rate-monotonic ranking, EDF
//! picks, constant-utilization server budgets, the hybrid two-server
//! composition, and the priority alter protocol for critical arrivals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::task::{CriticalTask, CtId, Job, JobKey, Region, TaskId, TaskSet, Tick};

/// Sizes of the two constant-utilization servers sharing one processor,
/// plus the scheduling quantum that paces replenishment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    /// EDF-region server share, 0 < alpha < 1.
    pub alpha: f64,
    /// RM-region server share, 0 < beta < 1.
    pub beta: f64,
    /// Replenishment interval in ticks.
    pub quantum: Tick,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            alpha: 0.5,
            beta: 0.5,
            quantum: 10,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errors.push(format!("server alpha {} outside (0,1)", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            errors.push(format!("server beta {} outside (0,1)", self.beta));
        }
        if self.alpha + self.beta > 1.0 + 1e-9 {
            errors.push(format!(
                "server shares alpha+beta = {} exceed one processor",
                self.alpha + self.beta
            ));
        }
        if self.quantum == 0 {
            errors.push("quantum must be positive".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Which server a hybrid pick came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServerKind {
    Rm,
    Edf,
}

/// Anything that can hold a rank in a processor's dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    Job(JobKey),
    Critical(CtId),
}

impl Subject {
    pub fn label(&self) -> String {
        match self {
            Subject::Job(k) => k.to_string(),
            Subject::Critical(c) => c.to_string(),
        }
    }

    pub fn as_job(&self) -> Option<JobKey> {
        match self {
            Subject::Job(k) => Some(*k),
            Subject::Critical(_) => None,
        }
    }
}

impl std::fmt::Display for Subject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// A processor's dispatch ranking: index 0 is the highest precedence.
/// Any critical entry present outranks every ordinary job.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PriorityOrder {
    entries: Vec<Subject>,
}

impl PriorityOrder {
    pub fn new(entries: Vec<Subject>) -> Self {
        PriorityOrder { entries }
    }

    pub fn entries(&self) -> &[Subject] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn rank_of(&self, s: Subject) -> Option<usize> {
        self.entries.iter().position(|e| *e == s)
    }

    /// (subject, effective_priority) view; the rank is the priority.
    pub fn ranked(&self) -> impl Iterator<Item = (Subject, i64)> + '_ {
        self.entries.iter().enumerate().map(|(i, s)| (*s, i as i64))
    }
}

/// Rate-monotonic priority assignment over the FixedRM region: shorter period
/// ranks higher, ties broken by ascending task id. Priorities form a
/// permutation of 0..n-1.
pub fn rm_assign(ts: &TaskSet) -> BTreeMap<TaskId, u32> {
    let mut tasks: Vec<_> = ts
        .tasks
        .iter()
        .filter(|t| t.region == Region::FixedRm)
        .map(|t| (t.period, t.id))
        .collect();
    tasks.sort();
    tasks
        .into_iter()
        .enumerate()
        .map(|(rank, (_, id))| (id, rank as u32))
        .collect()
}

/// Total order used for EDF picks: earliest absolute deadline, then earliest
/// release, then ascending task id, then instance index.
pub fn edf_key(job: &Job) -> (Tick, Tick, TaskId, u32) {
    (job.abs_deadline, job.release, job.key.task, job.key.index)
}

/// Pick the ready job with the nearest absolute deadline. Returns `None`
/// exactly when the ready set is empty.
pub fn edf_pick<'a, I>(ready: I) -> Option<JobKey>
where
    I: IntoIterator<Item = &'a Job>,
{
    ready
        .into_iter()
        .min_by_key(|j| edf_key(j))
        .map(|j| j.key)
}

/// Budget granted to a constant-utilization server of share `u` per quantum:
/// floor(q*u) ticks every q ticks. A server that cannot earn a whole tick per
/// quantum can never run, so that is a configuration error.
pub fn server_budget(cfg: &ServerConfig, share: f64) -> Result<Tick, ModelError> {
    assert!(share > 0.0 && share <= 1.0, "server share out of range");
    // Nudge before flooring so exact products like 10 * 0.3 do not land on
    // 2.999999... and lose a tick.
    let budget = (cfg.quantum as f64 * share + 1e-9).floor() as Tick;
    if budget < 1 {
        return Err(ModelError::QuantumTooCoarse {
            quantum: cfg.quantum,
            share,
        });
    }
    Ok(budget)
}

/// Arbitrate between the two servers of one processor.
///
/// Each server with positive remaining budget proposes its head job (the RM
/// server its highest-priority ready job, the EDF server its `edf_pick`);
/// the earlier absolute deadline wins, with the RM server taking equal
/// deadlines. Returns `None` when no server has both budget and a ready job.
pub fn hybrid_pick<'a>(
    rm_ready: &[&'a Job],
    edf_ready: &[&'a Job],
    rm_budget: Tick,
    edf_budget: Tick,
) -> Option<(JobKey, ServerKind)> {
    let rm_candidate = if rm_budget > 0 {
        rm_ready
            .iter()
            .min_by_key(|j| (j.base_priority, j.key.task, j.key.index))
    } else {
        None
    };
    let edf_candidate = if edf_budget > 0 {
        edf_ready.iter().min_by_key(|j| edf_key(j))
    } else {
        None
    };
    match (rm_candidate, edf_candidate) {
        (None, None) => None,
        (Some(rm), None) => Some((rm.key, ServerKind::Rm)),
        (None, Some(edf)) => Some((edf.key, ServerKind::Edf)),
        (Some(rm), Some(edf)) => {
            if edf.abs_deadline < rm.abs_deadline {
                Some((edf.key, ServerKind::Edf))
            } else {
                // Ties go to the RM server: the fixed region is the static
                // baseline the hybrid is built around.
                Some((rm.key, ServerKind::Rm))
            }
        }
    }
}

/// Apply the priority alter protocol for an arriving critical task.
///
/// The critical task takes rank 0; the currently running job (the order's
/// top-ranked entry, when the processor is busy) is demoted directly beneath
/// it and reported back as postponed. Relative order of all other entries is
/// untouched.
pub fn priority_alter(
    order: &PriorityOrder,
    ct: &CriticalTask,
    running: Option<JobKey>,
) -> (PriorityOrder, Vec<JobKey>) {
    let ct_entry = Subject::Critical(ct.id);
    debug_assert!(
        order.rank_of(ct_entry).is_none(),
        "critical task already ranked"
    );
    let mut entries = Vec::with_capacity(order.len() + 1);
    entries.push(ct_entry);
    let mut postponed = Vec::new();
    if let Some(run) = running {
        entries.push(Subject::Job(run));
        postponed.push(run);
    }
    for e in order.entries() {
        if Some(*e) != running.map(Subject::Job) {
            entries.push(*e);
        }
    }
    (PriorityOrder::new(entries), postponed)
}

/// Demote a job that ran past its deadline below every job that is not late.
/// Late jobs accumulate at the bottom in the order they were demoted, so the
/// earliest-demoted late job is served first among the late.
pub fn overrun_demote(order: &PriorityOrder, late: JobKey) -> PriorityOrder {
    let subject = Subject::Job(late);
    let mut entries: Vec<Subject> = order
        .entries()
        .iter()
        .copied()
        .filter(|e| *e != subject)
        .collect();
    if entries.len() != order.len() {
        entries.push(subject);
    }
    PriorityOrder::new(entries)
}
