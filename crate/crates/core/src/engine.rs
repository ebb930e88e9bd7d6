//! Deterministic discrete-time multiprocessor execution engine: job release,
//! dispatch, preemption, completion, deadline policing, processor faults with
//! primary/backup recovery, and the super scheduler's critical-task handling.
//!
//! One simulation is one logical thread. A step advances exactly one tick:
//! completions from the previous tick are recorded first, then releases,
//! faults, critical arrivals, deadline policing, server replenishment, the
//! scheduling pass, and finally one tick of execution. Events buffered during
//! a step are flushed in the fixed intra-tick kind order, which makes traces
//! byte-reproducible.
//!
//! Per-tick work is proportional to the number of live jobs, not the number
//! of jobs over the whole horizon: releases are generated lazily and each
//! processor tracks its live (ready or running) set.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{EngineError, ScenarioError};
use crate::policy::{
    edf_key, priority_alter, rm_assign, server_budget, PriorityOrder, ServerConfig, Subject,
};
use crate::scenario::{MissPolicy, Scenario, SchedMode};
use crate::super_sched::{
    build_schedule_table, ActiveCritical, ScheduleTable, SuperMode, SuperState,
};
use crate::task::{
    CriticalTask, Job, JobKey, JobState, Region, Task, TaskId, TaskSet, Tick,
};
use crate::trace::{EventKind, Trace, TraceEvent};

/// Execution resource role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcRole {
    Primary,
    Backup,
}

/// Runtime state of one processor.
#[derive(Debug, Clone)]
pub struct Processor {
    pub id: u32,
    pub role: ProcRole,
    pub server: ServerConfig,
    pub failed_at: Option<Tick>,
    pub current: Option<Subject>,
    rm_budget: Tick,
    edf_budget: Tick,
    rm_grant: Tick,
    edf_grant: Tick,
    /// Remaining context-switch penalty before the current pick executes.
    cooldown: Tick,
    /// Demoted late jobs, in demotion order (bottom of the priority order).
    late_fifo: Vec<JobKey>,
    /// Reassigned guest jobs, FIFO, ranked below natives.
    guest_fifo: Vec<JobKey>,
}

impl Processor {
    pub fn failed(&self) -> bool {
        self.failed_at.is_some()
    }
}

/// A backup reservation window; consumed by the first covered job whose
/// primary fails.
#[derive(Debug, Clone)]
struct BackupSlot {
    proc: u32,
    start: Tick,
    end: Tick,
    covers: Vec<JobKey>,
    consumed_by: Option<JobKey>,
}

#[derive(Debug, Clone)]
struct JobRt {
    job: Job,
    home: u32,
    proc: u32,
    miss_logged: bool,
}

/// Full engine state for one run.
pub struct Engine {
    mode: SchedMode,
    miss_policy: MissPolicy,
    ctx_cost: Tick,
    horizon: Tick,
    super_enabled: bool,
    now: Tick,
    procs: Vec<Processor>,
    /// Tasks with their home processors, ascending id; releases are generated
    /// from these on the fly.
    task_homes: Vec<(Task, u32)>,
    jobs: BTreeMap<JobKey, JobRt>,
    /// Ready or running jobs per processor.
    live: Vec<BTreeSet<JobKey>>,
    /// Released jobs not yet in a terminal state.
    open_jobs: usize,
    arrivals: BTreeMap<Tick, Vec<CriticalTask>>,
    faults: BTreeMap<Tick, Vec<u32>>,
    slots: Vec<BackupSlot>,
    sup: SuperState,
    events: Vec<TraceEvent>,
    buf: Vec<TraceEvent>,
}

impl Engine {
    /// Build an engine from a validated scenario: place tasks on processors,
    /// assign RM priorities, and size the server budgets.
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let horizon = scenario
            .effective_horizon()
            .map_err(|e| ScenarioError::Validation(vec![e]))?;

        let mut task_set = scenario.task_set.clone();
        let homes = assign_homes(scenario);

        // RM ranks, per processor, over the tasks the fixed-priority policy
        // orders there: the RM region in hybrid mode, everything in rm mode.
        for proc in 0..scenario.proc_count {
            let subset = rm_subset(&task_set, &homes, proc, scenario.mode);
            let ranks = rm_assign(&TaskSet::new(subset));
            for t in task_set.tasks.iter_mut() {
                if let Some(rank) = ranks.get(&t.id) {
                    t.base_priority = Some(*rank);
                }
            }
        }

        let mut procs = Vec::new();
        for id in 0..scenario.total_procs() {
            let role = if id < scenario.proc_count {
                ProcRole::Primary
            } else {
                ProcRole::Backup
            };
            let server = scenario.server_for(id);
            let (rm_grant, edf_grant) =
                if scenario.mode == SchedMode::Hybrid && role == ProcRole::Primary {
                    let rm = server_budget(&server, server.beta)
                        .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
                    let edf = server_budget(&server, server.alpha)
                        .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
                    (rm, edf)
                } else {
                    (0, 0)
                };
            procs.push(Processor {
                id,
                role,
                server,
                failed_at: None,
                current: None,
                rm_budget: 0,
                edf_budget: 0,
                rm_grant,
                edf_grant,
                cooldown: 0,
                late_fifo: Vec::new(),
                guest_fifo: Vec::new(),
            });
        }

        let mut task_homes: Vec<(Task, u32)> = task_set
            .tasks
            .iter()
            .map(|t| (t.clone(), homes[&t.id]))
            .collect();
        task_homes.sort_by_key(|(t, _)| t.id);

        let mut arrivals: BTreeMap<Tick, Vec<CriticalTask>> = BTreeMap::new();
        let mut sorted_cts = scenario.critical.clone();
        sorted_cts.sort_by_key(|ct| (ct.arrival, ct.id));
        for ct in sorted_cts {
            if ct.arrival < horizon {
                arrivals.entry(ct.arrival).or_default().push(ct);
            }
        }

        let mut faults: BTreeMap<Tick, Vec<u32>> = BTreeMap::new();
        for f in &scenario.faults {
            faults.entry(f.at).or_default().push(f.proc);
        }
        for ps in faults.values_mut() {
            ps.sort();
        }

        let slots = scenario
            .slots
            .iter()
            .map(|s| BackupSlot {
                proc: s.proc,
                start: s.start,
                end: s.end,
                covers: s.covers.clone(),
                consumed_by: None,
            })
            .collect();

        // Precompute the RM region's schedule tables where admission passes;
        // informational during a run, checked by the replay tests.
        let mut tables: Vec<Option<ScheduleTable>> = Vec::new();
        for proc in 0..scenario.proc_count {
            let subset = rm_subset(&task_set, &homes, proc, scenario.mode);
            if subset.is_empty() {
                tables.push(None);
            } else {
                tables.push(build_schedule_table(&TaskSet::new(subset)).ok());
            }
        }

        let live = vec![BTreeSet::new(); scenario.total_procs() as usize];
        Ok(Engine {
            mode: scenario.mode,
            miss_policy: scenario.miss_policy,
            ctx_cost: scenario.ctx_cost,
            horizon,
            super_enabled: true,
            now: 0,
            procs,
            task_homes,
            jobs: BTreeMap::new(),
            live,
            open_jobs: 0,
            arrivals,
            faults,
            slots,
            sup: SuperState {
                tables,
                ..SuperState::default()
            },
            events: Vec::new(),
            buf: Vec::new(),
        })
    }

    /// Disable the super scheduler: critical tasks are not injected at all.
    /// Used to demonstrate zero-overhead suspension.
    pub fn super_enabled(mut self, enabled: bool) -> Self {
        self.super_enabled = enabled;
        self
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn horizon(&self) -> Tick {
        self.horizon
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn super_state(&self) -> &SuperState {
        &self.sup
    }

    pub fn processor(&self, id: u32) -> Option<&Processor> {
        self.procs.get(id as usize)
    }

    /// Register a crash-stop fault. The fault takes effect when the engine
    /// reaches `at`. A second fault on the same processor is rejected.
    pub fn inject_fault(&mut self, proc: u32, at: Tick) -> Result<(), EngineError> {
        if proc as usize >= self.procs.len() {
            return Err(EngineError::NoSuchProcessor(proc));
        }
        if self.procs[proc as usize].failed() || self.faults.values().any(|ps| ps.contains(&proc)) {
            return Err(EngineError::DoubleFault(proc));
        }
        let slot = self.faults.entry(at).or_default();
        slot.push(proc);
        slot.sort();
        Ok(())
    }

    fn emit(
        &mut self,
        kind: EventKind,
        proc: Option<u32>,
        subject: Option<Subject>,
        detail: impl Into<String>,
    ) {
        self.buf.push(TraceEvent {
            tick: self.now,
            proc,
            kind,
            subject,
            detail: detail.into(),
        });
    }

    /// The horizon has been reached and everything released has terminated.
    pub fn finished(&self) -> bool {
        self.now >= self.horizon
            && self.open_jobs == 0
            && self.arrivals.is_empty()
            && self.sup.active.is_none()
            && self.sup.queue.is_empty()
    }

    /// Hard upper bound on stepping: horizon, plus the latest deadline, plus
    /// total outstanding work. Guarantees termination under the demote policy.
    fn step_cap(&self) -> Tick {
        let mut max_deadline: Tick = 0;
        let mut work: u128 = 0;
        if self.horizon > 0 {
            for (t, _) in &self.task_homes {
                let last_release = ((self.horizon - 1) / t.period) * t.period;
                max_deadline = max_deadline.max(last_release.saturating_add(t.deadline));
                let n_jobs = (self.horizon - 1) / t.period + 1;
                work += n_jobs as u128 * t.wcet as u128;
            }
        }
        for ct in self.arrivals.values().flatten() {
            max_deadline = max_deadline.max(ct.abs_deadline);
            work += ct.wcet as u128;
        }
        let work = Tick::try_from(work).unwrap_or(Tick::MAX);
        self.horizon
            .max(max_deadline)
            .saturating_add(work)
            .saturating_add(1)
    }

    /// Step until finished: releases stop at the horizon, then the run drains
    /// until every released job and critical task reaches a terminal state.
    pub fn run_all(&mut self) {
        let cap = self.step_cap();
        while !self.finished() && self.now < cap {
            self.step();
        }
    }

    /// Run to completion and return the trace.
    pub fn run_to_end(mut self) -> Trace {
        self.run_all();
        Trace::new(self.events)
    }

    /// Advance exactly one tick.
    pub fn step(&mut self) {
        debug_assert!(self.buf.is_empty());
        self.phase_completions();
        self.phase_releases();
        self.phase_faults();
        self.phase_critical_arrivals();
        self.phase_policing();
        self.phase_replenish();
        self.phase_schedule();
        self.phase_execute();
        self.buf.sort_by_key(|e| e.kind.intra_tick_rank());
        self.events.append(&mut self.buf);
        self.now += 1;
        #[cfg(debug_assertions)]
        self.check_invariants();
    }

    // ---- step phases -----------------------------------------------------

    /// Work that finished during the previous tick completes at this tick
    /// boundary. Jobs first, then the critical task: a queued critical task
    /// activating here must see retired jobs as already gone.
    fn phase_completions(&mut self) {
        for p in 0..self.procs.len() {
            if let Some(Subject::Job(k)) = self.procs[p].current {
                if self.jobs[&k].job.remaining == 0 {
                    self.set_state(k, JobState::Completed);
                    self.procs[p].current = None;
                    self.forget_job(k);
                    self.emit(EventKind::Complete, Some(p as u32), Some(Subject::Job(k)), "");
                }
            }
        }
        if let Some(active) = self.sup.active.clone() {
            if active.remaining == 0 {
                let p = active.proc;
                debug_assert_eq!(
                    self.procs[p as usize].current,
                    Some(Subject::Critical(active.ct.id))
                );
                self.procs[p as usize].current = None;
                self.emit(
                    EventKind::Complete,
                    Some(p),
                    Some(Subject::Critical(active.ct.id)),
                    "",
                );
                self.sup.active = None;
                self.critical_done();
            }
        }
    }

    /// Release every job due now: instance j of a task is released at
    /// (j-1)*T, for releases inside [0, horizon).
    fn phase_releases(&mut self) {
        if self.now >= self.horizon {
            return;
        }
        for i in 0..self.task_homes.len() {
            let (task, home) = self.task_homes[i].clone();
            if self.now % task.period != 0 {
                continue;
            }
            let index = (self.now / task.period + 1) as u32;
            let job = Job::from_task(&task, index);
            let k = job.key;
            debug_assert_eq!(job.release, self.now);
            let deadline = job.abs_deadline;
            self.jobs.insert(
                k,
                JobRt {
                    job,
                    home,
                    proc: home,
                    miss_logged: false,
                },
            );
            self.open_jobs += 1;
            self.live[home as usize].insert(k);
            self.emit(
                EventKind::Release,
                Some(home),
                Some(Subject::Job(k)),
                format!("d={deadline}"),
            );
            if self.procs[home as usize].failed() {
                // Home processor already down: the release goes straight
                // through the backup path.
                self.route_to_backup(k);
            }
        }
    }

    fn phase_faults(&mut self) {
        let Some(ps) = self.faults.remove(&self.now) else { return };
        for proc in ps {
            self.apply_fault(proc);
        }
    }

    fn apply_fault(&mut self, proc: u32) {
        let p = proc as usize;
        debug_assert!(!self.procs[p].failed(), "validated: no double faults");
        self.procs[p].failed_at = Some(self.now);
        self.procs[p].current = None;
        self.procs[p].rm_budget = 0;
        self.procs[p].edf_budget = 0;
        self.emit(EventKind::Fault, Some(proc), None, "");

        // An active critical task loses its processor: migrate it with its
        // progress preserved, or record the loss.
        if let Some(active) = self.sup.active.clone() {
            if active.proc == proc {
                match self.pick_ct_target() {
                    Some(target) => {
                        let running =
                            self.procs[target as usize].current.and_then(|s| s.as_job());
                        if let Some(a) = self.sup.active.as_mut() {
                            a.proc = target;
                        }
                        self.seize_processor(&active.ct, target, running, "migrated");
                    }
                    None => {
                        let subject = Subject::Critical(active.ct.id);
                        self.emit(EventKind::Miss, None, Some(subject), "no processor");
                        self.emit(EventKind::Discard, None, Some(subject), "no processor");
                        self.sup.active = None;
                        self.critical_done();
                    }
                }
            }
        }

        // Live and postponed local jobs are handed to backup activation.
        let mut displaced: Vec<JobKey> = self.live[p].iter().copied().collect();
        displaced.extend(
            self.sup
                .postponed_stack
                .iter()
                .filter(|k| self.jobs[k].proc == proc)
                .copied(),
        );
        displaced.sort();
        for k in displaced {
            if self.jobs[&k].job.state == JobState::Postponed {
                self.sup.forget_postponed(k);
            }
            self.route_to_backup(k);
        }
        self.procs[p].late_fifo.clear();
        self.procs[p].guest_fifo.clear();
    }

    /// Move a job that lost its processor onto a covering backup slot as a
    /// fresh copy, or discard it.
    fn route_to_backup(&mut self, k: JobKey) {
        let now = self.now;
        let mut covered_by_consumed = false;
        let mut chosen: Option<usize> = None;
        for (i, slot) in self.slots.iter().enumerate() {
            if !slot.covers.contains(&k) {
                continue;
            }
            if slot.consumed_by.is_some() {
                covered_by_consumed = true;
                continue;
            }
            if slot.end <= now || self.procs[slot.proc as usize].failed() {
                continue;
            }
            chosen = Some(i);
            break;
        }
        match chosen {
            Some(i) => {
                self.slots[i].consumed_by = Some(k);
                let backup = self.slots[i].proc;
                let window = format!("slot [{}, {})", self.slots[i].start, self.slots[i].end);
                let losers: Vec<String> = self.slots[i]
                    .covers
                    .iter()
                    .filter(|c| **c != k)
                    .map(|c| c.to_string())
                    .collect();
                let detail = if losers.is_empty() {
                    format!("fresh copy on {window}")
                } else {
                    format!("fresh copy on {window}; coverage lost: {}", losers.join(" "))
                };
                let old_state = {
                    let rt = self.jobs.get_mut(&k).unwrap();
                    rt.job.remaining = rt.job.wcet;
                    rt.job.state
                };
                self.move_to_proc(k, backup);
                if old_state != JobState::Ready {
                    self.set_state(k, JobState::Ready);
                }
                self.emit(EventKind::BackupActivate, Some(backup), Some(Subject::Job(k)), detail);
            }
            None => {
                let detail = if covered_by_consumed {
                    "overloaded slot taken"
                } else {
                    "no backup"
                };
                self.discard_job(k, detail);
            }
        }
    }

    fn phase_critical_arrivals(&mut self) {
        let Some(cts) = self.arrivals.remove(&self.now) else { return };
        if !self.super_enabled {
            // Super scheduler absent: critical tasks are not injected.
            return;
        }
        for ct in cts {
            let subject = Subject::Critical(ct.id);
            self.emit(
                EventKind::Release,
                None,
                Some(subject),
                format!("d={}", ct.abs_deadline),
            );
            if ct.wcet > ct.window() {
                // Overloaded even with total preemption: infeasible on every
                // processor; log and keep the engine running.
                self.emit(EventKind::Miss, None, Some(subject), "catastrophic infeasible");
                self.emit(EventKind::Discard, None, Some(subject), "catastrophic infeasible");
                continue;
            }
            if self.sup.mode() == SuperMode::Active {
                self.sup.queue.push_back(ct);
            } else {
                self.activate_ct(ct);
            }
        }
    }

    /// The processor a critical task seizes: an idle one if any exists
    /// (nothing gets displaced), otherwise the one whose running job has the
    /// latest absolute deadline — maximum preemption slack. Ties go to the
    /// lowest processor id.
    fn pick_ct_target(&self) -> Option<u32> {
        let alive: Vec<&Processor> = self.procs.iter().filter(|p| !p.failed()).collect();
        if let Some(idle) = alive.iter().find(|p| p.current.is_none()) {
            return Some(idle.id);
        }
        alive
            .iter()
            .max_by_key(|p| {
                let slack = match p.current {
                    Some(Subject::Job(k)) => self.jobs[&k].job.abs_deadline,
                    _ => 0,
                };
                (slack, std::cmp::Reverse(p.id))
            })
            .map(|p| p.id)
    }

    /// Apply the priority alter protocol on `target`: the critical task takes
    /// the apex, the running job is postponed onto the stack and offered for
    /// reassignment.
    fn seize_processor(
        &mut self,
        ct: &CriticalTask,
        target: u32,
        running: Option<JobKey>,
        why: &str,
    ) {
        // The pre-alter order: the caller has already installed the critical
        // task as active, so strip it before applying the protocol.
        let pre_alter = PriorityOrder::new(
            self.build_order(target)
                .entries()
                .iter()
                .copied()
                .filter(|e| *e != Subject::Critical(ct.id))
                .collect(),
        );
        let (altered, postponed) = priority_alter(&pre_alter, ct, running);
        debug_assert_eq!(altered.rank_of(Subject::Critical(ct.id)), Some(0));
        let detail = if postponed.is_empty() {
            why.to_string()
        } else {
            let names: Vec<String> = postponed.iter().map(|k| k.to_string()).collect();
            format!("{why}; postpones {}", names.join(" "))
        };
        self.emit(EventKind::Alter, Some(target), Some(Subject::Critical(ct.id)), detail);
        for k in &postponed {
            self.set_state(*k, JobState::Postponed);
            self.sup.push_postponed(*k);
            self.procs[target as usize].current = None;
            self.emit(
                EventKind::Preempt,
                Some(target),
                Some(Subject::Job(*k)),
                format!("postponed by {}", ct.id),
            );
        }
        self.reassign_tasks(&postponed);
    }

    fn activate_ct(&mut self, ct: CriticalTask) {
        match self.pick_ct_target() {
            Some(target) => {
                let running = self.procs[target as usize].current.and_then(|s| s.as_job());
                // Active state is installed before the seizure so the
                // reassignment admission check counts the critical work on
                // its target processor.
                self.sup.active = Some(ActiveCritical {
                    ct,
                    remaining: ct.wcet,
                    proc: target,
                });
                self.seize_processor(&ct, target, running, "seize");
            }
            None => {
                let subject = Subject::Critical(ct.id);
                self.emit(EventKind::Miss, None, Some(subject), "no processor");
                self.emit(EventKind::Discard, None, Some(subject), "no processor");
                self.critical_done();
            }
        }
    }

    /// The active critical task finished (or was lost): start the next queued
    /// one, or suspend and drain the postponed stack in LIFO order.
    fn critical_done(&mut self) {
        self.sup.active = None;
        if let Some(next) = self.sup.queue.pop_front() {
            self.activate_ct(next);
            return;
        }
        // Back to Suspended; postponed jobs resume on their home processors,
        // last postponed first. Deadlines that passed during postponement are
        // settled per the miss policy.
        for k in self.sup.drain_lifo() {
            if self.jobs[&k].job.state != JobState::Postponed {
                continue;
            }
            let (deadline, remaining, home) = {
                let rt = &self.jobs[&k];
                (rt.job.abs_deadline, rt.job.remaining, rt.home)
            };
            if deadline <= self.now && remaining > 0 {
                match self.miss_policy {
                    MissPolicy::Discard => self.discard_job(k, "missed while postponed"),
                    MissPolicy::Demote => {
                        self.miss_job(k, "missed while postponed");
                        self.set_state(k, JobState::Ready);
                        if !self.procs[home as usize].late_fifo.contains(&k) {
                            self.procs[home as usize].late_fifo.push(k);
                        }
                    }
                }
            } else {
                self.set_state(k, JobState::Ready);
            }
        }
    }

    /// Offer displaced jobs to every non-failed processor in ascending id
    /// order; the first whose admission check passes takes the job as a
    /// guest. The check simulates inserting the job at the lowest priority:
    /// all live work currently on the processor (the active critical task
    /// included) runs first and the job must still meet its deadline.
    fn reassign_tasks(&mut self, displaced: &[JobKey]) {
        for &k in displaced {
            let (remaining, deadline, home) = {
                let rt = &self.jobs[&k];
                (rt.job.remaining, rt.job.abs_deadline, rt.home)
            };
            let window = deadline.saturating_sub(self.now);
            let target = (0..self.procs.len() as u32).find(|&p| {
                if self.procs[p as usize].failed() {
                    return false;
                }
                let mut committed: Tick = self.live[p as usize]
                    .iter()
                    .map(|j| self.jobs[j].job.remaining)
                    .sum();
                if let Some(active) = &self.sup.active {
                    if active.proc == p {
                        committed += active.remaining;
                    }
                }
                committed.saturating_add(remaining) <= window
            });
            if let Some(p) = target {
                self.sup.forget_postponed(k);
                self.move_to_proc(k, p);
                self.set_state(k, JobState::Ready);
                if p != home {
                    self.procs[p as usize].guest_fifo.push(k);
                }
                self.emit(
                    EventKind::Reassign,
                    Some(p),
                    Some(Subject::Job(k)),
                    format!("from p{home}"),
                );
            }
            // Otherwise the job stays postponed on its home processor and
            // resumes when the critical task completes.
        }
    }

    /// Police deadlines: a live job past its deadline gets exactly one Miss,
    /// then is discarded or demoted per the scenario policy. Postponed jobs
    /// are settled when the stack drains.
    fn phase_policing(&mut self) {
        let mut due: Vec<JobKey> = Vec::new();
        for set in &self.live {
            for k in set {
                let rt = &self.jobs[k];
                if rt.job.abs_deadline <= self.now
                    && rt.job.remaining > 0
                    && !(self.miss_policy == MissPolicy::Demote && rt.miss_logged)
                {
                    due.push(*k);
                }
            }
        }
        due.sort();
        for k in due {
            match self.miss_policy {
                MissPolicy::Discard => self.discard_job(k, ""),
                MissPolicy::Demote => {
                    self.miss_job(k, "");
                    let proc = self.jobs[&k].proc;
                    if !self.procs[proc as usize].late_fifo.contains(&k) {
                        self.procs[proc as usize].late_fifo.push(k);
                    }
                }
            }
        }
        // Queued critical tasks can expire while waiting.
        let expired: Vec<CriticalTask> = self
            .sup
            .queue
            .iter()
            .filter(|ct| ct.abs_deadline <= self.now)
            .copied()
            .collect();
        for ct in expired {
            self.sup.queue.retain(|c| c.id != ct.id);
            let subject = Subject::Critical(ct.id);
            self.emit(EventKind::Miss, None, Some(subject), "missed while queued");
            self.emit(EventKind::Discard, None, Some(subject), "missed while queued");
        }
        let active_expired = self
            .sup
            .active
            .as_ref()
            .filter(|a| a.ct.abs_deadline <= self.now && a.remaining > 0)
            .map(|a| (a.ct.id, a.proc));
        if let Some((id, proc)) = active_expired {
            let subject = Subject::Critical(id);
            self.emit(EventKind::Miss, Some(proc), Some(subject), "");
            self.emit(EventKind::Discard, Some(proc), Some(subject), "");
            self.procs[proc as usize].current = None;
            self.sup.active = None;
            self.critical_done();
        }
    }

    fn miss_job(&mut self, k: JobKey, detail: &str) {
        if self.jobs[&k].miss_logged {
            return;
        }
        let proc = self.jobs[&k].proc;
        self.jobs.get_mut(&k).unwrap().miss_logged = true;
        self.emit(EventKind::Miss, Some(proc), Some(Subject::Job(k)), detail);
    }

    /// Miss (once) then discard: every discarded ordinary job carries a Miss
    /// so the metrics identity holds on any terminated trace.
    fn discard_job(&mut self, k: JobKey, detail: &str) {
        self.miss_job(k, detail);
        let proc = self.jobs[&k].proc;
        if self.procs[proc as usize].current == Some(Subject::Job(k)) {
            self.procs[proc as usize].current = None;
        }
        self.set_state(k, JobState::Missed);
        self.set_state(k, JobState::Discarded);
        self.forget_job(k);
        self.sup.forget_postponed(k);
        self.emit(EventKind::Discard, Some(proc), Some(Subject::Job(k)), detail);
    }

    fn phase_replenish(&mut self) {
        if self.mode != SchedMode::Hybrid {
            return;
        }
        for p in 0..self.procs.len() {
            let proc = &mut self.procs[p];
            if proc.role != ProcRole::Primary || proc.failed() {
                continue;
            }
            if self.now % proc.server.quantum == 0 {
                proc.rm_budget = proc.rm_grant;
                proc.edf_budget = proc.edf_grant;
                let detail = format!("edf={} rm={}", proc.edf_grant, proc.rm_grant);
                let id = proc.id;
                self.emit(EventKind::ServerReplenish, Some(id), None, detail);
            }
        }
    }

    /// The dispatch ranking of one processor: the active critical task at the
    /// apex, natives ordered by the mode's policy, then reassigned guests in
    /// arrival order, then demoted late jobs in demotion order.
    pub fn build_order(&self, proc: u32) -> PriorityOrder {
        let p = &self.procs[proc as usize];
        let is_listed = |k: &JobKey| p.late_fifo.contains(k) || p.guest_fifo.contains(k);
        let natives: Vec<&JobRt> = self.live[proc as usize]
            .iter()
            .map(|k| &self.jobs[k])
            .filter(|rt| !is_listed(&rt.job.key))
            .collect();

        let mut entries: Vec<Subject> = Vec::new();
        match (self.mode, p.role) {
            (SchedMode::Edf, _) | (_, ProcRole::Backup) => {
                let mut sorted = natives;
                sorted.sort_by_key(|rt| edf_key(&rt.job));
                entries.extend(sorted.iter().map(|rt| Subject::Job(rt.job.key)));
            }
            (SchedMode::Rm, _) => {
                let mut sorted = natives;
                sorted.sort_by_key(|rt| (rt.job.base_priority, rt.job.key));
                entries.extend(sorted.iter().map(|rt| Subject::Job(rt.job.key)));
            }
            (SchedMode::Hybrid, ProcRole::Primary) => {
                let mut rm: Vec<&JobRt> = natives
                    .iter()
                    .copied()
                    .filter(|rt| rt.job.region == Region::FixedRm)
                    .collect();
                rm.sort_by_key(|rt| (rt.job.base_priority, rt.job.key));
                let mut edf: Vec<&JobRt> = natives
                    .into_iter()
                    .filter(|rt| rt.job.region == Region::DynamicEdf)
                    .collect();
                edf.sort_by_key(|rt| edf_key(&rt.job));
                // Merge by the server-arbitration rule: earlier candidate
                // deadline wins, the RM server takes ties.
                let (mut i, mut j) = (0, 0);
                while i < rm.len() || j < edf.len() {
                    let take_edf = match (rm.get(i), edf.get(j)) {
                        (Some(r), Some(e)) => e.job.abs_deadline < r.job.abs_deadline,
                        (None, Some(_)) => true,
                        _ => false,
                    };
                    if take_edf {
                        entries.push(Subject::Job(edf[j].job.key));
                        j += 1;
                    } else {
                        entries.push(Subject::Job(rm[i].job.key));
                        i += 1;
                    }
                }
            }
        }
        for k in &p.guest_fifo {
            if self.live[proc as usize].contains(k) && !p.late_fifo.contains(k) {
                entries.push(Subject::Job(*k));
            }
        }
        for k in &p.late_fifo {
            if self.live[proc as usize].contains(k) {
                entries.push(Subject::Job(*k));
            }
        }
        if let Some(active) = &self.sup.active {
            if active.proc == proc {
                entries.insert(0, Subject::Critical(active.ct.id));
            }
        }
        PriorityOrder::new(entries)
    }

    /// In hybrid mode a job runs only while its region's server has budget.
    fn budget_ok(&self, proc: &Processor, k: JobKey) -> bool {
        if self.mode != SchedMode::Hybrid || proc.role != ProcRole::Primary {
            return true;
        }
        match self.jobs[&k].job.region {
            Region::FixedRm => proc.rm_budget > 0,
            Region::DynamicEdf => proc.edf_budget > 0,
        }
    }

    fn phase_schedule(&mut self) {
        for p in 0..self.procs.len() {
            if self.procs[p].failed() {
                continue;
            }
            let order = self.build_order(p as u32);
            for (subject, rank) in order.ranked() {
                if let Subject::Job(k) = subject {
                    if let Some(rt) = self.jobs.get_mut(&k) {
                        rt.job.effective_priority = rank;
                    }
                }
            }
            let desired = order.entries().iter().copied().find(|s| match s {
                Subject::Critical(_) => true,
                Subject::Job(k) => self.budget_ok(&self.procs[p], *k),
            });
            let current = self.procs[p].current;
            if desired == current {
                continue;
            }
            if let Some(Subject::Job(old)) = current {
                debug_assert_eq!(self.jobs[&old].job.state, JobState::Running);
                self.set_state(old, JobState::Ready);
                self.emit(EventKind::Preempt, Some(p as u32), Some(Subject::Job(old)), "");
            }
            match desired {
                Some(subject) => {
                    if let Subject::Job(k) = subject {
                        self.set_state(k, JobState::Running);
                    }
                    self.emit(EventKind::Dispatch, Some(p as u32), Some(subject), "");
                    if self.ctx_cost > 0 && current.is_some() {
                        self.procs[p].cooldown = self.ctx_cost;
                    }
                    self.procs[p].current = Some(subject);
                }
                None => self.procs[p].current = None,
            }
        }
    }

    fn phase_execute(&mut self) {
        for p in 0..self.procs.len() {
            if self.procs[p].failed() {
                continue;
            }
            let Some(subject) = self.procs[p].current else { continue };
            if self.procs[p].cooldown > 0 {
                self.procs[p].cooldown -= 1;
                continue;
            }
            match subject {
                Subject::Job(k) => {
                    let region = {
                        let rt = self.jobs.get_mut(&k).unwrap();
                        debug_assert!(rt.job.remaining > 0);
                        rt.job.remaining -= 1;
                        rt.job.region
                    };
                    if self.mode == SchedMode::Hybrid && self.procs[p].role == ProcRole::Primary {
                        match region {
                            Region::FixedRm => self.procs[p].rm_budget -= 1,
                            Region::DynamicEdf => self.procs[p].edf_budget -= 1,
                        }
                    }
                }
                Subject::Critical(_) => {
                    // The super scheduler seizes the processor outside both
                    // servers; no budget is charged.
                    if let Some(a) = self.sup.active.as_mut() {
                        a.remaining -= 1;
                    }
                }
            }
        }
    }

    /// State transition with live-set and open-counter bookkeeping.
    fn set_state(&mut self, k: JobKey, state: JobState) {
        let (old, proc) = {
            let rt = &self.jobs[&k];
            (rt.job.state, rt.proc)
        };
        debug_assert!(
            transition_allowed(old, state),
            "bad transition {old:?} -> {state:?} for {k}"
        );
        if state == JobState::Completed {
            debug_assert_eq!(self.jobs[&k].job.remaining, 0, "completed {k} with work left");
        }
        self.jobs.get_mut(&k).unwrap().job.state = state;
        match state {
            JobState::Ready | JobState::Running => {
                self.live[proc as usize].insert(k);
            }
            _ => {
                self.live[proc as usize].remove(&k);
            }
        }
        if state.is_terminal() && !old.is_terminal() {
            self.open_jobs -= 1;
        }
    }

    /// Move a job between processors, keeping the live sets consistent.
    fn move_to_proc(&mut self, k: JobKey, proc: u32) {
        let old = self.jobs[&k].proc;
        if old == proc {
            return;
        }
        if self.live[old as usize].remove(&k) {
            self.live[proc as usize].insert(k);
        }
        self.jobs.get_mut(&k).unwrap().proc = proc;
    }

    fn forget_job(&mut self, k: JobKey) {
        for p in &mut self.procs {
            p.late_fifo.retain(|j| *j != k);
            p.guest_fifo.retain(|j| *j != k);
        }
    }

    #[cfg(debug_assertions)]
    fn check_invariants(&self) {
        use crate::policy::Subject;
        // At most one running job per processor, and running jobs sit on the
        // processor that lists them as current.
        for p in &self.procs {
            if p.failed() {
                assert!(p.current.is_none(), "failed processor still running");
                assert!(self.live[p.id as usize].is_empty(), "live jobs on failed proc");
                continue;
            }
            if let Some(Subject::Job(k)) = p.current {
                assert_eq!(self.jobs[&k].job.state, JobState::Running);
                assert_eq!(self.jobs[&k].proc, p.id);
            }
            for k in &self.live[p.id as usize] {
                let rt = &self.jobs[k];
                assert_eq!(rt.proc, p.id);
                assert!(matches!(rt.job.state, JobState::Ready | JobState::Running));
                if rt.job.state == JobState::Running {
                    assert_eq!(p.current, Some(Subject::Job(*k)), "running job not current");
                }
            }
            // Work conservation: no idle processor with ready, budget-eligible
            // work.
            if p.current.is_none() {
                let ready = self.live[p.id as usize]
                    .iter()
                    .any(|k| self.budget_ok(p, *k));
                assert!(!ready, "processor {} idle with ready work", p.id);
            }
        }
    }
}

fn transition_allowed(from: JobState, to: JobState) -> bool {
    use JobState::*;
    matches!(
        (from, to),
        (Ready, Running)
            | (Ready, Missed)
            | (Running, Ready)
            | (Running, Postponed)
            | (Running, Completed)
            | (Running, Missed)
            | (Postponed, Ready)
            | (Postponed, Missed)
            | (Missed, Discarded)
    )
}

/// The tasks the fixed-priority policy orders on `proc`: the RM region in
/// hybrid mode, everything in rm mode, nothing in pure EDF mode.
fn rm_subset(
    task_set: &TaskSet,
    homes: &BTreeMap<TaskId, u32>,
    proc: u32,
    mode: SchedMode,
) -> Vec<Task> {
    task_set
        .tasks
        .iter()
        .filter(|t| homes.get(&t.id) == Some(&proc))
        .filter(|t| match mode {
            SchedMode::Hybrid => t.region == Region::FixedRm,
            SchedMode::Rm => true,
            SchedMode::Edf => false,
        })
        .cloned()
        .map(|mut t| {
            t.region = Region::FixedRm;
            t
        })
        .collect()
}

/// Place each task on a primary processor: the explicit assignment when
/// given, otherwise first-fit by region capacity, falling back to the
/// least-utilized processor so overloaded scenarios still load and run.
fn assign_homes(scenario: &Scenario) -> BTreeMap<TaskId, u32> {
    let n = scenario.proc_count as usize;
    let mut rm_load = vec![0.0f64; n];
    let mut edf_load = vec![0.0f64; n];
    let mut homes = BTreeMap::new();
    for task in &scenario.task_set.tasks {
        let u = task.utilization();
        let is_rm = scenario.mode == SchedMode::Hybrid && task.region == Region::FixedRm;
        let proc = match scenario.assignments.get(&task.id) {
            Some(p) => *p,
            None => {
                let fit = (0..n).find(|&p| {
                    let cap = match scenario.mode {
                        SchedMode::Hybrid => {
                            let cfg = scenario.server_for(p as u32);
                            if is_rm {
                                cfg.beta
                            } else {
                                cfg.alpha
                            }
                        }
                        _ => 1.0,
                    };
                    let load = if is_rm { rm_load[p] } else { edf_load[p] };
                    load + u <= cap + 1e-9
                });
                match fit {
                    Some(p) => p as u32,
                    None => (0..n)
                        .min_by(|&a, &b| {
                            let ta = rm_load[a] + edf_load[a];
                            let tb = rm_load[b] + edf_load[b];
                            ta.partial_cmp(&tb).unwrap().then(a.cmp(&b))
                        })
                        .unwrap() as u32,
                }
            }
        };
        if is_rm {
            rm_load[proc as usize] += u;
        } else {
            edf_load[proc as usize] += u;
        }
        homes.insert(task.id, proc);
    }
    homes
}

/// Run a scenario to completion: the top-level entry point.
pub fn run(scenario: &Scenario) -> Result<Trace, ScenarioError> {
    Ok(Engine::new(scenario)?.run_to_end())
}
