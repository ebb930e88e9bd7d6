//! Scenario ingestion: a line-oriented `key = value` format with `[section]`
//! blocks, full validation (every violation reported, not just the first),
//! defaulting with logged warnings, and a canonical emitter for round-trips.
//!
//! Grammar, informally:
//!
//! ```text
//! # comment lines and blank lines are ignored
//! [scenario]            # exactly one; global knobs
//! name = demo
//! mode = hybrid         # hybrid | edf | rm
//! processors = 2        # primary count
//! backups = 1           # backup processor count
//! quantum = 10          # server replenishment interval (hybrid)
//! alpha = 0.5           # EDF server share (hybrid)
//! beta = 0.4            # RM server share (hybrid)
//! horizon = 300         # optional; defaults to the hyperperiod
//! seed = 42
//! miss_policy = discard # discard | demote
//! strict = false        # enforce D = T
//! ctx_cost = 0
//!
//! [task]                # one block per task
//! id = 1
//! wcet = 20
//! period = 25
//! deadline = 150        # optional, defaults to the period
//! region = rm           # rm | edf; defaults to edf
//! proc = 0              # optional explicit home processor
//!
//! [critical]            # one block per critical task
//! id = 1
//! wcet = 60
//! arrival = 60
//! deadline = 180        # optional absolute deadline; defaults to arrival + 2*wcet
//!
//! [fault]
//! proc = 0
//! at = 35
//!
//! [backup_slot]
//! proc = 2              # a backup processor
//! start = 0
//! end = 100
//! covers = J1.1, J2.1
//!
//! [server]              # optional per-processor server override
//! proc = 0
//! alpha = 0.6
//! beta = 0.3
//! quantum = 20
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::policy::{server_budget, ServerConfig};
use crate::task::{
    hyperperiod, total_utilization, CriticalTask, JobKey, Region, Task, TaskId, TaskSet, Tick,
};
use crate::trace::parse_subject;

/// Dispatching discipline for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedMode {
    /// Two constant-utilization servers per processor (RM + EDF regions).
    Hybrid,
    /// Single EDF queue per processor, no servers.
    Edf,
    /// Single fixed-priority queue per processor, no servers.
    Rm,
}

impl SchedMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedMode::Hybrid => "hybrid",
            SchedMode::Edf => "edf",
            SchedMode::Rm => "rm",
        }
    }
}

/// What happens to a hard job once it misses its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissPolicy {
    /// Missed jobs are discarded immediately.
    Discard,
    /// Missed jobs keep running at the bottom of the priority order.
    Demote,
}

impl MissPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MissPolicy::Discard => "discard",
            MissPolicy::Demote => "demote",
        }
    }
}

/// A crash-stop processor fault at a fixed tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub proc: u32,
    pub at: Tick,
}

/// A reserved backup window on a backup processor covering specific jobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub proc: u32,
    pub start: Tick,
    pub end: Tick,
    pub covers: Vec<JobKey>,
}

/// Full simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub mode: SchedMode,
    pub task_set: TaskSet,
    /// Explicit task homes; tasks absent here are placed by first-fit.
    pub assignments: BTreeMap<TaskId, u32>,
    /// Primary processor count; processors 0..proc_count are primaries.
    pub proc_count: u32,
    /// Backup processors get ids proc_count..proc_count+backup_count.
    pub backup_count: u32,
    pub server: ServerConfig,
    pub server_overrides: BTreeMap<u32, ServerConfig>,
    pub critical: Vec<CriticalTask>,
    pub faults: Vec<FaultSpec>,
    pub slots: Vec<SlotSpec>,
    pub miss_policy: MissPolicy,
    pub ctx_cost: Tick,
    pub horizon: Option<Tick>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "unnamed".to_string(),
            seed: 0,
            mode: SchedMode::Edf,
            task_set: TaskSet::default(),
            assignments: BTreeMap::new(),
            proc_count: 1,
            backup_count: 0,
            server: ServerConfig::default(),
            server_overrides: BTreeMap::new(),
            critical: Vec::new(),
            faults: Vec::new(),
            slots: Vec::new(),
            miss_policy: MissPolicy::Discard,
            ctx_cost: 0,
            horizon: None,
        }
    }
}

impl Scenario {
    pub fn total_procs(&self) -> u32 {
        self.proc_count + self.backup_count
    }

    pub fn server_for(&self, proc: u32) -> ServerConfig {
        self.server_overrides.get(&proc).copied().unwrap_or(self.server)
    }

    /// Explicit horizon, or the hyperperiod (doubled when critical tasks are
    /// injected, to observe post-critical recovery).
    pub fn effective_horizon(&self) -> Result<Tick, String> {
        if let Some(h) = self.horizon {
            return Ok(h);
        }
        if self.task_set.is_empty() {
            return Err("horizon required for an empty task set".to_string());
        }
        let h = hyperperiod(&self.task_set).map_err(|e| e.to_string())?;
        if self.critical.is_empty() {
            Ok(h)
        } else {
            h.checked_mul(2)
                .ok_or_else(|| "horizon overflow; set an explicit horizon".to_string())
        }
    }

    /// Semantic validation across every module's type invariants. All
    /// violations are collected.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errors = Vec::new();
        if let Err(task_errors) = self.task_set.validate() {
            errors.extend(task_errors);
        }
        if self.proc_count == 0 {
            errors.push("at least one primary processor is required".to_string());
        }
        if self.mode == SchedMode::Hybrid {
            for proc in 0..self.proc_count {
                let cfg = self.server_for(proc);
                if let Err(server_errors) = cfg.validate() {
                    errors.extend(server_errors.into_iter().map(|e| format!("proc {proc}: {e}")));
                } else {
                    for (share, label) in [(cfg.alpha, "edf"), (cfg.beta, "rm")] {
                        if let Err(e) = server_budget(&cfg, share) {
                            errors.push(format!("proc {proc} {label} server: {e}"));
                        }
                    }
                }
            }
        }
        for (id, proc) in &self.assignments {
            if self.task_set.get(*id).is_none() {
                errors.push(format!("assignment for unknown task {id}"));
            }
            if *proc >= self.proc_count {
                errors.push(format!(
                    "task {id} homed on processor {proc}, which is not a primary (0..{})",
                    self.proc_count
                ));
            }
        }
        let mut ct_ids = std::collections::BTreeSet::new();
        for ct in &self.critical {
            if !ct_ids.insert(ct.id) {
                errors.push(format!("critical task {}: duplicate id", ct.id));
            }
            if ct.wcet == 0 {
                errors.push(format!("critical task {}: wcet must be positive", ct.id));
            }
            if ct.arrival >= ct.abs_deadline {
                errors.push(format!(
                    "critical task {}: arrival {} not before deadline {}",
                    ct.id, ct.arrival, ct.abs_deadline
                ));
            }
        }
        let mut faulted = std::collections::BTreeSet::new();
        for f in &self.faults {
            if f.proc >= self.total_procs() {
                errors.push(format!("fault on unknown processor {}", f.proc));
            }
            if !faulted.insert(f.proc) {
                errors.push(format!("processor {}: more than one fault scheduled", f.proc));
            }
        }
        for (i, s) in self.slots.iter().enumerate() {
            if s.proc < self.proc_count || s.proc >= self.total_procs() {
                errors.push(format!(
                    "backup slot {i}: processor {} is not a backup ({}..{})",
                    s.proc,
                    self.proc_count,
                    self.total_procs()
                ));
            }
            if s.start >= s.end {
                errors.push(format!("backup slot {i}: empty window [{}, {})", s.start, s.end));
            }
            if s.covers.is_empty() {
                errors.push(format!("backup slot {i}: covers no jobs"));
            }
            for k in &s.covers {
                if self.task_set.get(k.task).is_none() {
                    errors.push(format!("backup slot {i}: covered job {k} has no task"));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errors))
        }
    }

    /// Render the canonical text form; `load` of the result parses back to an
    /// equal scenario.
    pub fn to_canonical_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "processors = {}", self.proc_count);
        let _ = writeln!(s, "backups = {}", self.backup_count);
        let _ = writeln!(s, "quantum = {}", self.server.quantum);
        let _ = writeln!(s, "alpha = {}", self.server.alpha);
        let _ = writeln!(s, "beta = {}", self.server.beta);
        if let Some(h) = self.horizon {
            let _ = writeln!(s, "horizon = {h}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "miss_policy = {}", self.miss_policy.as_str());
        let _ = writeln!(s, "strict = {}", self.task_set.strict_mode);
        let _ = writeln!(s, "ctx_cost = {}", self.ctx_cost);
        for t in &self.task_set.tasks {
            let _ = writeln!(s);
            let _ = writeln!(s, "[task]");
            let _ = writeln!(s, "id = {}", t.id.0);
            let _ = writeln!(s, "wcet = {}", t.wcet);
            let _ = writeln!(s, "period = {}", t.period);
            let _ = writeln!(s, "deadline = {}", t.deadline);
            let _ = writeln!(
                s,
                "region = {}",
                match t.region {
                    Region::FixedRm => "rm",
                    Region::DynamicEdf => "edf",
                }
            );
            if let Some(p) = self.assignments.get(&t.id) {
                let _ = writeln!(s, "proc = {p}");
            }
        }
        for ct in &self.critical {
            let _ = writeln!(s);
            let _ = writeln!(s, "[critical]");
            let _ = writeln!(s, "id = {}", ct.id.0);
            let _ = writeln!(s, "wcet = {}", ct.wcet);
            let _ = writeln!(s, "arrival = {}", ct.arrival);
            let _ = writeln!(s, "deadline = {}", ct.abs_deadline);
        }
        for f in &self.faults {
            let _ = writeln!(s);
            let _ = writeln!(s, "[fault]");
            let _ = writeln!(s, "proc = {}", f.proc);
            let _ = writeln!(s, "at = {}", f.at);
        }
        for slot in &self.slots {
            let _ = writeln!(s);
            let _ = writeln!(s, "[backup_slot]");
            let _ = writeln!(s, "proc = {}", slot.proc);
            let _ = writeln!(s, "start = {}", slot.start);
            let _ = writeln!(s, "end = {}", slot.end);
            let covers: Vec<String> = slot.covers.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "covers = {}", covers.join(", "));
        }
        for (proc, cfg) in &self.server_overrides {
            let _ = writeln!(s);
            let _ = writeln!(s, "[server]");
            let _ = writeln!(s, "proc = {proc}");
            let _ = writeln!(s, "alpha = {}", cfg.alpha);
            let _ = writeln!(s, "beta = {}", cfg.beta);
            let _ = writeln!(s, "quantum = {}", cfg.quantum);
        }
        s
    }
}

/// A validated scenario plus everything the loader defaulted or flagged.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

/// Parse and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(&display, e))?;
    load_scenario_str(&text, &display)
}

/// Parse and validate scenario text (`origin` names the source in errors).
pub fn load_scenario_str(text: &str, origin: &str) -> Result<LoadedScenario, ScenarioError> {
    let blocks = parse_blocks(text, origin)?;
    let mut scenario = Scenario::default();
    let mut warnings = Vec::new();
    let mut saw_scenario = false;

    for block in &blocks {
        match block.name.as_str() {
            "scenario" => {
                saw_scenario = true;
                read_scenario_block(block, &mut scenario, origin)?;
            }
            "task" => {
                let id = block.require_u64("id", origin)? as u32;
                let wcet = block.require_u64("wcet", origin)?;
                let period = block.require_u64("period", origin)?;
                let deadline = match block.get("deadline") {
                    Some(_) => block.require_u64("deadline", origin)?,
                    None => {
                        warnings.push(format!("task {id}: deadline defaulted to period {period}"));
                        period
                    }
                };
                let region = match block.get("region") {
                    None => Region::DynamicEdf,
                    Some(v) => match v.value.as_str() {
                        "rm" => Region::FixedRm,
                        "edf" => Region::DynamicEdf,
                        other => {
                            return Err(block.err(origin, "region", format!("unknown region {other:?}")))
                        }
                    },
                };
                scenario
                    .task_set
                    .tasks
                    .push(Task::new(id, wcet, period, deadline, region));
                if block.get("proc").is_some() {
                    let proc = block.require_u64("proc", origin)? as u32;
                    scenario.assignments.insert(TaskId(id), proc);
                }
            }
            "critical" => {
                let id = block.require_u64("id", origin)? as u32;
                let wcet = block.require_u64("wcet", origin)?;
                let arrival = block.require_u64("arrival", origin)?;
                let deadline = match block.get("deadline") {
                    Some(_) => block.require_u64("deadline", origin)?,
                    None => {
                        let d = arrival + 2 * wcet;
                        warnings.push(format!(
                            "critical task {id}: deadline defaulted to arrival + 2*wcet = {d}"
                        ));
                        d
                    }
                };
                scenario
                    .critical
                    .push(CriticalTask::new(id, wcet, arrival, deadline));
            }
            "fault" => {
                scenario.faults.push(FaultSpec {
                    proc: block.require_u64("proc", origin)? as u32,
                    at: block.require_u64("at", origin)?,
                });
            }
            "backup_slot" => {
                let covers_raw = block
                    .get("covers")
                    .ok_or_else(|| block.err(origin, "covers", "missing key".to_string()))?;
                let mut covers = Vec::new();
                for part in covers_raw.value.split(',') {
                    let label = part.trim();
                    match parse_subject(label).and_then(|s| s.as_job()) {
                        Some(k) => covers.push(k),
                        None => {
                            return Err(block.err(
                                origin,
                                "covers",
                                format!("expected job labels like J1.1, got {label:?}"),
                            ))
                        }
                    }
                }
                scenario.slots.push(SlotSpec {
                    proc: block.require_u64("proc", origin)? as u32,
                    start: block.require_u64("start", origin)?,
                    end: block.require_u64("end", origin)?,
                    covers,
                });
            }
            "server" => {
                let proc = block.require_u64("proc", origin)? as u32;
                let mut cfg = scenario.server;
                if block.get("alpha").is_some() {
                    cfg.alpha = block.require_f64("alpha", origin)?;
                }
                if block.get("beta").is_some() {
                    cfg.beta = block.require_f64("beta", origin)?;
                }
                if block.get("quantum").is_some() {
                    cfg.quantum = block.require_u64("quantum", origin)?;
                }
                scenario.server_overrides.insert(proc, cfg);
            }
            other => {
                return Err(ScenarioError::Parse {
                    path: origin.to_string(),
                    line: block.line,
                    column: 1,
                    message: format!("unknown section [{other}]"),
                })
            }
        }
    }
    if !saw_scenario {
        return Err(ScenarioError::Parse {
            path: origin.to_string(),
            line: 1,
            column: 1,
            message: "missing [scenario] section".to_string(),
        });
    }

    scenario.validate()?;

    let capacity = scenario.proc_count as f64;
    let u = total_utilization(&scenario.task_set);
    if u > capacity + 1e-9 {
        warnings.push(format!(
            "utilization {u:.2} exceeds processor capacity {capacity:.0} under the (C,T,D) reading"
        ));
    }
    if let Ok(h) = scenario.effective_horizon() {
        if scenario.horizon.is_none() && !scenario.task_set.is_empty() {
            warnings.push(format!("horizon defaulted to {h}"));
        }
        for ct in &scenario.critical {
            if ct.arrival >= h {
                warnings.push(format!(
                    "critical task {} arrives at {} which is at or after the horizon {h}; it will never be injected",
                    ct.id, ct.arrival
                ));
            }
        }
    }

    Ok(LoadedScenario { scenario, warnings })
}

fn read_scenario_block(
    block: &Block,
    scenario: &mut Scenario,
    origin: &str,
) -> Result<(), ScenarioError> {
    if let Some(v) = block.get("name") {
        scenario.name = v.value.clone();
    }
    if block.get("seed").is_some() {
        scenario.seed = block.require_u64("seed", origin)?;
    }
    if let Some(v) = block.get("mode") {
        scenario.mode = match v.value.as_str() {
            "hybrid" => SchedMode::Hybrid,
            "edf" => SchedMode::Edf,
            "rm" => SchedMode::Rm,
            other => return Err(block.err(origin, "mode", format!("unknown mode {other:?}"))),
        };
    }
    if block.get("processors").is_some() {
        scenario.proc_count = block.require_u64("processors", origin)? as u32;
    }
    if block.get("backups").is_some() {
        scenario.backup_count = block.require_u64("backups", origin)? as u32;
    }
    if block.get("quantum").is_some() {
        scenario.server.quantum = block.require_u64("quantum", origin)?;
    }
    if block.get("alpha").is_some() {
        scenario.server.alpha = block.require_f64("alpha", origin)?;
    }
    if block.get("beta").is_some() {
        scenario.server.beta = block.require_f64("beta", origin)?;
    }
    if block.get("horizon").is_some() {
        scenario.horizon = Some(block.require_u64("horizon", origin)?);
    }
    if let Some(v) = block.get("miss_policy") {
        scenario.miss_policy = match v.value.as_str() {
            "discard" => MissPolicy::Discard,
            "demote" => MissPolicy::Demote,
            other => {
                return Err(block.err(origin, "miss_policy", format!("unknown policy {other:?}")))
            }
        };
    }
    if let Some(v) = block.get("strict") {
        scenario.task_set.strict_mode = match v.value.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(block.err(origin, "strict", format!("expected bool, got {other:?}"))),
        };
    }
    if block.get("ctx_cost").is_some() {
        scenario.ctx_cost = block.require_u64("ctx_cost", origin)?;
    }
    Ok(())
}

struct KeyValue {
    value: String,
    line: usize,
    column: usize,
}

struct Block {
    name: String,
    line: usize,
    keys: BTreeMap<String, KeyValue>,
}

impl Block {
    fn get(&self, key: &str) -> Option<&KeyValue> {
        self.keys.get(key)
    }

    fn err(&self, origin: &str, key: &str, message: String) -> ScenarioError {
        let (line, column) = self
            .keys
            .get(key)
            .map(|v| (v.line, v.column))
            .unwrap_or((self.line, 1));
        ScenarioError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: format!("[{}] {key}: {message}", self.name),
        }
    }

    fn require_u64(&self, key: &str, origin: &str) -> Result<u64, ScenarioError> {
        let v = self
            .get(key)
            .ok_or_else(|| self.err(origin, key, "missing key".to_string()))?;
        v.value
            .parse()
            .map_err(|_| self.err(origin, key, format!("expected integer, got {:?}", v.value)))
    }

    fn require_f64(&self, key: &str, origin: &str) -> Result<f64, ScenarioError> {
        let v = self
            .get(key)
            .ok_or_else(|| self.err(origin, key, "missing key".to_string()))?;
        v.value
            .parse()
            .map_err(|_| self.err(origin, key, format!("expected number, got {:?}", v.value)))
    }
}

fn parse_blocks(text: &str, origin: &str) -> Result<Vec<Block>, ScenarioError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(section) = trimmed.strip_prefix('[') {
            let name = section.strip_suffix(']').ok_or_else(|| ScenarioError::Parse {
                path: origin.to_string(),
                line: line_no,
                column: raw.len(),
                message: "unterminated section header".to_string(),
            })?;
            blocks.push(Block {
                name: name.trim().to_string(),
                line: line_no,
                keys: BTreeMap::new(),
            });
            continue;
        }
        let Some(eq) = trimmed.find('=') else {
            return Err(ScenarioError::Parse {
                path: origin.to_string(),
                line: line_no,
                column: 1,
                message: format!("expected `key = value`, got {trimmed:?}"),
            });
        };
        let key = trimmed[..eq].trim().to_string();
        let value = trimmed[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ScenarioError::Parse {
                path: origin.to_string(),
                line: line_no,
                column: 1,
                message: "empty key".to_string(),
            });
        }
        let Some(block) = blocks.last_mut() else {
            return Err(ScenarioError::Parse {
                path: origin.to_string(),
                line: line_no,
                column: 1,
                message: "key outside any [section]".to_string(),
            });
        };
        let column = raw.find('=').map(|c| c + 2).unwrap_or(1);
        block.keys.insert(
            key,
            KeyValue {
                value,
                line: line_no,
                column,
            },
        );
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let text = "[scenario]\nname = tiny\n\n[task]\nid = 1\nwcet = 1\nperiod = 4\n";
        let loaded = load_scenario_str(text, "tiny").unwrap();
        let s = &loaded.scenario;
        assert_eq!(s.name, "tiny");
        assert_eq!(s.proc_count, 1);
        assert_eq!(s.task_set.tasks[0].deadline, 4);
        assert!(loaded.warnings.iter().any(|w| w.contains("deadline defaulted")));
        assert!(loaded.warnings.iter().any(|w| w.contains("horizon defaulted to 4")));
    }

    #[test]
    fn zero_wcet_is_rejected_with_message() {
        let text = "[scenario]\nname = bad\n\n[task]\nid = 1\nwcet = 0\nperiod = 4\n";
        let err = load_scenario_str(text, "bad").unwrap_err();
        match err {
            ScenarioError::Validation(errors) => {
                assert!(errors.iter().any(|e| e.contains("wcet must be positive")), "{errors:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn parse_error_carries_line_and_column() {
        let text = "[scenario]\nname = x\nbogus line without equals\n";
        let err = load_scenario_str(text, "f").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn validation_collects_every_violation() {
        let text = "[scenario]\nname = multi\nprocessors = 0\n\n[task]\nid = 1\nwcet = 0\nperiod = 0\n";
        let err = load_scenario_str(text, "multi").unwrap_err();
        match err {
            ScenarioError::Validation(errors) => assert!(errors.len() >= 3, "{errors:?}"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn canonical_round_trip_is_idempotent() {
        let text = "\
[scenario]
name = round
mode = hybrid
processors = 2
backups = 1
quantum = 10
alpha = 0.5
beta = 0.4
horizon = 100
seed = 7
miss_policy = demote
strict = false
ctx_cost = 0

[task]
id = 1
wcet = 2
period = 10
deadline = 10
region = rm
proc = 0

[task]
id = 2
wcet = 3
period = 20
region = edf

[critical]
id = 1
wcet = 5
arrival = 30
deadline = 50

[fault]
proc = 0
at = 40

[backup_slot]
proc = 2
start = 0
end = 90
covers = J1.1, J2.1
";
        let first = load_scenario_str(text, "round").unwrap().scenario;
        let emitted = first.to_canonical_text();
        let second = load_scenario_str(&emitted, "round2").unwrap().scenario;
        assert_eq!(first, second);
        let third = load_scenario_str(&second.to_canonical_text(), "round3")
            .unwrap()
            .scenario;
        assert_eq!(second, third);
    }

    #[test]
    fn overload_warning_fires_on_paper_tuples() {
        let mut text = String::from("[scenario]\nname = paper\nhorizon = 100\n");
        for (i, (c, t, d)) in [(20u64, 25u64, 150u64), (40, 10, 50), (60, 50, 200), (50, 30, 180)]
            .iter()
            .enumerate()
        {
            text.push_str(&format!(
                "\n[task]\nid = {}\nwcet = {c}\nperiod = {t}\ndeadline = {d}\n",
                i + 1
            ));
        }
        let loaded = load_scenario_str(&text, "paper").unwrap();
        assert!(
            loaded
                .warnings
                .iter()
                .any(|w| w.contains("7.67") && w.contains("exceeds processor capacity")),
            "{:?}",
            loaded.warnings
        );
    }
}
