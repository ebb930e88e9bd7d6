//! Deterministic discrete-time simulator and analysis toolkit for hybrid
//! RM/EDF scheduling of periodic hard real-time tasks on multiprocessors.
//!
//! The engine models a partitioned multiprocessor where each processor runs
//! two constant-utilization servers (a rate-monotonic region and an EDF
//! region), or a single pure-EDF/pure-RM queue. On top sits a super
//! scheduler: suspended while the critical queue is empty, it seizes a
//! processor on catastrophic-task arrival via the priority alter protocol,
//! reassigns displaced jobs across processors, and resumes them in LIFO order
//! once the critical task completes. Primary/backup fault tolerance with
//! backup-slot overloading covers crash-stop processor failures.
//!
//! Everything is integer ticks and every run is bitwise deterministic for a
//! given scenario and seed.

pub mod batch;
pub mod engine;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod scenario;
pub mod super_sched;
pub mod task;
pub mod trace;

pub use engine::{run, Engine};
pub use error::{EngineError, GenError, ModelError, ScenarioError};
pub use metrics::{run_metrics, RunMetrics, StabilityForm};
pub use report::{build_report, RunReport};
pub use scenario::{load_scenario, load_scenario_str, LoadedScenario, Scenario, SchedMode};
pub use task::{CriticalTask, Job, JobKey, Task, TaskSet, Tick};
pub use trace::{emit_gantt, emit_trace, Trace, TraceFormat};
