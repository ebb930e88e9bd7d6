//! Per-run report: metrics, both stability readings, and offline
//! schedulability verdicts, rendered as a flat key-value text block or JSON.

use serde::{Deserialize, Serialize};

use crate::metrics::{
    edf_feasible, is_overloaded, ll_bound, rm_schedulable, run_metrics, stability, RmVerdict,
    RunMetrics, StabilityForm,
};
use crate::scenario::Scenario;
use crate::task::{hyperperiod, total_utilization, Tick};
use crate::trace::Trace;

/// Offline analysis attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub total_utilization: f64,
    pub hyperperiod: Option<Tick>,
    pub ll_bound: Option<f64>,
    pub rm_schedulable: Option<RmVerdict>,
    pub edf_feasible: bool,
    pub overloaded: bool,
}

/// Everything a run leaves behind besides the trace itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub stability_raw: Option<(f64, bool)>,
    pub stability_normalized: Option<(f64, bool)>,
    pub verdicts: Verdicts,
    pub trace_path: Option<String>,
}

/// Compute the verdicts for a scenario (independent of any run).
pub fn verdicts(scenario: &Scenario) -> Verdicts {
    let ts = &scenario.task_set;
    let h = hyperperiod(ts).ok();
    let window = scenario
        .horizon
        .or(h)
        .unwrap_or(0)
        .max(scenario.critical.iter().map(|c| c.abs_deadline).max().unwrap_or(0));
    Verdicts {
        total_utilization: total_utilization(ts),
        hyperperiod: h,
        ll_bound: if ts.is_empty() {
            None
        } else {
            ll_bound(ts.len()).ok()
        },
        rm_schedulable: if ts.is_empty() {
            None
        } else {
            Some(rm_schedulable(ts))
        },
        edf_feasible: edf_feasible(ts),
        overloaded: window > 0
            && is_overloaded(ts, &scenario.critical, window, scenario.proc_count),
    }
}

/// Assemble the report for a finished run.
pub fn build_report(scenario: &Scenario, trace: &Trace, trace_path: Option<String>) -> RunReport {
    let metrics = run_metrics(trace);
    let stability_raw = stability(&metrics, StabilityForm::Raw).ok();
    let stability_normalized = stability(&metrics, StabilityForm::Normalized).ok();
    RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        metrics,
        stability_raw,
        stability_normalized,
        verdicts: verdicts(scenario),
        trace_path,
    }
}

fn ratio(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_ratio(v: Option<f64>) -> String {
    v.map(ratio).unwrap_or_else(|| "none".to_string())
}

impl RunReport {
    /// Flat key-value rendering, one metric per line.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let m = &self.metrics;
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_total = {}", m.n_total);
        let _ = writeln!(s, "miss_n = {}", m.miss_n);
        let _ = writeln!(s, "waited_tx = {}", m.waited_tx);
        let _ = writeln!(s, "ct_arrived = {}", m.ct_arrived);
        let _ = writeln!(s, "ct_met = {}", m.ct_met);
        let _ = writeln!(s, "miss_rate = {}", ratio(m.miss_rate));
        let _ = writeln!(s, "guarantee_ratio = {}", ratio(m.guarantee_ratio));
        let _ = writeln!(s, "success_before_x = {}", opt_ratio(m.success_before_x));
        let _ = writeln!(s, "success_after_y = {}", opt_ratio(m.success_after_y));
        match self.stability_normalized {
            Some((v, stable)) => {
                let _ = writeln!(s, "stability_normalized = {}", ratio(v));
                let _ = writeln!(s, "stable = {stable}");
            }
            None => {
                let _ = writeln!(s, "stability_normalized = none");
                let _ = writeln!(s, "stable = none");
            }
        }
        match self.stability_raw {
            Some((v, stable)) => {
                let _ = writeln!(s, "stability_raw = {}", ratio(v));
                let _ = writeln!(s, "stable_raw = {stable}");
            }
            None => {
                let _ = writeln!(s, "stability_raw = none");
                let _ = writeln!(s, "stable_raw = none");
            }
        }
        let v = &self.verdicts;
        let _ = writeln!(s, "total_utilization = {}", ratio(v.total_utilization));
        let _ = writeln!(
            s,
            "hyperperiod = {}",
            v.hyperperiod.map(|h| h.to_string()).unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(s, "ll_bound = {}", opt_ratio(v.ll_bound));
        let _ = writeln!(
            s,
            "rm_schedulable = {}",
            match v.rm_schedulable {
                Some(RmVerdict::Yes) => "yes",
                Some(RmVerdict::Unknown) => "unknown",
                None => "none",
            }
        );
        let _ = writeln!(s, "edf_feasible = {}", v.edf_feasible);
        // Overload verdicts bound what any online scheduler can achieve: no
        // competitive factor above 0.25 is possible once overloaded.
        let _ = writeln!(s, "overloaded = {}", v.overloaded);
        for (task, count) in &m.per_task_miss {
            let _ = writeln!(s, "miss_count_task_{task} = {count}");
        }
        if let Some(p) = &self.trace_path {
            let _ = writeln!(s, "trace = {p}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario_str;

    #[test]
    fn report_renders_every_metric_line() {
        let text = "[scenario]\nname = r\nhorizon = 4\n\n[task]\nid = 1\nwcet = 1\nperiod = 2\n";
        let scenario = load_scenario_str(text, "r").unwrap().scenario;
        let trace = crate::engine::run(&scenario).unwrap();
        let report = build_report(&scenario, &trace, None);
        let rendered = report.to_text();
        for key in [
            "miss_rate = ",
            "guarantee_ratio = ",
            "stability_normalized = ",
            "stability_raw = ",
            "ll_bound = ",
            "edf_feasible = ",
        ] {
            assert!(rendered.contains(key), "missing {key} in\n{rendered}");
        }
        assert!(rendered.contains("miss_rate = 0.000000"));
    }

    #[test]
    fn report_json_round_trips() {
        let text = "[scenario]\nname = j\nhorizon = 4\n\n[task]\nid = 1\nwcet = 1\nperiod = 2\n";
        let scenario = load_scenario_str(text, "j").unwrap().scenario;
        let trace = crate::engine::run(&scenario).unwrap();
        let report = build_report(&scenario, &trace, Some("t.jsonl".into()));
        let back: RunReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
