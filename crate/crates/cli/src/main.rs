//! Command-line front end: run scenarios, analyze schedulability, drive batch
//! experiments, and generate task sets.
//!
//! Exit codes: 0 = ran (deadline misses are results, not failures),
//! 2 = validation or parse error, 3 = I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use supersched_core::batch::{run_batch, BatchSource, GenSpec};
use supersched_core::engine;
use supersched_core::error::ScenarioError;
use supersched_core::generator::generate_taskset;
use supersched_core::report::{build_report, verdicts};
use supersched_core::scenario::{load_scenario, Scenario, SchedMode};
use supersched_core::trace::{emit_gantt, emit_trace, parse_trace_jsonl, TraceFormat};

#[derive(Parser)]
#[command(
    name = "supersched",
    about = "Hybrid RM/EDF multiprocessor scheduling simulator with a critical-task super scheduler",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hybrid,
    Edf,
    Rm,
}

impl From<ModeArg> for SchedMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hybrid => SchedMode::Hybrid,
            ModeArg::Edf => SchedMode::Edf,
            ModeArg::Rm => SchedMode::Rm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario: write the trace and Gantt data, print a report.
    Run(RunArgs),
    /// Offline schedulability verdicts for a scenario, optionally with
    /// metrics recomputed from an existing trace file.
    Analyze(AnalyzeArgs),
    /// Run a directory of scenarios (or generated ones) across repetitions.
    Batch(BatchArgs),
    /// Generate a random task set and emit it as a scenario file.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file to simulate.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for the trace and Gantt files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Trace serialization format.
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the horizon (ticks).
    #[arg(long)]
    until: Option<u64>,
    /// Report rendering.
    #[arg(long, value_enum, default_value = "text")]
    report: ReportArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Previously emitted jsonl trace to compute run metrics from.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportArg,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory of *.scenario files.
    #[arg(long, conflicts_with = "gen")]
    scenarios: Option<PathBuf>,
    /// Generator spec, e.g. "count=20,n=4,u=0.75,procs=1,mode=edf,periods=2..50,ct=5".
    #[arg(long)]
    gen: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Repetitions per scenario (generated scenarios vary their seed).
    #[arg(long, default_value = "1")]
    reps: usize,
    /// Master seed for the whole batch.
    #[arg(long, default_value = "0")]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of tasks.
    #[arg(long)]
    tasks: usize,
    /// Target total utilization.
    #[arg(long)]
    utilization: f64,
    /// Period range, inclusive, as LO..HI.
    #[arg(long, default_value = "2..50")]
    periods: String,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Scenario file to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "generated")]
    name: String,
    #[arg(long, default_value = "1")]
    procs: u32,
    #[arg(long, value_enum, default_value = "edf")]
    mode: ModeArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn scenario_error_code(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Io { .. } => 3,
        _ => 2,
    }
}

fn load(path: &PathBuf) -> Result<Scenario, ExitCode> {
    match load_scenario(path) {
        Ok(loaded) => {
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            Ok(loaded.scenario)
        }
        Err(e) => {
            let code = scenario_error_code(&e);
            Err(fail(e, code))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), ExitCode> {
    let mut scenario = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(until) = args.until {
        scenario.horizon = Some(until);
    }
    let trace = engine::run(&scenario).map_err(|e| {
        let code = scenario_error_code(&e);
        fail(e, code)
    })?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| fail(format!("{}: {e}", args.out.display()), 3))?;
    let format = match args.format {
        FormatArg::Jsonl => TraceFormat::Jsonl,
        FormatArg::Csv => TraceFormat::Csv,
    };
    let trace_name = format!("{}.trace.{}", scenario.name, format.extension());
    let trace_path = args.out.join(&trace_name);
    emit_trace(&trace, &trace_path, format).map_err(|e| fail(e, 3))?;
    let gantt_path = args.out.join(format!("{}.gantt.csv", scenario.name));
    emit_gantt(&trace, &gantt_path).map_err(|e| fail(e, 3))?;

    let report = build_report(&scenario, &trace, Some(trace_name));
    match args.report {
        ReportArg::Text => print!("{}", report.to_text()),
        ReportArg::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), ExitCode> {
    let scenario = load(&args.scenario)?;
    let v = verdicts(&scenario);
    match args.trace {
        Some(trace_path) => {
            let trace = parse_trace_jsonl(&trace_path).map_err(|e| {
                let code = scenario_error_code(&e);
                fail(e, code)
            })?;
            let report = build_report(&scenario, &trace, Some(trace_path.display().to_string()));
            match args.report {
                ReportArg::Text => print!("{}", report.to_text()),
                ReportArg::Json => println!("{}", report.to_json()),
            }
        }
        None => match args.report {
            ReportArg::Text => {
                println!("scenario = {}", scenario.name);
                println!("total_utilization = {:.6}", v.total_utilization);
                match v.hyperperiod {
                    Some(h) => println!("hyperperiod = {h}"),
                    None => println!("hyperperiod = none"),
                }
                match v.ll_bound {
                    Some(b) => println!("ll_bound = {b:.6}"),
                    None => println!("ll_bound = none"),
                }
                match v.rm_schedulable {
                    Some(supersched_core::metrics::RmVerdict::Yes) => {
                        println!("rm_schedulable = yes")
                    }
                    Some(supersched_core::metrics::RmVerdict::Unknown) => {
                        println!("rm_schedulable = unknown")
                    }
                    None => println!("rm_schedulable = none"),
                }
                println!("edf_feasible = {}", v.edf_feasible);
                println!("overloaded = {}", v.overloaded);
            }
            ReportArg::Json => {
                println!(
                    "{}",
                    serde_json_string(&v).map_err(|e| fail(e, 3))?
                );
            }
        },
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string_pretty(v).map_err(|e| e.to_string())
}

fn parse_gen_spec(spec: &str) -> Result<GenSpec, String> {
    let mut out = GenSpec::default();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in gen spec, got {part:?}"))?;
        match key.trim() {
            "count" => out.count = value.parse().map_err(|_| bad(key, value))?,
            "n" => out.n_tasks = value.parse().map_err(|_| bad(key, value))?,
            "u" => out.target_u = value.parse().map_err(|_| bad(key, value))?,
            "procs" => out.procs = value.parse().map_err(|_| bad(key, value))?,
            "ct" => out.ct_wcet = Some(value.parse().map_err(|_| bad(key, value))?),
            "mode" => {
                out.mode = match value.trim() {
                    "hybrid" => SchedMode::Hybrid,
                    "edf" => SchedMode::Edf,
                    "rm" => SchedMode::Rm,
                    other => return Err(format!("unknown mode {other:?}")),
                }
            }
            "periods" => {
                let (lo, hi) = parse_period_range(value)?;
                out.period_lo = lo;
                out.period_hi = hi;
            }
            other => return Err(format!("unknown gen-spec key {other:?}")),
        }
    }
    Ok(out)
}

fn bad(key: &str, value: &str) -> String {
    format!("invalid value {value:?} for {key}")
}

fn parse_period_range(s: &str) -> Result<(u64, u64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let lo = lo.trim().parse().map_err(|_| bad("periods", s))?;
    let hi = hi.trim().parse().map_err(|_| bad("periods", s))?;
    Ok((lo, hi))
}

fn cmd_batch(args: BatchArgs) -> Result<(), ExitCode> {
    let source = match (&args.scenarios, &args.gen) {
        (Some(dir), None) => BatchSource::Dir(dir.clone()),
        (None, Some(spec)) => {
            BatchSource::Generated(parse_gen_spec(spec).map_err(|e| fail(e, 2))?)
        }
        _ => return Err(fail("exactly one of --scenarios or --gen is required", 2)),
    };
    let summary = run_batch(&source, &args.out, args.reps, args.seed).map_err(|e| {
        let code = scenario_error_code(&e);
        fail(e, code)
    })?;
    println!(
        "batch complete: {} runs, {} failures, aggregate at {}",
        summary.rows.len(),
        summary.failures.len(),
        summary.aggregate_path.display()
    );
    for (name, rep, error) in &summary.failures {
        eprintln!("warning: {name} rep {rep} failed: {error}");
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), ExitCode> {
    let (lo, hi) = parse_period_range(&args.periods).map_err(|e| fail(e, 2))?;
    let ts = generate_taskset(args.tasks, args.utilization, lo, hi, args.seed)
        .map_err(|e| fail(e, 2))?;
    let scenario = Scenario {
        name: args.name,
        seed: args.seed,
        mode: args.mode.into(),
        task_set: ts,
        proc_count: args.procs,
        ..Scenario::default()
    };
    let text = scenario.to_canonical_text();
    match args.out {
        Some(path) => {
            std::fs::write(&path, text)
                .map_err(|e| fail(format!("{}: {e}", path.display()), 3))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
