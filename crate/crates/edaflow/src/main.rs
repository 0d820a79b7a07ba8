//! Command-line front end: one binary exposing the whole pipeline —
//! validate and run flow jobs, explore parameters, train and query the
//! runtime predictor, allocate machines under deadlines, simulate
//! clusters, and inspect stored runs.
//!
//! Exit codes are stable: 0 success, 1 validation or incomplete spec,
//! 2 infeasible allocation, 3 run completed with failed tasks, 4 I/O or
//! format error. Every command prints a human-readable summary followed
//! by the full JSON report, so standard output carries every number the
//! JSON artifacts do.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use edaflow::adapter::MockBackend;
use edaflow::allocator::{mckp_allocate, stage_cost, AllocError, AllocationPlan, ConfigOption, PriceList, StageOptions};
use edaflow::cluster::{load_cluster, simulate, ClusterError, ContainerRequest, Node};
use edaflow::dse::{load_fault_rules, mock_parameter_space, run_dse, write_trials_csv, DseError, DseReport, FaultRule, MockFlowEvaluator, Strategy};
use edaflow::flow::{improvement_percent, validate_job_spec, FlowError, StageKind, ValidationOutcome};
use edaflow::orchestrator::{
    execute, plan, ExecutionContext, HistoryFilter, ModelRuntimeSource, MockRuntimeSource,
    OrchestratorError, PlanMode, RunReport, RunStore, RuntimeSource, TableRuntimeSource, TaskStatus,
};
use edaflow::predictor::{
    generate_synthetic_dataset_with_noise, load_model, load_samples_csv, predict, save_model,
    train, PredictError,
};

/// Stdout writes that tolerate a closed pipe (`edaflow ... | head`):
/// a failed write ends the output quietly instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Environment variable naming the default price-list file, used when
/// `--prices` is not given.
const PRICES_ENV: &str = "EDAFLOW_PRICES";

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_FAILED_TASKS: u8 = 3;
const EXIT_FORMAT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "edaflow",
    version,
    about = "Deterministic automation for IC backend design flows",
    after_help = "Exit codes: 0 success, 1 validation/incomplete spec, 2 infeasible \
                  allocation, 3 run completed with failed tasks, 4 I/O or format error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a job file, plan it, execute it, and store a replayable run.
    RunFlow(RunFlowArgs),
    /// Choose the cheapest machine configuration per stage under a deadline.
    Allocate(AllocateArgs),
    /// Train the stage-runtime model and report its holdout error.
    PredictTrain(PredictTrainArgs),
    /// Predict one stage runtime with a trained model.
    Predict(PredictArgs),
    /// Explore flow parameters against the mock flow and report the best.
    Dse(DseArgs),
    /// Simulate containerized stage tasks on a multi-node cluster.
    Simulate(SimulateArgs),
    /// Show the current state of a stored run.
    Status(StatusArgs),
    /// List stored runs, optionally filtered by design and date.
    History(HistoryArgs),
}

#[derive(Args)]
struct RunFlowArgs {
    /// Job specification JSON file.
    #[arg(long)]
    job: PathBuf,
    /// Plan mode: flow | dse | allocate.
    #[arg(long, default_value = "flow")]
    mode: String,
    /// Completion deadline in seconds (required by mode `allocate`).
    #[arg(long)]
    deadline: Option<f64>,
    /// Seed for every stochastic component of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run-store directory; a fresh run id is always allocated inside it.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Measured stage-runtime table (stage -> vcpus -> seconds) used for
    /// predictions instead of the mock model.
    #[arg(long)]
    runtimes: Option<PathBuf>,
    /// Trained model file used for predictions instead of the mock model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Price list JSON (falls back to $EDAFLOW_PRICES).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Prompt on stdin for missing essential job fields instead of
    /// failing fast.
    #[arg(long)]
    interactive: bool,
    /// Trial budget for mode `dse`.
    #[arg(long, default_value_t = 32)]
    budget: usize,
    /// Exploration strategy for mode `dse`: random | anneal.
    #[arg(long, default_value = "random")]
    strategy: String,
    /// Fault-remediation rule file for mode `dse`.
    #[arg(long)]
    faults: Option<PathBuf>,
}

#[derive(Args)]
struct AllocateArgs {
    /// Stage-runtime table JSON: {"placement": {"1": 346.0, ...}, ...}.
    #[arg(long)]
    options: PathBuf,
    /// Deadline in seconds the chosen configurations must meet.
    #[arg(long)]
    budget: f64,
    /// Price list JSON (falls back to $EDAFLOW_PRICES).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Also write the chosen plan to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictTrainArgs {
    /// `synthetic` or a dataset CSV path.
    #[arg(long, default_value = "synthetic")]
    data: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample count when --data synthetic.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Multiplicative noise amplitude when --data synthetic.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Write the trained model to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Design size in standard cells.
    #[arg(long)]
    cells: u64,
    /// Stage name (floorplan|placement|cts|routing|sta).
    #[arg(long)]
    stage: String,
    #[arg(long)]
    vcpus: u32,
}

#[derive(Args)]
struct DseArgs {
    #[arg(long, default_value_t = 64)]
    budget: usize,
    /// random | anneal.
    #[arg(long, default_value = "random")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Design size driving the mock flow under exploration.
    #[arg(long, default_value_t = 29_164)]
    cells: u64,
    /// Clock period in nanoseconds for the mock flow.
    #[arg(long, default_value_t = 1.0)]
    clock: f64,
    /// Fault-remediation rule file.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Write the exploration report to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write successful trials as CSV (trial_index,objective).
    #[arg(long)]
    trials_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Cluster topology: `NxC` shorthand (N nodes with C vCPUs each) or
    /// a JSON node-list file.
    #[arg(long)]
    cluster: String,
    /// Container request list JSON file.
    #[arg(long)]
    tasks: PathBuf,
    /// Write the simulation result to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatusArgs {
    /// Run id, e.g. run-0001.
    run_id: String,
    /// Run-store directory.
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
}

#[derive(Args)]
struct HistoryArgs {
    /// Run-store directory.
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    /// Keep only runs of this design.
    #[arg(long)]
    design: Option<String>,
    /// Keep only runs started at or after this date (YYYY-MM-DD or RFC 3339).
    #[arg(long)]
    from: Option<String>,
    /// Keep only runs started at or before this date (YYYY-MM-DD or RFC 3339).
    #[arg(long)]
    to: Option<String>,
}

struct CliError {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> CliError {
    CliError { code, message: message.into() }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = write!(std::io::stdout(), "{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_FORMAT);
        }
    };
    let result = match cli.command {
        Command::RunFlow(args) => cmd_run_flow(args),
        Command::Allocate(args) => cmd_allocate(args),
        Command::PredictTrain(args) => cmd_predict_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Dse(args) => cmd_dse(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Status(args) => cmd_status(args),
        Command::History(args) => cmd_history(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

// ---------------------------------------------------------------------
// Shared helpers.
// ---------------------------------------------------------------------

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))
}

fn open_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| fail(EXIT_FORMAT, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

/// Seconds with no trailing zeros: whole seconds print bare.
fn fmt_s(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x}")
    }
}

/// Resolve the price list from the flag or `$EDAFLOW_PRICES`.
fn resolve_prices(flag: &Option<PathBuf>, required: bool) -> Result<Option<PriceList>, CliError> {
    let path = flag
        .clone()
        .or_else(|| std::env::var_os(PRICES_ENV).map(PathBuf::from));
    let Some(path) = path else {
        if required {
            return Err(fail(
                EXIT_FORMAT,
                format!("no price list: pass --prices or set ${PRICES_ENV}"),
            ));
        }
        return Ok(None);
    };
    let prices: PriceList = serde_json::from_str(&read_text(&path)?)
        .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))?;
    prices
        .validate()
        .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))?;
    Ok(Some(prices))
}

fn orch_err(e: OrchestratorError) -> CliError {
    match &e {
        OrchestratorError::UnknownRun(_)
        | OrchestratorError::DeadlineRequired
        | OrchestratorError::EmptyPlan => fail(EXIT_VALIDATION, e.to_string()),
        _ => fail(EXIT_FORMAT, e.to_string()),
    }
}

fn predict_err(e: PredictError) -> CliError {
    match &e {
        PredictError::ModelFormat(_) | PredictError::MalformedDataset(_) | PredictError::Io(_) => {
            fail(EXIT_FORMAT, e.to_string())
        }
        _ => fail(EXIT_VALIDATION, e.to_string()),
    }
}

fn dse_err(e: DseError) -> CliError {
    match &e {
        DseError::InvalidSpace(_) | DseError::InvalidFaultRule(_) | DseError::InvalidBudget => {
            fail(EXIT_VALIDATION, e.to_string())
        }
        DseError::MalformedRuleFile(_) | DseError::Io(_) => fail(EXIT_FORMAT, e.to_string()),
        DseError::AllTrialsFailed | DseError::UnremediableFault { .. } => {
            fail(EXIT_FAILED_TASKS, e.to_string())
        }
    }
}

fn load_rules(path: &Option<PathBuf>) -> Result<Vec<FaultRule>, CliError> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => load_fault_rules(open_file(p)?)
            .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", p.display()))),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, CliError> {
    s.parse::<Strategy>().map_err(|e| fail(EXIT_FORMAT, e))
}

// ---------------------------------------------------------------------
// run-flow
// ---------------------------------------------------------------------

fn cmd_run_flow(args: RunFlowArgs) -> CliResult {
    let raw: Value = serde_json::from_str(&read_text(&args.job)?)
        .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", args.job.display())))?;
    let job = match validate_job_spec(&raw).map_err(flow_err)? {
        ValidationOutcome::Complete(job) => job,
        ValidationOutcome::Incomplete(report) => {
            if args.interactive && !report.missing.is_empty() {
                let filled = prompt_missing(raw, &report.missing)?;
                match validate_job_spec(&filled).map_err(flow_err)? {
                    ValidationOutcome::Complete(job) => job,
                    ValidationOutcome::Incomplete(report) => {
                        out!("{report}");
                        return Err(fail(
                            EXIT_VALIDATION,
                            "job spec is still incomplete after prompts",
                        ));
                    }
                }
            } else {
                out!("{report}");
                return Err(fail(EXIT_VALIDATION, "job spec is incomplete"));
            }
        }
    };

    let mode: PlanMode = args.mode.parse().map_err(|e: String| fail(EXIT_FORMAT, e))?;
    let tasks = plan(&job, mode, args.deadline).map_err(orch_err)?;

    let source: Box<dyn RuntimeSource> = if let Some(path) = &args.runtimes {
        Box::new(
            TableRuntimeSource::load(open_file(path)?)
                .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))?,
        )
    } else if let Some(path) = &args.model {
        Box::new(ModelRuntimeSource { model: load_model(path).map_err(predict_err)? })
    } else {
        Box::new(MockRuntimeSource)
    };
    let prices = resolve_prices(&args.prices, false)?;
    let rules = load_rules(&args.faults)?;

    let mut ctx = ExecutionContext::new(&MockBackend, source.as_ref());
    ctx.prices = prices.as_ref();
    ctx.fault_rules = &rules;
    ctx.seed = args.seed;
    ctx.dse_budget = args.budget;
    ctx.dse_strategy = parse_strategy(&args.strategy)?;

    let store = RunStore::open(&args.out).map_err(orch_err)?;
    let run_id = store.allocate_run_id().map_err(orch_err)?;
    store.persist_plan(&run_id, &job, &tasks).map_err(orch_err)?;
    let mut writer = store.event_writer(&run_id).map_err(orch_err)?;
    let outcome = execute(&job, &tasks, &ctx, &mut |e| writer.observe(e));
    store.finalize(&run_id, &job, &outcome).map_err(orch_err)?;

    print_run_summary(&run_id, &store.run_dir(&run_id), &outcome.report);

    if let Some(detail) = &outcome.report.allocation_error {
        if detail.contains("fastest possible flow takes") {
            return Err(fail(EXIT_INFEASIBLE, detail.clone()));
        }
    }
    if outcome.tasks.iter().any(|t| t.status == TaskStatus::Failed) {
        return Err(fail(EXIT_FAILED_TASKS, "run completed with failed tasks"));
    }
    Ok(())
}

fn flow_err(e: FlowError) -> CliError {
    fail(EXIT_FORMAT, e.to_string())
}

fn print_run_summary(run_id: &str, dir: &Path, report: &RunReport) {
    out!("run {run_id} stored in {}", dir.display());
    out!("design {}  mode {}  seed {}", report.design, report.mode, report.seed);
    out!("tasks:");
    for t in &report.tasks {
        let note = if t.note.is_empty() { String::new() } else { format!("  ({})", t.note) };
        out!("  {:<22} {}{note}", t.id, t.status.name());
    }
    for (stage, row) in &report.predictions {
        let cells: Vec<String> =
            row.iter().map(|(v, r)| format!("{v} vCPU {} s", fmt_s(*r))).collect();
        out!("predicted {stage}: {}", cells.join(", "));
    }
    if let Some(plan) = &report.allocation {
        print_allocation(plan, None);
    }
    if let Some(detail) = &report.allocation_error {
        out!("allocation failed: {detail}");
    }
    if let Some(dse) = &report.dse {
        print_dse_summary(dse);
    }
    if let Some(m) = &report.final_metrics {
        out!(
            "final metrics: delay {} ns, power {} mW, area {} um2",
            m.cp_delay_ns, m.power_mw, m.area_um2
        );
    }
    out!("\nreport (JSON):\n{}", pretty(report));
}

/// Prompt on stderr, read stdin, and graft each answer into the raw job
/// document at its dotted path.
fn prompt_missing(mut raw: Value, missing: &[String]) -> Result<Value, CliError> {
    let stdin = std::io::stdin();
    for path in missing {
        eprint!("enter {path}: ");
        std::io::stderr().flush().ok();
        let mut line = String::new();
        stdin
            .lock()
            .read_line(&mut line)
            .map_err(|e| fail(EXIT_FORMAT, format!("reading stdin: {e}")))?;
        let input = line.trim();
        if input.is_empty() {
            return Err(fail(EXIT_VALIDATION, format!("no value provided for {path}")));
        }
        let value = parse_prompt_value(path, input);
        set_dotted(&mut raw, path, value)?;
    }
    Ok(raw)
}

fn parse_prompt_value(path: &str, input: &str) -> Value {
    if path == "stages" {
        return Value::Array(
            input.split(',').map(|s| Value::String(s.trim().to_string())).collect(),
        );
    }
    serde_json::from_str(input).unwrap_or_else(|_| Value::String(input.to_string()))
}

fn set_dotted(root: &mut Value, path: &str, value: Value) -> CliResult {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| {
            fail(EXIT_FORMAT, format!("cannot set {path}: {part} is not an object"))
        })?;
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| fail(EXIT_FORMAT, format!("cannot set {path}: parent is not an object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

// ---------------------------------------------------------------------
// allocate
// ---------------------------------------------------------------------

fn cmd_allocate(args: AllocateArgs) -> CliResult {
    let table = TableRuntimeSource::load(open_file(&args.options)?)
        .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", args.options.display())))?;
    let prices = resolve_prices(&args.prices, true)?.expect("required prices resolve");

    let mut stages = Vec::new();
    for (stage, row) in &table.table {
        let mut options = Vec::new();
        for (&vcpus, &runtime_s) in row {
            let rate = prices.rate_for(vcpus).ok_or_else(|| {
                fail(EXIT_FORMAT, format!("price list has no rate for {vcpus} vCPUs"))
            })?;
            options.push(ConfigOption { vcpus, runtime_s, cost: stage_cost(rate, runtime_s) });
        }
        stages.push(StageOptions { stage: *stage, options });
    }

    match mckp_allocate(&stages, args.budget) {
        Ok(plan) => {
            print_allocation(&plan, Some(&prices.currency));
            out!("\nplan (JSON):\n{}", pretty(&plan));
            if let Some(path) = &args.out {
                write_json_file(path, &plan)?;
                out!("plan written to {}", path.display());
            }
            Ok(())
        }
        Err(e @ AllocError::Infeasible { .. }) => Err(fail(EXIT_INFEASIBLE, e.to_string())),
        Err(e) => Err(fail(EXIT_FORMAT, e.to_string())),
    }
}

fn print_allocation(plan: &AllocationPlan, currency: Option<&str>) {
    for c in &plan.choices {
        out!(
            "  {:<10} {} vCPUs  {} s  cost {}",
            c.stage.to_string(),
            c.vcpus,
            fmt_s(c.runtime_s),
            c.cost
        );
    }
    let vcpus: Vec<String> = plan.vcpus().iter().map(|v| v.to_string()).collect();
    out!(
        "allocation: ({})  total time {} s  total cost {}{}  objective {}",
        vcpus.join(", "),
        fmt_s(plan.total_time_s),
        plan.total_cost,
        currency.map(|c| format!(" {c}")).unwrap_or_default(),
        plan.objective_value
    );
}

// ---------------------------------------------------------------------
// predict-train / predict
// ---------------------------------------------------------------------

fn cmd_predict_train(args: PredictTrainArgs) -> CliResult {
    let samples = if args.data == "synthetic" {
        generate_synthetic_dataset_with_noise(args.seed, args.samples, args.noise)
    } else {
        load_samples_csv(open_file(Path::new(&args.data))?).map_err(predict_err)?
    };
    let model = train(&samples, args.seed).map_err(predict_err)?;
    let summary = &model.training_summary;
    out!(
        "trained on {} samples ({} train / {} holdout), seed {}",
        samples.len(),
        summary.n_train,
        summary.n_holdout,
        args.seed
    );
    out!("holdout MAPE: {}%", summary.mean_abs_pct_error_on_holdout);
    out!("\ntraining summary (JSON):\n{}", pretty(summary));
    if let Some(path) = &args.out {
        save_model(path, &model).map_err(predict_err)?;
        out!("model written to {}", path.display());
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult {
    let model = load_model(&args.model).map_err(predict_err)?;
    let stage = StageKind::parse(&args.stage)
        .ok_or_else(|| fail(EXIT_VALIDATION, format!("unknown stage `{}`", args.stage)))?;
    let runtime_s = predict(&model, args.cells, stage, args.vcpus).map_err(predict_err)?;
    out!(
        "predicted {stage} runtime for {} cells on {} vCPUs: {runtime_s} s",
        args.cells, args.vcpus
    );
    let report = serde_json::json!({
        "stage": stage,
        "cell_count": args.cells,
        "vcpus": args.vcpus,
        "runtime_s": runtime_s,
    });
    out!("\nprediction (JSON):\n{}", pretty(&report));
    Ok(())
}

// ---------------------------------------------------------------------
// dse
// ---------------------------------------------------------------------

fn cmd_dse(args: DseArgs) -> CliResult {
    let rules = load_rules(&args.faults)?;
    let strategy = parse_strategy(&args.strategy)?;
    let evaluator = MockFlowEvaluator { cell_count: args.cells, clock_period_ns: args.clock };
    let report = run_dse(
        &mock_parameter_space(),
        &evaluator,
        args.budget,
        strategy,
        args.seed,
        &rules,
    )
    .map_err(dse_err)?;
    print_dse_summary(&report);
    out!("\nexploration report (JSON):\n{}", pretty(&report));
    if let Some(path) = &args.out {
        write_json_file(path, &report)?;
        out!("report written to {}", path.display());
    }
    if let Some(path) = &args.trials_csv {
        let file = fs::File::create(path)
            .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", path.display())))?;
        write_trials_csv(file, &report).map_err(dse_err)?;
        out!("trials written to {}", path.display());
    }
    Ok(())
}

fn print_dse_summary(report: &DseReport) {
    out!(
        "exploration: strategy {}  budget {}  seed {}",
        report.strategy, report.budget, report.seed
    );
    let params: Vec<String> = report
        .best_params
        .iter()
        .map(|(k, v)| format!("{k}={}", serde_json::to_string(v).expect("params serialize")))
        .collect();
    out!("best parameters: {}", params.join(", "));
    out!(
        "best metrics: delay {} ns, power {} mW, area {} um2",
        report.best_metrics.cp_delay_ns, report.best_metrics.power_mw, report.best_metrics.area_um2
    );
    out!("best objective (delay*power*area): {}", report.best_objective);
    match report.improvement {
        Some(f) => out!("improvement over defaults: {}%", improvement_percent(f)),
        None => out!("improvement over defaults: n/a (defaults trial faulted)"),
    }
    out!(
        "trials: {}  remediations: {}",
        report.trials.len(),
        report.remediations_applied.len()
    );
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let nodes = parse_cluster_arg(&args.cluster)?;
    let requests: Vec<ContainerRequest> = serde_json::from_reader(open_file(&args.tasks)?)
        .map_err(|e| fail(EXIT_FORMAT, format!("{}: {e}", args.tasks.display())))?;
    let result = simulate(&nodes, &requests).map_err(cluster_err)?;
    out!(
        "simulated {} tasks on {} nodes: makespan {} s, {} events",
        requests.len(),
        nodes.len(),
        fmt_s(result.makespan_s),
        result.events.len()
    );
    out!("\nsimulation result (JSON):\n{}", pretty(&result));
    if let Some(path) = &args.out {
        write_json_file(path, &result)?;
        out!("result written to {}", path.display());
    }
    Ok(())
}

/// `NxC` builds N identical nodes of C vCPUs; anything else is a path to
/// a JSON node list.
fn parse_cluster_arg(spec: &str) -> Result<Vec<Node>, CliError> {
    if let Some((n, c)) = spec.split_once('x') {
        if let (Ok(n), Ok(c)) = (n.parse::<u32>(), c.parse::<u32>()) {
            if n >= 1 && c >= 1 {
                return Ok((1..=n).map(|i| Node::new(format!("node-{i}"), c)).collect());
            }
        }
    }
    load_cluster(open_file(Path::new(spec))?)
        .map_err(|e| fail(EXIT_FORMAT, format!("{spec}: {e}")))
}

fn cluster_err(e: ClusterError) -> CliError {
    match &e {
        ClusterError::MalformedTopology(_) => fail(EXIT_FORMAT, e.to_string()),
        _ => fail(EXIT_VALIDATION, e.to_string()),
    }
}

// ---------------------------------------------------------------------
// status / history
// ---------------------------------------------------------------------

fn cmd_status(args: StatusArgs) -> CliResult {
    let store = RunStore::open(&args.runs).map_err(orch_err)?;
    let status = store.status(&args.run_id).map_err(orch_err)?;
    out!("run {}", status.run_id);
    let counts: Vec<String> =
        status.counts.iter().map(|(name, n)| format!("{name} {n}")).collect();
    out!("task counts: {}", counts.join(", "));
    match &status.latest_event {
        Some(e) => out!(
            "latest event: seq {} at {} for {}",
            e.seq, e.wall_time, e.task_id
        ),
        None => out!("latest event: none"),
    }
    out!("elapsed: {} s", status.elapsed_s);
    out!("\nstatus (JSON):\n{}", pretty(&status));
    Ok(())
}

fn cmd_history(args: HistoryArgs) -> CliResult {
    let store = RunStore::open(&args.runs).map_err(orch_err)?;
    let filter = HistoryFilter {
        design: args.design.clone(),
        from: args.from.as_deref().map(|s| parse_date(s, false)).transpose()?,
        to: args.to.as_deref().map(|s| parse_date(s, true)).transpose()?,
    };
    let summaries = store.history(&filter).map_err(orch_err)?;
    if summaries.is_empty() {
        out!("no matching runs");
    }
    for s in &summaries {
        out!(
            "{}  {}  mode {}  started {}  tasks {} (done {}, failed {}, skipped {})",
            s.run_id, s.design, s.mode, s.started_at, s.tasks_total, s.tasks_done,
            s.tasks_failed, s.tasks_skipped
        );
    }
    out!("\nhistory (JSON):\n{}", pretty(&summaries));
    Ok(())
}

/// Accept RFC 3339 or bare `YYYY-MM-DD`; bare dates expand to the start
/// (or, for `--to`, the end) of that UTC day.
fn parse_date(s: &str, end_of_day: bool) -> Result<chrono::DateTime<chrono::Utc>, CliError> {
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&chrono::Utc));
    }
    let date = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| fail(EXIT_FORMAT, format!("invalid date `{s}`: {e}")))?;
    let time = if end_of_day {
        date.and_hms_micro_opt(23, 59, 59, 999_999)
    } else {
        date.and_hms_opt(0, 0, 0)
    }
    .expect("valid wall-clock time");
    Ok(chrono::DateTime::from_naive_utc_and_offset(time, chrono::Utc))
}
