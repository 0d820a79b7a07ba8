//! Turns a validated job into a task list, executes it across the other
//! modules, and persists a replayable record of every run.
//!
//! [`plan`] maps a job and a [`PlanMode`] to a deterministic [`Task`]
//! list whose `inputs` encode the execution order. [`execute`] walks that
//! list sequentially, emitting one [`EventRecord`] per status transition
//! through an observer callback, and aggregates stage results, the
//! allocation plan, and the exploration report into a [`RunReport`].
//! Failures never abort the run: a failed task marks its dependents
//! `Skipped` and the report carries the partial results.
//!
//! [`RunStore`] owns the on-disk layout: one directory per run holding
//! `jobspec.json`, `tasks.json`, `events.jsonl`, and `report.json`, plus
//! an append-only `index.jsonl` for history queries. The report
//! deliberately contains no run id and no wall-clock fields, so replaying
//! a run with equal seeds reproduces `report.json` byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::adapter::{render_script, run_stage, MachineConfig, StageOutcome, StageResult, ToolBackend};
use crate::allocator::{mckp_allocate, stage_cost, AllocError, AllocationPlan, ConfigOption, PriceList, StageOptions};
use crate::dse::{run_dse, DseReport, EvalOutcome, FaultRule, FlowEvaluator, Strategy};
use crate::flow::{DesignDescriptor, JobSpec, ParamValue, PpaMetrics, StageKind};
use crate::predictor::{predict, train, generate_synthetic_dataset, TrainedModel};

/// vCPU tiers assumed when no price list narrows them down.
pub const DEFAULT_VCPU_TIERS: [u32; 4] = [1, 2, 4, 8];

/// How a job turns into tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// One `RunStage` task per requested stage, in flow order.
    FlowOnly,
    /// A `RunDse` task first; the stages then run with the best
    /// parameters it found.
    FlowWithDse,
    /// `Predict` per stage, `Allocate` against a deadline, then the
    /// stages annotated with the chosen vCPU counts.
    AllocateThenFlow,
}

impl std::fmt::Display for PlanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanMode::FlowOnly => write!(f, "flow"),
            PlanMode::FlowWithDse => write!(f, "dse"),
            PlanMode::AllocateThenFlow => write!(f, "allocate"),
        }
    }
}

impl std::str::FromStr for PlanMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow" => Ok(PlanMode::FlowOnly),
            "dse" => Ok(PlanMode::FlowWithDse),
            "allocate" => Ok(PlanMode::AllocateThenFlow),
            other => Err(format!("unknown mode `{other}` (expected flow|dse|allocate)")),
        }
    }
}

/// What one task does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Execute one flow stage on the tool backend. `vcpus` is `None`
    /// until an allocation chooses it; stages run single-threaded
    /// otherwise.
    RunStage { stage: StageKind, vcpus: Option<u32> },
    /// Explore flow parameters and hand the best ones to the stages.
    RunDse,
    /// Solve the per-stage configuration choice against a deadline.
    Allocate { deadline_s: f64 },
    /// Estimate the stage's runtime for every purchasable vCPU tier.
    Predict { stage: StageKind },
    /// Fit a runtime model on synthetic data; later `Predict` tasks in
    /// the same run prefer it over the wired runtime source.
    Train { samples: usize },
}

/// Task lifecycle. `Pending → Running → Done | Failed`, plus the terminal
/// `Skipped` for tasks whose inputs did not finish `Done`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Running,
    Done,
    Failed,
    Skipped,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Done | TaskStatus::Failed | TaskStatus::Skipped)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Running => "running",
            TaskStatus::Done => "done",
            TaskStatus::Failed => "failed",
            TaskStatus::Skipped => "skipped",
        }
    }
}

/// One schedulable unit of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    /// Ids of tasks that must be `Done` before this one starts; always
    /// earlier in the list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    pub status: TaskStatus,
    /// Failure or skip explanation, empty otherwise.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Event-stream payload: a status transition or a metrics snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    StatusChange { from: TaskStatus, to: TaskStatus },
    MetricSnapshot { metrics: PpaMetrics },
}

/// One monitor-stream record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Gap-free, strictly increasing from 1 within a run.
    pub seq: u64,
    /// RFC 3339 UTC timestamp (microseconds).
    pub wall_time: String,
    pub task_id: String,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// Final run artifact. Contains no run id and no wall-clock data: two
/// runs of the same job with the same seeds serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub design: String,
    pub mode: PlanMode,
    pub seed: u64,
    /// Terminal status per task, in plan order.
    pub tasks: Vec<TaskSummary>,
    /// Per-stage runtime estimates (stage → vcpus → seconds) gathered by
    /// `Predict` tasks.
    pub predictions: BTreeMap<StageKind, BTreeMap<u32, f64>>,
    pub allocation: Option<AllocationPlan>,
    /// Human-readable reason when the allocation failed.
    pub allocation_error: Option<String>,
    pub dse: Option<DseReport>,
    /// Stage-name → result for every executed stage.
    pub stage_results: BTreeMap<StageKind, StageResult>,
    /// Metrics of the last successful stage, the flow's end state.
    pub final_metrics: Option<PpaMetrics>,
}

/// Task id, kind, and terminal status as embedded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub id: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Everything [`execute`] produces: the report plus the task list with
/// final statuses and the full event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    pub tasks: Vec<Task>,
    pub events: Vec<EventRecord>,
}

/// Orchestration failure modes.
#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("mode `allocate` requires a deadline")]
    DeadlineRequired,
    #[error("plan has no stages to run")]
    EmptyPlan,
    #[error("no run named `{0}` is stored")]
    UnknownRun(String),
    #[error("no runtime available for {stage} at {vcpus} vCPUs: {detail}")]
    RuntimeUnavailable { stage: StageKind, vcpus: u32, detail: String },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Storage(#[from] std::io::Error),
}

/// Where per-stage runtime estimates come from.
pub trait RuntimeSource {
    fn runtime_s(
        &self,
        design: &DesignDescriptor,
        stage: StageKind,
        vcpus: u32,
    ) -> Result<f64, OrchestratorError>;
}

/// Closed-form runtimes from the mock tool model.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRuntimeSource;

impl RuntimeSource for MockRuntimeSource {
    fn runtime_s(
        &self,
        design: &DesignDescriptor,
        stage: StageKind,
        vcpus: u32,
    ) -> Result<f64, OrchestratorError> {
        if stage == StageKind::FullFlow || vcpus == 0 {
            return Err(OrchestratorError::RuntimeUnavailable {
                stage,
                vcpus,
                detail: "mock model covers concrete stages at >= 1 vCPU".into(),
            });
        }
        Ok(crate::adapter::mock_model::runtime_s(stage, design.cell_count, vcpus))
    }
}

/// Measured runtimes from a stage × vcpus lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRuntimeSource {
    pub table: BTreeMap<StageKind, BTreeMap<u32, f64>>,
}

impl TableRuntimeSource {
    /// Parse the JSON form: `{"placement": {"1": 346.0, ...}, ...}`.
    pub fn load<R: std::io::Read>(reader: R) -> Result<Self, OrchestratorError> {
        let table = serde_json::from_reader(reader)
            .map_err(|e| OrchestratorError::Malformed(format!("runtime table: {e}")))?;
        Ok(TableRuntimeSource { table })
    }
}

impl RuntimeSource for TableRuntimeSource {
    fn runtime_s(
        &self,
        _design: &DesignDescriptor,
        stage: StageKind,
        vcpus: u32,
    ) -> Result<f64, OrchestratorError> {
        self.table
            .get(&stage)
            .and_then(|row| row.get(&vcpus))
            .copied()
            .ok_or_else(|| OrchestratorError::RuntimeUnavailable {
                stage,
                vcpus,
                detail: "no such cell in the runtime table".into(),
            })
    }
}

/// Predictions from a trained runtime model.
#[derive(Debug, Clone)]
pub struct ModelRuntimeSource {
    pub model: TrainedModel,
}

impl RuntimeSource for ModelRuntimeSource {
    fn runtime_s(
        &self,
        design: &DesignDescriptor,
        stage: StageKind,
        vcpus: u32,
    ) -> Result<f64, OrchestratorError> {
        predict(&self.model, design.cell_count, stage, vcpus).map_err(|e| {
            OrchestratorError::RuntimeUnavailable { stage, vcpus, detail: e.to_string() }
        })
    }
}

/// Module handles and knobs [`execute`] dispatches against.
pub struct ExecutionContext<'a> {
    pub backend: &'a dyn ToolBackend,
    pub runtime_source: &'a dyn RuntimeSource,
    /// Purchasable vCPU tiers and their hourly rates; required by
    /// `Allocate` tasks (they fail in-band without it).
    pub prices: Option<&'a PriceList>,
    pub fault_rules: &'a [FaultRule],
    pub dse_budget: usize,
    pub dse_strategy: Strategy,
    pub seed: u64,
}

impl<'a> ExecutionContext<'a> {
    pub fn new(backend: &'a dyn ToolBackend, runtime_source: &'a dyn RuntimeSource) -> Self {
        ExecutionContext {
            backend,
            runtime_source,
            prices: None,
            fault_rules: &[],
            dse_budget: 32,
            dse_strategy: Strategy::Random,
            seed: 0,
        }
    }
}

/// Derive the task list for `job` under `mode`.
///
/// The list is deterministic and topologically ordered: every task's
/// inputs precede it. `AllocateThenFlow` requires `deadline_s`.
pub fn plan(
    job: &JobSpec,
    mode: PlanMode,
    deadline_s: Option<f64>,
) -> Result<Vec<Task>, OrchestratorError> {
    if job.stages.is_empty() {
        return Err(OrchestratorError::EmptyPlan);
    }
    let mut tasks = Vec::new();
    let pending = |id: String, kind: TaskKind, inputs: Vec<String>| Task {
        id,
        kind,
        inputs,
        status: TaskStatus::Pending,
        note: String::new(),
    };
    match mode {
        PlanMode::FlowOnly => {
            let mut prev: Option<String> = None;
            for &stage in &job.stages {
                let id = format!("stage-{stage}");
                let inputs = prev.take().into_iter().collect();
                tasks.push(pending(id.clone(), TaskKind::RunStage { stage, vcpus: None }, inputs));
                prev = Some(id);
            }
        }
        PlanMode::FlowWithDse => {
            tasks.push(pending("dse".into(), TaskKind::RunDse, Vec::new()));
            let mut prev = "dse".to_string();
            for &stage in &job.stages {
                let id = format!("stage-{stage}");
                tasks.push(pending(
                    id.clone(),
                    TaskKind::RunStage { stage, vcpus: None },
                    vec![prev.clone()],
                ));
                prev = id;
            }
        }
        PlanMode::AllocateThenFlow => {
            let deadline_s = deadline_s.ok_or(OrchestratorError::DeadlineRequired)?;
            let mut predict_ids = Vec::new();
            for &stage in &job.stages {
                let id = format!("predict-{stage}");
                tasks.push(pending(id.clone(), TaskKind::Predict { stage }, Vec::new()));
                predict_ids.push(id);
            }
            tasks.push(pending("allocate".into(), TaskKind::Allocate { deadline_s }, predict_ids));
            let mut prev = "allocate".to_string();
            for &stage in &job.stages {
                let id = format!("stage-{stage}");
                tasks.push(pending(
                    id.clone(),
                    TaskKind::RunStage { stage, vcpus: None },
                    vec![prev.clone()],
                ));
                prev = id;
            }
        }
    }
    Ok(tasks)
}

/// Evaluates one parameter assignment by running every stage of the job
/// through the wired backend and reporting the final stage's metrics.
struct StagedFlowEvaluator<'a> {
    backend: &'a dyn ToolBackend,
    job: &'a JobSpec,
}

impl FlowEvaluator for StagedFlowEvaluator<'_> {
    fn evaluate(&self, params: &BTreeMap<String, ParamValue>) -> EvalOutcome {
        let mut last_metrics: Option<PpaMetrics> = None;
        for &stage in &self.job.stages {
            let script = match render_script(self.job.tool, stage, self.job, params) {
                Ok(s) => s,
                Err(e) => {
                    return EvalOutcome::Fault { fault_code: "RENDER".into(), message: e.to_string() }
                }
            };
            let result = match run_stage(self.backend, &script, &MachineConfig::new(1)) {
                Ok(r) => r,
                Err(e) => {
                    return EvalOutcome::Fault { fault_code: "BACKEND".into(), message: e.to_string() }
                }
            };
            match result.outcome {
                StageOutcome::Success => last_metrics = result.metrics.or(last_metrics),
                StageOutcome::Failure { fault_code, message } => {
                    return EvalOutcome::Fault { fault_code, message }
                }
            }
        }
        match last_metrics {
            Some(m) => EvalOutcome::Metrics(m),
            None => EvalOutcome::Fault {
                fault_code: "NO_METRICS".into(),
                message: "flow produced no metrics".into(),
            },
        }
    }
}

struct EventSink<'a> {
    events: Vec<EventRecord>,
    observer: &'a mut dyn FnMut(&EventRecord),
}

impl EventSink<'_> {
    fn emit(&mut self, task_id: &str, payload: EventPayload) {
        let record = EventRecord {
            seq: self.events.len() as u64 + 1,
            wall_time: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
            task_id: task_id.to_string(),
            payload,
        };
        (self.observer)(&record);
        self.events.push(record);
    }

    fn transition(&mut self, task: &mut Task, to: TaskStatus) {
        let from = task.status;
        task.status = to;
        self.emit(&task.id.clone(), EventPayload::StatusChange { from, to });
    }
}

/// Run a planned task list to completion.
///
/// Tasks execute sequentially in list order (which respects their
/// dependency edges); every status transition is passed to `observer`
/// and collected. A failed task never stops the run: tasks whose inputs
/// did not end `Done` become `Skipped`, and the report carries whatever
/// results exist.
pub fn execute(
    job: &JobSpec,
    tasks: &[Task],
    ctx: &ExecutionContext,
    observer: &mut dyn FnMut(&EventRecord),
) -> RunOutcome {
    let mut tasks: Vec<Task> = tasks.to_vec();
    let mut sink = EventSink { events: Vec::new(), observer };

    let mut predictions: BTreeMap<StageKind, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut allocation: Option<AllocationPlan> = None;
    let mut allocation_error: Option<String> = None;
    let mut dse_report: Option<DseReport> = None;
    let mut stage_results: BTreeMap<StageKind, StageResult> = BTreeMap::new();
    let mut final_metrics: Option<PpaMetrics> = None;
    let mut trained: Option<TrainedModel> = None;
    let mut mode_guess = PlanMode::FlowOnly;

    for i in 0..tasks.len() {
        // Dependency gate: inputs reference earlier tasks, all of which
        // already hold terminal statuses.
        let unmet: Vec<String> = tasks[i]
            .inputs
            .iter()
            .filter(|dep| {
                !tasks[..i]
                    .iter()
                    .any(|t| &&t.id == dep && t.status == TaskStatus::Done)
            })
            .cloned()
            .collect();
        if !unmet.is_empty() {
            tasks[i].note = format!("inputs not done: {}", unmet.join(", "));
            let mut task = tasks[i].clone();
            sink.transition(&mut task, TaskStatus::Skipped);
            tasks[i] = task;
            continue;
        }

        let mut task = tasks[i].clone();
        sink.transition(&mut task, TaskStatus::Running);

        let verdict: Result<(), String> = match task.kind.clone() {
            TaskKind::Train { samples } => {
                let data = generate_synthetic_dataset(ctx.seed, samples);
                match train(&data, ctx.seed) {
                    Ok(model) => {
                        trained = Some(model);
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            TaskKind::Predict { stage } => {
                let tiers: Vec<u32> = match ctx.prices {
                    Some(p) => p.entries.iter().map(|e| e.vcpus).collect(),
                    None => DEFAULT_VCPU_TIERS.to_vec(),
                };
                let mut row = BTreeMap::new();
                let mut failure = None;
                for vcpus in tiers {
                    let estimated = match &trained {
                        Some(model) => predict(model, job.design.cell_count, stage, vcpus)
                            .map_err(|e| e.to_string()),
                        None => ctx
                            .runtime_source
                            .runtime_s(&job.design, stage, vcpus)
                            .map_err(|e| e.to_string()),
                    };
                    match estimated {
                        Ok(r) => {
                            row.insert(vcpus, r);
                        }
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    }
                }
                match failure {
                    None => {
                        predictions.insert(stage, row);
                        Ok(())
                    }
                    Some(e) => Err(e),
                }
            }
            TaskKind::Allocate { deadline_s } => {
                mode_guess = PlanMode::AllocateThenFlow;
                match ctx.prices {
                    None => Err("no price list wired for allocation".into()),
                    Some(prices) => match build_stage_options(job, &predictions, prices) {
                        Err(e) => Err(e),
                        Ok(options) => match mckp_allocate(&options, deadline_s) {
                            Ok(plan) => {
                                // Annotate the pending stage tasks with the
                                // chosen vCPU counts.
                                for choice in &plan.choices {
                                    for later in tasks.iter_mut().skip(i + 1) {
                                        if let TaskKind::RunStage { stage, vcpus } = &mut later.kind
                                        {
                                            if *stage == choice.stage {
                                                *vcpus = Some(choice.vcpus);
                                            }
                                        }
                                    }
                                }
                                allocation = Some(plan);
                                Ok(())
                            }
                            Err(e @ AllocError::Infeasible { .. }) => {
                                allocation_error = Some(e.to_string());
                                Err(e.to_string())
                            }
                            Err(e) => {
                                allocation_error = Some(e.to_string());
                                Err(e.to_string())
                            }
                        },
                    },
                }
            }
            TaskKind::RunDse => {
                mode_guess = PlanMode::FlowWithDse;
                let evaluator = StagedFlowEvaluator { backend: ctx.backend, job };
                match run_dse(
                    &crate::dse::mock_parameter_space(),
                    &evaluator,
                    ctx.dse_budget,
                    ctx.dse_strategy,
                    ctx.seed,
                    ctx.fault_rules,
                ) {
                    Ok(report) => {
                        dse_report = Some(report);
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            TaskKind::RunStage { stage, vcpus } => {
                let params: BTreeMap<String, ParamValue> = dse_report
                    .as_ref()
                    .map(|r| r.best_params.clone())
                    .unwrap_or_default();
                match render_script(job.tool, stage, job, &params) {
                    Err(e) => Err(e.to_string()),
                    Ok(script) => {
                        match run_stage(ctx.backend, &script, &MachineConfig::new(vcpus.unwrap_or(1)))
                        {
                            Err(e) => Err(e.to_string()),
                            Ok(result) => {
                                let ok = match &result.outcome {
                                    StageOutcome::Success => {
                                        if let Some(m) = &result.metrics {
                                            final_metrics = Some(*m);
                                        }
                                        Ok(())
                                    }
                                    StageOutcome::Failure { fault_code, message } => {
                                        Err(format!("{fault_code}: {message}"))
                                    }
                                };
                                stage_results.insert(stage, result);
                                ok
                            }
                        }
                    }
                }
            }
        };

        match verdict {
            Ok(()) => {
                sink.transition(&mut task, TaskStatus::Done);
                // The flow's end state: snapshot metrics after the final
                // stage completes.
                let is_last_stage = matches!(task.kind, TaskKind::RunStage { .. })
                    && !tasks
                        .iter()
                        .skip(i + 1)
                        .any(|t| matches!(t.kind, TaskKind::RunStage { .. }));
                if is_last_stage {
                    if let Some(m) = &final_metrics {
                        sink.emit(&task.id, EventPayload::MetricSnapshot { metrics: *m });
                    }
                }
            }
            Err(note) => {
                task.note = note;
                sink.transition(&mut task, TaskStatus::Failed);
            }
        }
        tasks[i] = task;
    }

    let report = RunReport {
        design: job.design.name.clone(),
        mode: if tasks.iter().any(|t| matches!(t.kind, TaskKind::Allocate { .. })) {
            PlanMode::AllocateThenFlow
        } else if tasks.iter().any(|t| matches!(t.kind, TaskKind::RunDse)) {
            PlanMode::FlowWithDse
        } else {
            mode_guess
        },
        seed: ctx.seed,
        tasks: tasks
            .iter()
            .map(|t| TaskSummary {
                id: t.id.clone(),
                kind: t.kind.clone(),
                status: t.status,
                note: t.note.clone(),
            })
            .collect(),
        predictions,
        allocation,
        allocation_error,
        dse: dse_report,
        stage_results,
        final_metrics,
    };
    RunOutcome { report, tasks, events: sink.events }
}

/// Assemble the per-stage option lists the allocator consumes: one
/// option per price tier, costed at that tier's hourly rate.
fn build_stage_options(
    job: &JobSpec,
    predictions: &BTreeMap<StageKind, BTreeMap<u32, f64>>,
    prices: &PriceList,
) -> Result<Vec<StageOptions>, String> {
    let mut out = Vec::new();
    for &stage in &job.stages {
        let row = predictions
            .get(&stage)
            .ok_or_else(|| format!("no runtime predictions for {stage}"))?;
        let mut options = Vec::new();
        for entry in &prices.entries {
            let runtime_s = *row
                .get(&entry.vcpus)
                .ok_or_else(|| format!("no {stage} runtime at {} vCPUs", entry.vcpus))?;
            options.push(ConfigOption {
                vcpus: entry.vcpus,
                runtime_s,
                cost: stage_cost(entry.rate_per_hour, runtime_s),
            });
        }
        out.push(StageOptions { stage, options });
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Persistence: run directories, event streams, status, and history.
// ---------------------------------------------------------------------

/// Everything stored for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub job: JobSpec,
    pub tasks: Vec<Task>,
    pub events: Vec<EventRecord>,
    pub report: RunReport,
}

/// One line of `index.jsonl`, the history table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub design: String,
    pub mode: PlanMode,
    /// RFC 3339 UTC submission timestamp.
    pub started_at: String,
    pub tasks_total: usize,
    pub tasks_done: usize,
    pub tasks_failed: usize,
    pub tasks_skipped: usize,
}

/// Point-in-time view of a run reconstructed from its event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub run_id: String,
    /// Task count per status name; the values sum to the task total.
    pub counts: BTreeMap<String, usize>,
    pub latest_event: Option<EventRecord>,
    /// Wall-clock span between the first and latest event, seconds.
    pub elapsed_s: f64,
}

/// Conjunctive history filter; `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryFilter {
    pub design: Option<String>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

/// File-backed run storage rooted at a `runs/` directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, OrchestratorError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Claim a fresh run id and create its directory. Existing run
    /// directories are never reused or overwritten.
    pub fn allocate_run_id(&self) -> Result<String, OrchestratorError> {
        let mut next = 1 + self.max_existing_run_number()?;
        loop {
            let candidate = format!("run-{next:04}");
            match fs::create_dir(self.root.join(&candidate)) {
                Ok(()) => return Ok(candidate),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn max_existing_run_number(&self) -> Result<u64, OrchestratorError> {
        let mut max = 0u64;
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            if let Some(n) = name.to_string_lossy().strip_prefix("run-") {
                if let Ok(v) = n.parse::<u64>() {
                    max = max.max(v);
                }
            }
        }
        Ok(max)
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Write `jobspec.json` and the initial (all-pending) `tasks.json`
    /// before execution starts, so a mid-run status query can resolve
    /// the task list.
    pub fn persist_plan(
        &self,
        run_id: &str,
        job: &JobSpec,
        tasks: &[Task],
    ) -> Result<(), OrchestratorError> {
        let dir = self.run_dir(run_id);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("jobspec.json"), job)?;
        write_json(&dir.join("tasks.json"), &tasks.to_vec())?;
        Ok(())
    }

    /// Open the append-only event stream for a run.
    pub fn event_writer(&self, run_id: &str) -> Result<EventWriter, OrchestratorError> {
        let path = self.run_dir(run_id).join("events.jsonl");
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventWriter { file })
    }

    /// Store the completed run: final task statuses, the report, and an
    /// index line. The events file has already been streamed by the
    /// [`EventWriter`].
    pub fn finalize(
        &self,
        run_id: &str,
        job: &JobSpec,
        outcome: &RunOutcome,
    ) -> Result<(), OrchestratorError> {
        let dir = self.run_dir(run_id);
        write_json(&dir.join("tasks.json"), &outcome.tasks)?;
        write_json(&dir.join("report.json"), &outcome.report)?;
        let summary = RunSummary {
            run_id: run_id.to_string(),
            design: outcome.report.design.clone(),
            mode: outcome.report.mode,
            started_at: outcome
                .events
                .first()
                .map(|e| e.wall_time.clone())
                .unwrap_or_else(|| Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)),
            tasks_total: outcome.tasks.len(),
            tasks_done: outcome.tasks.iter().filter(|t| t.status == TaskStatus::Done).count(),
            tasks_failed: outcome.tasks.iter().filter(|t| t.status == TaskStatus::Failed).count(),
            tasks_skipped: outcome.tasks.iter().filter(|t| t.status == TaskStatus::Skipped).count(),
        };
        let mut index = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("index.jsonl"))?;
        writeln!(index, "{}", serde_json::to_string(&summary).expect("summary serializes"))?;
        let _ = job; // the job was persisted by persist_plan
        Ok(())
    }

    /// Load a completed run's full record.
    pub fn load(&self, run_id: &str) -> Result<RunRecord, OrchestratorError> {
        let dir = self.run_dir(run_id);
        if !dir.is_dir() {
            return Err(OrchestratorError::UnknownRun(run_id.to_string()));
        }
        let job = read_json(&dir.join("jobspec.json"))?;
        let tasks = read_json(&dir.join("tasks.json"))?;
        let events = self.read_events(run_id)?;
        let report = read_json(&dir.join("report.json"))?;
        Ok(RunRecord { run_id: run_id.to_string(), job, tasks, events, report })
    }

    fn read_events(&self, run_id: &str) -> Result<Vec<EventRecord>, OrchestratorError> {
        let path = self.run_dir(run_id).join("events.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let file = fs::File::open(path)?;
        let mut events = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(
                serde_json::from_str(&line)
                    .map_err(|e| OrchestratorError::Malformed(format!("event line: {e}")))?,
            );
        }
        Ok(events)
    }

    /// Reconstruct a run's current state by replaying its event stream
    /// against the stored task list. Works mid-run: the snapshot is
    /// whatever the stream contained at read time.
    pub fn status(&self, run_id: &str) -> Result<StatusReport, OrchestratorError> {
        let dir = self.run_dir(run_id);
        if !dir.is_dir() {
            return Err(OrchestratorError::UnknownRun(run_id.to_string()));
        }
        let tasks: Vec<Task> = read_json(&dir.join("tasks.json"))?;
        let events = self.read_events(run_id)?;
        let mut statuses: BTreeMap<&str, TaskStatus> =
            tasks.iter().map(|t| (t.id.as_str(), TaskStatus::Pending)).collect();
        for e in &events {
            if let EventPayload::StatusChange { to, .. } = e.payload {
                if let Some(slot) = statuses.get_mut(e.task_id.as_str()) {
                    *slot = to;
                }
            }
        }
        let mut counts: BTreeMap<String, usize> = [
            TaskStatus::Pending,
            TaskStatus::Running,
            TaskStatus::Done,
            TaskStatus::Failed,
            TaskStatus::Skipped,
        ]
        .iter()
        .map(|s| (s.name().to_string(), 0))
        .collect();
        for status in statuses.values() {
            *counts.get_mut(status.name()).expect("all statuses enumerated") += 1;
        }
        let elapsed_s = match (events.first(), events.last()) {
            (Some(first), Some(last)) => {
                let parse = |s: &str| {
                    DateTime::parse_from_rfc3339(s)
                        .map(|t| t.with_timezone(&Utc))
                        .map_err(|e| OrchestratorError::Malformed(format!("wall_time: {e}")))
                };
                let (a, b) = (parse(&first.wall_time)?, parse(&last.wall_time)?);
                (b - a).num_microseconds().unwrap_or(0) as f64 / 1e6
            }
            _ => 0.0,
        };
        Ok(StatusReport {
            run_id: run_id.to_string(),
            counts,
            latest_event: events.last().cloned(),
            elapsed_s,
        })
    }

    /// Run summaries in submission order, optionally filtered.
    pub fn history(&self, filter: &HistoryFilter) -> Result<Vec<RunSummary>, OrchestratorError> {
        let path = self.root.join("index.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let file = fs::File::open(path)?;
        let mut out = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let summary: RunSummary = serde_json::from_str(&line)
                .map_err(|e| OrchestratorError::Malformed(format!("index line: {e}")))?;
            if let Some(design) = &filter.design {
                if &summary.design != design {
                    continue;
                }
            }
            if filter.from.is_some() || filter.to.is_some() {
                let at = DateTime::parse_from_rfc3339(&summary.started_at)
                    .map_err(|e| OrchestratorError::Malformed(format!("started_at: {e}")))?
                    .with_timezone(&Utc);
                if matches!(filter.from, Some(from) if at < from) {
                    continue;
                }
                if matches!(filter.to, Some(to) if at > to) {
                    continue;
                }
            }
            out.push(summary);
        }
        Ok(out)
    }
}

/// Incremental `events.jsonl` appender; hand its [`EventWriter::observe`]
/// to [`execute`] so the stream is durable while the run progresses.
pub struct EventWriter {
    file: fs::File,
}

impl EventWriter {
    pub fn observe(&mut self, event: &EventRecord) {
        let line = serde_json::to_string(event).expect("events serialize");
        writeln!(self.file, "{line}").expect("event stream append");
        self.file.flush().expect("event stream flush");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| OrchestratorError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, OrchestratorError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| OrchestratorError::Malformed(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::MockBackend;
    use crate::allocator::PriceEntry;
    use crate::flow::{JobOptions, TechNode};
    use crate::ToolKind;

    fn picorv32_job(stages: Vec<StageKind>) -> JobSpec {
        JobSpec {
            design: DesignDescriptor {
                name: "picorv32".into(),
                cell_count: 29_164,
                rtl_path: "designs/picorv32.v".into(),
                netlist_path: None,
            },
            stages,
            tech: TechNode { name: "mock45".into(), lib_paths: vec![], lef_paths: vec![] },
            constraint_path: "constraints/picorv32.sdc".into(),
            tool: ToolKind::Mock,
            options: JobOptions::default(),
        }
    }

    fn full_flow_job() -> JobSpec {
        picorv32_job(StageKind::FLOW.to_vec())
    }

    /// The measured three-stage runtime table used by the allocation
    /// examples, with hourly rates per vCPU tier.
    fn reference_table() -> TableRuntimeSource {
        let rows = [
            (StageKind::Placement, [(1u32, 346.0), (2, 172.0), (4, 70.0), (8, 65.0)]),
            (StageKind::Routing, [(1, 1966.0), (2, 1110.0), (4, 414.0), (8, 378.0)]),
            (StageKind::Sta, [(1, 19.0), (2, 16.0), (4, 14.0), (8, 12.0)]),
        ];
        TableRuntimeSource {
            table: rows
                .iter()
                .map(|(stage, cells)| (*stage, cells.iter().copied().collect()))
                .collect(),
        }
    }

    fn reference_prices() -> PriceList {
        PriceList {
            currency: "CNY".into(),
            entries: vec![
                PriceEntry { vcpus: 1, rate_per_hour: 38.790 },
                PriceEntry { vcpus: 2, rate_per_hour: 72.650 },
                PriceEntry { vcpus: 4, rate_per_hour: 111.920 },
                PriceEntry { vcpus: 8, rate_per_hour: 181.750 },
            ],
        }
    }

    fn three_stage_job() -> JobSpec {
        picorv32_job(vec![StageKind::Placement, StageKind::Routing, StageKind::Sta])
    }

    #[test]
    fn flow_only_plan_is_one_stage_task_per_stage_in_order() {
        let tasks = plan(&full_flow_job(), PlanMode::FlowOnly, None).unwrap();
        assert_eq!(tasks.len(), 5);
        for (i, (task, &stage)) in tasks.iter().zip(StageKind::FLOW.iter()).enumerate() {
            assert_eq!(task.id, format!("stage-{stage}"));
            assert_eq!(task.kind, TaskKind::RunStage { stage, vcpus: None });
            assert_eq!(task.status, TaskStatus::Pending);
            if i == 0 {
                assert!(task.inputs.is_empty());
            } else {
                assert_eq!(task.inputs, vec![tasks[i - 1].id.clone()]);
            }
        }
        let single = plan(
            &picorv32_job(vec![StageKind::Placement]),
            PlanMode::FlowOnly,
            None,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn allocate_plan_predicts_every_stage_then_allocates_then_runs() {
        let tasks = plan(&full_flow_job(), PlanMode::AllocateThenFlow, Some(480.0)).unwrap();
        let kinds: Vec<&str> = tasks
            .iter()
            .map(|t| match t.kind {
                TaskKind::Predict { .. } => "predict",
                TaskKind::Allocate { .. } => "allocate",
                TaskKind::RunStage { .. } => "stage",
                _ => "other",
            })
            .collect();
        assert_eq!(
            kinds,
            ["predict"; 5].iter().copied().chain(["allocate"]).chain(["stage"; 5]).collect::<Vec<_>>()
        );
        let allocate = tasks.iter().find(|t| t.id == "allocate").unwrap();
        assert_eq!(allocate.inputs.len(), 5, "allocate depends on every predict");
        assert!(allocate.inputs.iter().all(|i| i.starts_with("predict-")));
        assert!(matches!(allocate.kind, TaskKind::Allocate { deadline_s } if deadline_s == 480.0));

        assert!(matches!(
            plan(&full_flow_job(), PlanMode::AllocateThenFlow, None),
            Err(OrchestratorError::DeadlineRequired)
        ));
    }

    #[test]
    fn dse_plan_runs_exploration_before_the_flow() {
        let tasks = plan(&full_flow_job(), PlanMode::FlowWithDse, None).unwrap();
        assert_eq!(tasks.len(), 6);
        assert_eq!(tasks[0].kind, TaskKind::RunDse);
        assert_eq!(tasks[1].inputs, vec!["dse".to_string()]);
    }

    #[test]
    fn flow_only_run_completes_every_stage_with_final_metrics() {
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::FlowOnly, None).unwrap();
        let ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});
        assert!(outcome.tasks.iter().all(|t| t.status == TaskStatus::Done));
        assert_eq!(outcome.report.stage_results.len(), 5);
        assert!(outcome.report.final_metrics.is_some());
        assert_eq!(outcome.report.mode, PlanMode::FlowOnly);
        // Every task terminal; events: 2 per task + 1 metric snapshot.
        assert_eq!(outcome.events.len(), 2 * 5 + 1);
    }

    #[test]
    fn event_seqs_are_gap_free_and_transitions_are_legal() {
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::AllocateThenFlow, Some(100_000.0)).unwrap();
        let mut ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);
        let prices = reference_prices();
        ctx.prices = Some(&prices);
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});
        for (i, e) in outcome.events.iter().enumerate() {
            assert_eq!(e.seq, i as u64 + 1, "seq must be gap-free from 1");
        }
        for e in &outcome.events {
            if let EventPayload::StatusChange { from, to } = e.payload {
                let legal = matches!(
                    (from, to),
                    (TaskStatus::Pending, TaskStatus::Running)
                        | (TaskStatus::Running, TaskStatus::Done)
                        | (TaskStatus::Running, TaskStatus::Failed)
                        | (TaskStatus::Pending, TaskStatus::Skipped)
                );
                assert!(legal, "illegal transition {from:?} -> {to:?}");
            }
        }
        assert!(outcome.tasks.iter().all(|t| t.status.is_terminal()));
    }

    #[test]
    fn reference_allocation_chooses_4_8_1_within_480_seconds() {
        let job = three_stage_job();
        let tasks = plan(&job, PlanMode::AllocateThenFlow, Some(480.0)).unwrap();
        let table = reference_table();
        let prices = reference_prices();
        let mut ctx = ExecutionContext::new(&MockBackend, &table);
        ctx.prices = Some(&prices);
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});

        let plan = outcome.report.allocation.as_ref().expect("allocation succeeds");
        assert_eq!(plan.vcpus(), vec![4, 8, 1]);
        assert_eq!(plan.total_time_s, 467.0);
        assert!((plan.total_cost - 21.465).abs() <= 0.01, "cost {}", plan.total_cost);
        // The chosen vcpus annotate the stage tasks.
        let stage_vcpus: Vec<Option<u32>> = outcome
            .tasks
            .iter()
            .filter_map(|t| match t.kind {
                TaskKind::RunStage { vcpus, .. } => Some(vcpus),
                _ => None,
            })
            .collect();
        assert_eq!(stage_vcpus, vec![Some(4), Some(8), Some(1)]);
        assert!(outcome.tasks.iter().all(|t| t.status == TaskStatus::Done));
    }

    #[test]
    fn infeasible_deadline_fails_allocation_and_skips_the_stages() {
        let job = three_stage_job();
        let tasks = plan(&job, PlanMode::AllocateThenFlow, Some(400.0)).unwrap();
        let table = reference_table();
        let prices = reference_prices();
        let mut ctx = ExecutionContext::new(&MockBackend, &table);
        ctx.prices = Some(&prices);
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});

        let allocate = outcome.tasks.iter().find(|t| t.id == "allocate").unwrap();
        assert_eq!(allocate.status, TaskStatus::Failed);
        let detail = outcome.report.allocation_error.as_ref().expect("infeasible detail");
        assert!(detail.contains("455"), "detail should name the minimum time: {detail}");
        for t in &outcome.tasks {
            if matches!(t.kind, TaskKind::RunStage { .. }) {
                assert_eq!(t.status, TaskStatus::Skipped, "{}", t.id);
            }
        }
        assert!(outcome.report.final_metrics.is_none());
    }

    #[test]
    fn dse_mode_runs_stages_with_the_best_found_parameters() {
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::FlowWithDse, None).unwrap();
        let mut ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);
        ctx.dse_budget = 24;
        ctx.seed = 11;
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});
        assert!(outcome.tasks.iter().all(|t| t.status == TaskStatus::Done));
        let dse = outcome.report.dse.as_ref().expect("exploration report");
        assert!(dse.improvement.unwrap() >= 0.0);
        // The final stage ran with the explored parameters, so its
        // metrics equal the exploration's best metrics.
        let final_metrics = outcome.report.final_metrics.as_ref().unwrap();
        assert_eq!(final_metrics, &dse.best_metrics);
    }

    #[test]
    fn train_task_feeds_predictions_for_later_tasks() {
        let job = three_stage_job();
        let mut tasks = vec![Task {
            id: "train".into(),
            kind: TaskKind::Train { samples: 120 },
            inputs: vec![],
            status: TaskStatus::Pending,
            note: String::new(),
        }];
        tasks.extend(plan(&job, PlanMode::AllocateThenFlow, Some(100_000.0)).unwrap());
        // Wire a runtime source that always errors: predictions must come
        // from the freshly trained model instead.
        struct NoSource;
        impl RuntimeSource for NoSource {
            fn runtime_s(
                &self,
                _d: &DesignDescriptor,
                stage: StageKind,
                vcpus: u32,
            ) -> Result<f64, OrchestratorError> {
                Err(OrchestratorError::RuntimeUnavailable {
                    stage,
                    vcpus,
                    detail: "unwired".into(),
                })
            }
        }
        let prices = reference_prices();
        let mut ctx = ExecutionContext::new(&MockBackend, &NoSource);
        ctx.prices = Some(&prices);
        ctx.seed = 7;
        let outcome = execute(&job, &tasks, &ctx, &mut |_| {});
        assert!(
            outcome.tasks.iter().all(|t| t.status == TaskStatus::Done),
            "statuses: {:?}",
            outcome.tasks.iter().map(|t| (t.id.clone(), t.status)).collect::<Vec<_>>()
        );
        assert_eq!(outcome.report.predictions.len(), 3);
    }

    #[test]
    fn repeat_runs_with_equal_seeds_produce_identical_reports() {
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::FlowWithDse, None).unwrap();
        let mut ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);
        ctx.seed = 3;
        ctx.dse_budget = 16;
        let a = execute(&job, &tasks, &ctx, &mut |_| {});
        let b = execute(&job, &tasks, &ctx, &mut |_| {});
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap(),
            "reports must be bit-identical given equal seeds"
        );
    }

    #[test]
    fn store_persists_loads_and_indexes_runs() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs")).unwrap();
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::FlowOnly, None).unwrap();
        let ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);

        let run_id = store.allocate_run_id().unwrap();
        assert_eq!(run_id, "run-0001");
        store.persist_plan(&run_id, &job, &tasks).unwrap();
        let mut writer = store.event_writer(&run_id).unwrap();
        let outcome = execute(&job, &tasks, &ctx, &mut |e| writer.observe(e));
        store.finalize(&run_id, &job, &outcome).unwrap();

        let record = store.load(&run_id).unwrap();
        assert_eq!(record.run_id, run_id);
        assert_eq!(record.job, job);
        assert_eq!(record.tasks, outcome.tasks);
        assert_eq!(record.events, outcome.events);
        assert_eq!(record.report, outcome.report);

        assert!(matches!(
            store.load("run-9999"),
            Err(OrchestratorError::UnknownRun(_))
        ));
        assert_eq!(store.allocate_run_id().unwrap(), "run-0002");
    }

    #[test]
    fn status_replays_the_event_stream_mid_run_and_after() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs")).unwrap();
        let job = full_flow_job();
        let tasks = plan(&job, PlanMode::FlowOnly, None).unwrap();
        let ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);

        let run_id = store.allocate_run_id().unwrap();
        store.persist_plan(&run_id, &job, &tasks).unwrap();
        let mut writer = store.event_writer(&run_id).unwrap();

        // Pause hook: query status from inside the observer at the third
        // event and verify the snapshot is internally consistent.
        let mut snapshots = Vec::new();
        let store_for_observer = store.clone();
        let rid = run_id.clone();
        let outcome = execute(&job, &tasks, &ctx, &mut |e| {
            writer.observe(e);
            if e.seq == 3 {
                snapshots.push(store_for_observer.status(&rid).unwrap());
            }
        });
        store.finalize(&run_id, &job, &outcome).unwrap();

        let mid = &snapshots[0];
        let total: usize = mid.counts.values().sum();
        assert_eq!(total, tasks.len(), "mid-run counts must cover every task");
        assert!(mid.counts["done"] >= 1);
        assert_eq!(mid.latest_event.as_ref().unwrap().seq, 3);

        let done = store.status(&run_id).unwrap();
        assert_eq!(done.counts["done"], 5);
        assert_eq!(done.counts["running"], 0);
        assert_eq!(done.counts["pending"], 0);
        assert!(done.elapsed_s >= 0.0);
        assert!(matches!(
            store.status("run-7777"),
            Err(OrchestratorError::UnknownRun(_))
        ));
    }

    #[test]
    fn history_filters_by_design_and_date_conjunctively() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("runs")).unwrap();
        let ctx = ExecutionContext::new(&MockBackend, &MockRuntimeSource);

        for design in ["picorv32", "aes", "picorv32"] {
            let mut job = full_flow_job();
            job.design.name = design.into();
            let tasks = plan(&job, PlanMode::FlowOnly, None).unwrap();
            let run_id = store.allocate_run_id().unwrap();
            store.persist_plan(&run_id, &job, &tasks).unwrap();
            let mut writer = store.event_writer(&run_id).unwrap();
            let outcome = execute(&job, &tasks, &ctx, &mut |e| writer.observe(e));
            store.finalize(&run_id, &job, &outcome).unwrap();
        }

        let all = store.history(&HistoryFilter::default()).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(
            all.iter().map(|s| s.run_id.as_str()).collect::<Vec<_>>(),
            ["run-0001", "run-0002", "run-0003"],
            "submission order"
        );

        let picos = store
            .history(&HistoryFilter { design: Some("picorv32".into()), ..Default::default() })
            .unwrap();
        assert_eq!(picos.len(), 2);
        assert!(picos.iter().all(|s| s.design == "picorv32"));

        let none = store
            .history(&HistoryFilter {
                to: Some("2000-01-01T00:00:00Z".parse().unwrap()),
                ..Default::default()
            })
            .unwrap();
        assert!(none.is_empty(), "a date range before every run matches nothing");

        let future_ok = store
            .history(&HistoryFilter {
                from: Some("2000-01-01T00:00:00Z".parse().unwrap()),
                design: Some("aes".into()),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(future_ok.len(), 1, "conjunctive filter");
    }

    #[test]
    fn table_source_misses_and_empty_plans_error() {
        let table = reference_table();
        let design = full_flow_job().design;
        assert!(table.runtime_s(&design, StageKind::Placement, 4).unwrap() == 70.0);
        assert!(matches!(
            table.runtime_s(&design, StageKind::Floorplan, 4),
            Err(OrchestratorError::RuntimeUnavailable { .. })
        ));
        assert!(matches!(
            table.runtime_s(&design, StageKind::Placement, 3),
            Err(OrchestratorError::RuntimeUnavailable { .. })
        ));

        let mut no_stages = full_flow_job();
        no_stages.stages.clear();
        assert!(matches!(
            plan(&no_stages, PlanMode::FlowOnly, None),
            Err(OrchestratorError::EmptyPlan)
        ));
    }

    #[test]
    fn runtime_table_parses_from_json() {
        let text = r#"{
            "placement": {"1": 346.0, "2": 172.0, "4": 70.0, "8": 65.0},
            "routing": {"1": 1966.0, "2": 1110.0, "4": 414.0, "8": 378.0},
            "sta": {"1": 19.0, "2": 16.0, "4": 14.0, "8": 12.0}
        }"#;
        let source = TableRuntimeSource::load(text.as_bytes()).unwrap();
        assert_eq!(source, reference_table());
        assert!(matches!(
            TableRuntimeSource::load(&b"[]"[..]),
            Err(OrchestratorError::Malformed(_))
        ));
    }
}
