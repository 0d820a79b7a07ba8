//! Script templating and EDA tool backends.
//!
//! A flow stage is driven by a tool script rendered from a per-tool,
//! per-stage template (`templates/<tool>/<stage>.tcl`, embedded at build
//! time). Templates use plain-text `{{name}}` placeholders — no
//! conditionals, no loops — and every placeholder must be bound at render
//! time or rendering fails; nothing is silently substituted.
//!
//! Backends implement [`ToolBackend`]. The [`MockBackend`] evaluates the
//! closed-form desk model in [`mock_model`] and is fully deterministic;
//! the real-tool backends validate inputs and report unavailability, as
//! actually spawning iEDA/OpenROAD binaries is out of scope here.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{JobSpec, ParamValue, PpaMetrics, StageKind};

/// Which EDA tool a script or backend targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToolKind {
    #[serde(rename = "ieda")]
    Ieda,
    #[serde(rename = "openroad")]
    OpenRoad,
    #[serde(rename = "mock")]
    Mock,
}

impl ToolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ToolKind::Ieda => "ieda",
            ToolKind::OpenRoad => "openroad",
            ToolKind::Mock => "mock",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The machine a stage runs on; cost modeling lives in the allocator,
/// the backend only needs the parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub vcpus: u32,
}

impl MachineConfig {
    pub fn new(vcpus: u32) -> Self {
        MachineConfig { vcpus }
    }
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig { vcpus: 1 }
    }
}

/// A fully rendered stage script plus the bindings that produced it.
/// `injected_params` holds exactly the placeholders visible in the
/// template, so the binding set can be reconstructed from the script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScript {
    pub tool: ToolKind,
    pub stage: StageKind,
    pub text: String,
    pub injected_params: BTreeMap<String, ParamValue>,
}

/// Terminal outcome of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageOutcome {
    Success,
    Failure { fault_code: String, message: String },
}

impl StageOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, StageOutcome::Success)
    }
}

/// What a stage run produced: outcome, elapsed runtime, metrics on
/// success, and the tool log text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub outcome: StageOutcome,
    pub runtime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PpaMetrics>,
    pub log: String,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("no template for tool `{tool}` stage `{stage}`")]
    UnknownTemplate { tool: ToolKind, stage: StageKind },
    #[error("template for `{tool}`/`{stage}` references unbound placeholder `{name}`")]
    UnboundPlaceholder { tool: ToolKind, stage: StageKind, name: String },
    #[error("script targets `{script_tool}` but backend runs `{backend_tool}`")]
    ToolMismatch { script_tool: ToolKind, backend_tool: ToolKind },
    #[error("backend `{tool}` is not available in this environment")]
    BackendUnavailable { tool: ToolKind },
    #[error("script is missing required binding `{name}`")]
    MissingBinding { name: String },
    #[error("binding `{name}` is invalid: {detail}")]
    InvalidBinding { name: String, detail: String },
    #[error("machine must have at least one vCPU")]
    InvalidMachine,
}

/// Embedded template text for a (tool, stage) pair.
fn template_text(tool: ToolKind, stage: StageKind) -> Option<&'static str> {
    macro_rules! tool_templates {
        ($dir:literal) => {
            match stage {
                StageKind::Floorplan => Some(include_str!(concat!("../templates/", $dir, "/floorplan.tcl"))),
                StageKind::Placement => Some(include_str!(concat!("../templates/", $dir, "/placement.tcl"))),
                StageKind::Cts => Some(include_str!(concat!("../templates/", $dir, "/cts.tcl"))),
                StageKind::Routing => Some(include_str!(concat!("../templates/", $dir, "/routing.tcl"))),
                StageKind::Sta => Some(include_str!(concat!("../templates/", $dir, "/sta.tcl"))),
                StageKind::FullFlow => None,
            }
        };
    }
    match tool {
        ToolKind::Mock => tool_templates!("mock"),
        ToolKind::Ieda => tool_templates!("ieda"),
        ToolKind::OpenRoad => tool_templates!("openroad"),
    }
}

/// Placeholder names appearing in a template, in first-appearance order.
fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim().to_string();
                if !names.contains(&name) {
                    names.push(name);
                }
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    names
}

fn join_paths(paths: &[std::path::PathBuf]) -> Option<ParamValue> {
    if paths.is_empty() {
        return None;
    }
    let joined = paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(" ");
    Some(ParamValue::Text(joined))
}

/// Render the stage script for a job.
///
/// Binding precedence, weakest to strongest: template defaults for the
/// optional flow knobs, then the job's optional fields, then the job's
/// `extra_params`, then the caller's `params` (e.g. an exploration
/// trial). Essential job fields (design name, cell count, tech name,
/// paths) always bind. A placeholder left unbound — e.g. `{{lib_paths}}`
/// when the job lists no liberty files — is an error, never an empty
/// substitution.
pub fn render_script(
    tool: ToolKind,
    stage: StageKind,
    job: &JobSpec,
    params: &BTreeMap<String, ParamValue>,
) -> Result<StageScript, AdapterError> {
    let template = template_text(tool, stage).ok_or(AdapterError::UnknownTemplate { tool, stage })?;

    let mut bindings: BTreeMap<String, ParamValue> = BTreeMap::new();
    // Template defaults for the optional knobs.
    bindings.insert("clock_period_ns".into(), ParamValue::Float(mock_model::DEFAULT_CLOCK_PERIOD_NS));
    bindings.insert("core_utilization".into(), ParamValue::Float(mock_model::DEFAULT_UTILIZATION));
    bindings.insert("placement_density".into(), ParamValue::Float(mock_model::DEFAULT_DENSITY));
    // Essential job fields.
    bindings.insert("design_name".into(), ParamValue::Text(job.design.name.clone()));
    bindings.insert("cell_count".into(), ParamValue::Int(job.design.cell_count as i64));
    bindings.insert("tech_name".into(), ParamValue::Text(job.tech.name.clone()));
    bindings.insert(
        "constraint_path".into(),
        ParamValue::Text(job.constraint_path.display().to_string()),
    );
    bindings.insert("rtl_path".into(), ParamValue::Text(job.design.rtl_path.display().to_string()));
    if let Some(p) = &job.design.netlist_path {
        bindings.insert("netlist_path".into(), ParamValue::Text(p.display().to_string()));
    }
    if let Some(v) = join_paths(&job.tech.lib_paths) {
        bindings.insert("lib_paths".into(), v);
    }
    if let Some(v) = join_paths(&job.tech.lef_paths) {
        bindings.insert("lef_paths".into(), v);
    }
    // Job optionals over defaults.
    if let Some(v) = job.options.clock_period_ns {
        bindings.insert("clock_period_ns".into(), ParamValue::Float(v));
    }
    if let Some(v) = job.options.core_utilization {
        bindings.insert("core_utilization".into(), ParamValue::Float(v));
    }
    if let Some(v) = job.options.placement_density {
        bindings.insert("placement_density".into(), ParamValue::Float(v));
    }
    for (k, v) in &job.options.extra_params {
        bindings.insert(k.clone(), v.clone());
    }
    // Caller params bind strongest.
    for (k, v) in params {
        bindings.insert(k.clone(), v.clone());
    }

    let wanted = placeholders(template);
    let mut injected = BTreeMap::new();
    for name in &wanted {
        match bindings.get(name) {
            Some(v) => {
                injected.insert(name.clone(), v.clone());
            }
            None => {
                return Err(AdapterError::UnboundPlaceholder {
                    tool,
                    stage,
                    name: name.clone(),
                })
            }
        }
    }

    let mut text = template.to_string();
    for (name, value) in &injected {
        text = text.replace(&format!("{{{{{name}}}}}"), &value.to_string());
    }

    Ok(StageScript { tool, stage, text, injected_params: injected })
}

/// An EDA tool that can execute rendered stage scripts.
pub trait ToolBackend {
    fn kind(&self) -> ToolKind;

    /// Execute one stage script on the given machine. Implementations are
    /// called through [`run_stage`], which has already verified the script
    /// targets this backend.
    fn execute(&self, script: &StageScript, machine: &MachineConfig)
        -> Result<StageResult, AdapterError>;
}

/// Run a stage script on a backend. Verifies tool identity and machine
/// validity before delegating.
pub fn run_stage(
    backend: &dyn ToolBackend,
    script: &StageScript,
    machine: &MachineConfig,
) -> Result<StageResult, AdapterError> {
    if script.tool != backend.kind() {
        return Err(AdapterError::ToolMismatch {
            script_tool: script.tool,
            backend_tool: backend.kind(),
        });
    }
    if machine.vcpus == 0 {
        return Err(AdapterError::InvalidMachine);
    }
    backend.execute(script, machine)
}

/// Closed-form desk model behind the mock backend: runtimes and PPA as
/// explicit functions of design size, flow knobs, and parallelism.
///
/// The model is versioned ([`MODEL_VERSION`]) and documented in
/// `docs/formats/mock-model.md`; tests treat the formulas below as the
/// reference surface, so changing any constant is a model version bump.
pub mod mock_model {
    use crate::flow::{PpaMetrics, StageKind};

    /// Bump when any formula or constant changes.
    pub const MODEL_VERSION: u32 = 1;

    /// Template-default flow knobs.
    pub const DEFAULT_CLOCK_PERIOD_NS: f64 = 1.0;
    pub const DEFAULT_UTILIZATION: f64 = 0.7;
    pub const DEFAULT_DENSITY: f64 = 0.7;

    /// Legal knob ranges enforced by the mock tool (inclusive). Proposals
    /// outside these produce a `PARAM_RANGE` fault, mimicking a real tool
    /// rejecting an unreasonable configuration.
    pub const UTILIZATION_LEGAL: (f64, f64) = (0.2, 0.99);
    pub const DENSITY_LEGAL: (f64, f64) = (0.2, 0.99);

    /// Per-stage runtime scale in seconds per cell on one vCPU. All five
    /// stages share one coefficient: runtime then depends only on design
    /// size and parallelism, which keeps the regression target learnable
    /// by the shipped depth-8 tree ensemble. Stage character is expressed
    /// through the PPA model instead, and callers needing measured
    /// per-stage spreads supply a runtime table.
    pub const RUNTIME_K: [(StageKind, f64); 5] = [
        (StageKind::Floorplan, 0.01),
        (StageKind::Placement, 0.01),
        (StageKind::Cts, 0.01),
        (StageKind::Routing, 0.01),
        (StageKind::Sta, 0.01),
    ];

    /// Runtime shrinks ~linearly with vCPUs up to this count…
    pub const PARALLEL_LIMIT: f64 = 4.0;
    pub const PARALLEL_EXPONENT: f64 = 1.0;
    /// …and nearly flattens beyond it.
    pub const TAIL_EXPONENT: f64 = 0.1;

    /// Area per cell (µm²) at 100% core utilization.
    pub const AREA_PER_CELL_UM2: f64 = 1.2;
    /// Power per cell (mW) before the density factor.
    pub const POWER_PER_CELL_MW: f64 = 0.001;
    /// Delay curvature around the sweet-spot density.
    pub const DENSITY_CURVATURE: f64 = 1.2;
    /// Delay penalty coefficient for low utilization.
    pub const UTILIZATION_PENALTY: f64 = 0.15;
    /// Density at which the delay parabola bottoms out.
    pub const DENSITY_SWEET_SPOT: f64 = 0.55;

    pub fn runtime_scale(stage: StageKind) -> Option<f64> {
        RUNTIME_K.iter().find(|(s, _)| *s == stage).map(|(_, k)| *k)
    }

    /// Stage runtime in seconds for `cells` on `vcpus` parallel cores:
    /// `k_stage * cells / vcpus^PARALLEL_EXPONENT` up to four vCPUs, then
    /// flattening as `runtime(4) * (4 / vcpus)^TAIL_EXPONENT`.
    pub fn runtime_s(stage: StageKind, cells: u64, vcpus: u32) -> f64 {
        let k = runtime_scale(stage).expect("concrete stage");
        let n = cells as f64;
        let c = vcpus as f64;
        if c <= PARALLEL_LIMIT {
            k * n / c.powf(PARALLEL_EXPONENT)
        } else {
            let at_limit = k * n / PARALLEL_LIMIT.powf(PARALLEL_EXPONENT);
            at_limit * (PARALLEL_LIMIT / c).powf(TAIL_EXPONENT)
        }
    }

    /// End-of-flow PPA snapshot:
    ///
    /// * `area  = cells * AREA_PER_CELL_UM2 / utilization`
    /// * `power = POWER_PER_CELL_MW * cells * (0.6 + 0.4 * density)`
    /// * `delay = clock * (0.7 + DENSITY_CURVATURE * (density - sweet)^2
    ///            + UTILIZATION_PENALTY / utilization)`
    ///
    /// Area and delay reward high utilization, power and delay pull the
    /// density toward the sweet spot from opposite sides, so the PPA
    /// product has a single best region strictly inside the legal density
    /// range — which is what makes exploration over this model testable.
    pub fn metrics(cells: u64, clock_period_ns: f64, utilization: f64, density: f64) -> PpaMetrics {
        let n = cells as f64;
        let area_um2 = n * AREA_PER_CELL_UM2 / utilization;
        let power_mw = POWER_PER_CELL_MW * n * (0.6 + 0.4 * density);
        let cp_delay_ns = clock_period_ns
            * (0.7
                + DENSITY_CURVATURE * (density - DENSITY_SWEET_SPOT).powi(2)
                + UTILIZATION_PENALTY / utilization);
        PpaMetrics::new(cp_delay_ns, power_mw, area_um2)
    }
}

/// Deterministic backend evaluating the [`mock_model`] formulas.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }

    fn float_binding(
        script: &StageScript,
        name: &str,
        fallback: f64,
    ) -> Result<f64, AdapterError> {
        match script.injected_params.get(name) {
            None => Ok(fallback),
            Some(v) => v.as_f64().ok_or_else(|| AdapterError::InvalidBinding {
                name: name.into(),
                detail: format!("expected a number, got {v}"),
            }),
        }
    }
}

impl ToolBackend for MockBackend {
    fn kind(&self) -> ToolKind {
        ToolKind::Mock
    }

    fn execute(
        &self,
        script: &StageScript,
        machine: &MachineConfig,
    ) -> Result<StageResult, AdapterError> {
        let cells = match script.injected_params.get("cell_count") {
            Some(ParamValue::Int(n)) if *n >= 1 => *n as u64,
            Some(v) => {
                return Err(AdapterError::InvalidBinding {
                    name: "cell_count".into(),
                    detail: format!("expected a positive integer, got {v}"),
                })
            }
            None => return Err(AdapterError::MissingBinding { name: "cell_count".into() }),
        };
        let clock = Self::float_binding(script, "clock_period_ns", mock_model::DEFAULT_CLOCK_PERIOD_NS)?;
        let utilization =
            Self::float_binding(script, "core_utilization", mock_model::DEFAULT_UTILIZATION)?;
        let density = Self::float_binding(script, "placement_density", mock_model::DEFAULT_DENSITY)?;

        let mut header = format!(
            "[mock] stage={} design={} cells={} vcpus={}\n[mock] clock_period_ns={} core_utilization={} placement_density={}\n",
            script.stage,
            script.injected_params.get("design_name").map(|v| v.to_string()).unwrap_or_default(),
            cells,
            machine.vcpus,
            clock,
            utilization,
            density,
        );

        // The mock tool rejects out-of-range knobs the way a real placer
        // rejects an impossible density target.
        let mut fault: Option<(String, String)> = None;
        if clock.is_nan() || clock <= 0.0 {
            fault = Some((
                "PARAM_RANGE".into(),
                format!("clock_period_ns={clock} outside legal range (0, inf)"),
            ));
        }
        let (ulo, uhi) = mock_model::UTILIZATION_LEGAL;
        if fault.is_none() && !(utilization >= ulo && utilization <= uhi) {
            fault = Some((
                "PARAM_RANGE".into(),
                format!("core_utilization={utilization} outside legal range [{ulo}, {uhi}]"),
            ));
        }
        let (dlo, dhi) = mock_model::DENSITY_LEGAL;
        if fault.is_none() && !(density >= dlo && density <= dhi) {
            fault = Some((
                "PARAM_RANGE".into(),
                format!("placement_density={density} outside legal range [{dlo}, {dhi}]"),
            ));
        }

        if let Some((fault_code, message)) = fault {
            header.push_str(&format!("[mock] ERROR {fault_code}: {message}\n"));
            return Ok(StageResult {
                outcome: StageOutcome::Failure { fault_code, message },
                runtime_s: 0.0,
                metrics: None,
                log: header,
            });
        }

        let runtime_s = mock_model::runtime_s(script.stage, cells, machine.vcpus);
        let metrics = mock_model::metrics(cells, clock, utilization, density);
        header.push_str(&format!(
            "[mock] runtime_s={runtime_s}\n[mock] cp_delay_ns={} power_mw={} area_um2={}\n",
            metrics.cp_delay_ns, metrics.power_mw, metrics.area_um2
        ));
        Ok(StageResult {
            outcome: StageOutcome::Success,
            runtime_s,
            metrics: Some(metrics),
            log: header,
        })
    }
}

/// iEDA backend stub: renders and validates scripts, but executing the
/// real binaries is outside this environment.
#[derive(Debug, Default, Clone, Copy)]
pub struct IedaBackend;

impl ToolBackend for IedaBackend {
    fn kind(&self) -> ToolKind {
        ToolKind::Ieda
    }

    fn execute(&self, _: &StageScript, _: &MachineConfig) -> Result<StageResult, AdapterError> {
        Err(AdapterError::BackendUnavailable { tool: ToolKind::Ieda })
    }
}

/// OpenROAD backend stub; same contract as [`IedaBackend`].
#[derive(Debug, Default, Clone, Copy)]
pub struct OpenRoadBackend;

impl ToolBackend for OpenRoadBackend {
    fn kind(&self) -> ToolKind {
        ToolKind::OpenRoad
    }

    fn execute(&self, _: &StageScript, _: &MachineConfig) -> Result<StageResult, AdapterError> {
        Err(AdapterError::BackendUnavailable { tool: ToolKind::OpenRoad })
    }
}

/// The backend implementation for a tool kind.
pub fn backend_for(tool: ToolKind) -> Box<dyn ToolBackend> {
    match tool {
        ToolKind::Mock => Box::new(MockBackend),
        ToolKind::Ieda => Box::new(IedaBackend),
        ToolKind::OpenRoad => Box::new(OpenRoadBackend),
    }
}
