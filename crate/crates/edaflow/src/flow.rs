//! Shared vocabulary for backend design flows.
//!
//! Everything downstream (adapters, prediction, allocation, exploration,
//! orchestration) speaks in the types defined here: stages, designs,
//! technology nodes, job specifications, and PPA metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::ToolKind;

/// A backend flow stage. `FullFlow` is shorthand for every concrete stage
/// in flow order and is expanded during job validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Floorplan,
    Placement,
    Cts,
    Routing,
    Sta,
    FullFlow,
}

impl StageKind {
    /// Every concrete stage in flow order.
    pub const FLOW: [StageKind; 5] = [
        StageKind::Floorplan,
        StageKind::Placement,
        StageKind::Cts,
        StageKind::Routing,
        StageKind::Sta,
    ];

    /// Lowercase name, also used in serialized documents and datasets.
    pub fn name(&self) -> &'static str {
        match self {
            StageKind::Floorplan => "floorplan",
            StageKind::Placement => "placement",
            StageKind::Cts => "cts",
            StageKind::Routing => "routing",
            StageKind::Sta => "sta",
            StageKind::FullFlow => "full_flow",
        }
    }

    /// Parse a lowercase stage name.
    pub fn parse(name: &str) -> Option<StageKind> {
        match name {
            "floorplan" => Some(StageKind::Floorplan),
            "placement" => Some(StageKind::Placement),
            "cts" => Some(StageKind::Cts),
            "routing" => Some(StageKind::Routing),
            "sta" => Some(StageKind::Sta),
            "full_flow" => Some(StageKind::FullFlow),
            _ => None,
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar parameter value as it appears in job documents, injected
/// script bindings, and exploration spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    /// Numeric view; integers widen to f64.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

/// The design under flow: netlist-level identity plus size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDescriptor {
    pub name: String,
    /// Standard-cell instance count; the primary size feature everywhere.
    pub cell_count: u64,
    pub rtl_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub netlist_path: Option<PathBuf>,
}

/// Technology node and its library artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lib_paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lef_paths: Vec<PathBuf>,
}

/// Optional flow knobs. Absent fields fall back to template defaults at
/// script-render time; they are never silently filled in here.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JobOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_period_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement_density: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_params: BTreeMap<String, ParamValue>,
}

/// A validated flow job: what to run, on which design, with which tool.
///
/// Construct via [`validate_job_spec`]; a value of this type implies the
/// essential fields were present and every optional field was in range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub design: DesignDescriptor,
    /// Concrete stages in flow order (`full_flow` is expanded on validation).
    pub stages: Vec<StageKind>,
    pub tech: TechNode,
    pub constraint_path: PathBuf,
    pub tool: ToolKind,
    #[serde(default, skip_serializing_if = "is_default_options")]
    pub options: JobOptions,
}

fn is_default_options(o: &JobOptions) -> bool {
    *o == JobOptions::default()
}

/// One out-of-range field: name, offending value, allowed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub field: String,
    pub given: serde_json::Value,
    pub allowed: String,
}

/// Everything wrong with an incomplete or out-of-range job document.
/// Listing is exhaustive: callers see all problems at once, not just the
/// first one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IncompleteReport {
    /// Missing essential fields, dotted paths for nested ones.
    pub missing: Vec<String>,
    pub range_violations: Vec<RangeViolation>,
}

impl IncompleteReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.range_violations.is_empty()
    }
}

impl fmt::Display for IncompleteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.missing.is_empty() {
            writeln!(f, "missing essential fields: {}", self.missing.join(", "))?;
        }
        for v in &self.range_violations {
            writeln!(f, "{} = {} outside allowed {}", v.field, v.given, v.allowed)?;
        }
        Ok(())
    }
}

/// Outcome of job validation: a usable spec, or a full defect report.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // transient return value; boxing the spec buys nothing
pub enum ValidationOutcome {
    Complete(JobSpec),
    Incomplete(IncompleteReport),
}

#[derive(Debug, Error)]
pub enum FlowError {
    /// The document is not structurally a job spec (wrong types, unknown
    /// enum names, not an object). Distinct from *incomplete*: a malformed
    /// document cannot be inspected field-by-field at all.
    #[error("malformed job document: {0}")]
    MalformedDocument(String),
}

/// Power/performance/area of one design snapshot.
///
/// All three components are strictly positive for any physically
/// meaningful snapshot; backends and parsers enforce this at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    /// Critical-path delay in nanoseconds.
    pub cp_delay_ns: f64,
    /// Total power in milliwatts.
    pub power_mw: f64,
    /// Cell area in square micrometers.
    pub area_um2: f64,
}

impl PpaMetrics {
    pub fn new(cp_delay_ns: f64, power_mw: f64, area_um2: f64) -> Self {
        debug_assert!(cp_delay_ns > 0.0 && power_mw > 0.0 && area_um2 > 0.0);
        PpaMetrics { cp_delay_ns, power_mw, area_um2 }
    }
}

/// Scalar figure of merit: the product of delay, power, and area.
/// Smaller is better; the unique minimizer of the product is also optimal
/// for any monotone combination of the three components' ratios.
pub fn ppa_product(m: &PpaMetrics) -> f64 {
    m.cp_delay_ns * m.power_mw * m.area_um2
}

/// Fractional improvement of `after` over `before`:
/// `1 - product(after) / product(before)`. Positive when `after` is
/// better; strictly decreasing in each component of `after`.
pub fn ppa_improvement(before: &PpaMetrics, after: &PpaMetrics) -> f64 {
    1.0 - ppa_product(after) / ppa_product(before)
}

/// A fraction rendered as a percentage rounded half-away-from-zero to two
/// decimals, the form used in user-facing reports (0.07757 → 7.76).
pub fn improvement_percent(fraction: f64) -> f64 {
    (fraction * 10_000.0).round() / 100.0
}

const UTILIZATION_RANGE: &str = "(0, 1]";
const DENSITY_RANGE: &str = "(0, 1]";

/// Check a raw, already-parsed job document.
///
/// Returns [`ValidationOutcome::Complete`] only when every essential field
/// (`design` with name/cell_count/rtl_path, `stages`, `tech.name`,
/// `constraint_path`, `tool`) is present and every optional field is in
/// range. Nothing essential is ever defaulted; instead the report lists
/// *all* missing essentials and *all* out-of-range optionals at once.
/// `full_flow` expands to the five concrete stages.
///
/// Errors with [`FlowError::MalformedDocument`] when the document is not
/// an object or a present field has the wrong type.
pub fn validate_job_spec(raw: &serde_json::Value) -> Result<ValidationOutcome, FlowError> {
    use serde_json::Value;

    let obj = raw
        .as_object()
        .ok_or_else(|| FlowError::MalformedDocument("job document must be an object".into()))?;

    let mut report = IncompleteReport::default();

    // --- design -----------------------------------------------------------
    let mut design = None;
    match obj.get("design") {
        None => report.missing.push("design".into()),
        Some(Value::Object(d)) => {
            let name = match d.get("name") {
                None => {
                    report.missing.push("design.name".into());
                    None
                }
                Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
                Some(Value::String(_)) => {
                    report.range_violations.push(RangeViolation {
                        field: "design.name".into(),
                        given: d["name"].clone(),
                        allowed: "non-empty string".into(),
                    });
                    None
                }
                Some(v) => return Err(malformed("design.name", v)),
            };
            let cell_count = match d.get("cell_count") {
                None => {
                    report.missing.push("design.cell_count".into());
                    None
                }
                Some(v @ Value::Number(n)) => match n.as_u64() {
                    Some(c) if c >= 1 => Some(c),
                    _ => {
                        report.range_violations.push(RangeViolation {
                            field: "design.cell_count".into(),
                            given: v.clone(),
                            allowed: "integer >= 1".into(),
                        });
                        None
                    }
                },
                Some(v) => return Err(malformed("design.cell_count", v)),
            };
            let rtl_path = match d.get("rtl_path") {
                None => {
                    report.missing.push("design.rtl_path".into());
                    None
                }
                Some(Value::String(s)) => Some(PathBuf::from(s)),
                Some(v) => return Err(malformed("design.rtl_path", v)),
            };
            let netlist_path = match d.get("netlist_path") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(PathBuf::from(s)),
                Some(v) => return Err(malformed("design.netlist_path", v)),
            };
            if let (Some(name), Some(cell_count), Some(rtl_path)) = (name, cell_count, rtl_path) {
                design = Some(DesignDescriptor { name, cell_count, rtl_path, netlist_path });
            }
        }
        Some(v) => return Err(malformed("design", v)),
    }

    // --- stages -----------------------------------------------------------
    let mut stages = None;
    match obj.get("stages") {
        None => report.missing.push("stages".into()),
        Some(v @ Value::Array(items)) => {
            let mut parsed = Vec::with_capacity(items.len());
            for item in items {
                let name = item
                    .as_str()
                    .ok_or_else(|| malformed("stages", item))?;
                let stage = StageKind::parse(name)
                    .ok_or_else(|| FlowError::MalformedDocument(format!("unknown stage `{name}`")))?;
                parsed.push(stage);
            }
            if parsed.is_empty() {
                report.range_violations.push(RangeViolation {
                    field: "stages".into(),
                    given: v.clone(),
                    allowed: "non-empty list of stages".into(),
                });
            } else if parsed.contains(&StageKind::FullFlow) {
                if parsed.len() == 1 {
                    stages = Some(StageKind::FLOW.to_vec());
                } else {
                    report.range_violations.push(RangeViolation {
                        field: "stages".into(),
                        given: v.clone(),
                        allowed: "full_flow must be the only entry when present".into(),
                    });
                }
            } else if parsed.windows(2).all(|w| w[0] < w[1]) {
                stages = Some(parsed);
            } else {
                report.range_violations.push(RangeViolation {
                    field: "stages".into(),
                    given: v.clone(),
                    allowed: "ascending flow order (floorplan < placement < cts < routing < sta), no duplicates".into(),
                });
            }
        }
        Some(v) => return Err(malformed("stages", v)),
    }

    // --- tech --------------------------------------------------------------
    let mut tech = None;
    match obj.get("tech") {
        None => report.missing.push("tech".into()),
        Some(v @ Value::Object(_)) => {
            match serde_json::from_value::<TechNode>(v.clone()) {
                Ok(t) => {
                    if t.name.is_empty() {
                        report.range_violations.push(RangeViolation {
                            field: "tech.name".into(),
                            given: Value::String(String::new()),
                            allowed: "non-empty string".into(),
                        });
                    } else {
                        tech = Some(t);
                    }
                }
                Err(e) => {
                    if v.get("name").is_none() {
                        report.missing.push("tech.name".into());
                    } else {
                        return Err(FlowError::MalformedDocument(format!("tech: {e}")));
                    }
                }
            }
        }
        Some(v) => return Err(malformed("tech", v)),
    }

    // --- constraint_path, tool ---------------------------------------------
    let constraint_path = match obj.get("constraint_path") {
        None => {
            report.missing.push("constraint_path".into());
            None
        }
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => return Err(malformed("constraint_path", v)),
    };
    let tool = match obj.get("tool") {
        None => {
            report.missing.push("tool".into());
            None
        }
        Some(v @ Value::String(_)) => Some(
            serde_json::from_value::<ToolKind>(v.clone())
                .map_err(|_| FlowError::MalformedDocument(format!("unknown tool {v}")))?,
        ),
        Some(v) => return Err(malformed("tool", v)),
    };

    // --- options ------------------------------------------------------------
    let mut options = JobOptions::default();
    match obj.get("options") {
        None | Some(Value::Null) => {}
        Some(v @ Value::Object(_)) => {
            options = serde_json::from_value::<JobOptions>(v.clone())
                .map_err(|e| FlowError::MalformedDocument(format!("options: {e}")))?;
            if let Some(p) = options.clock_period_ns {
                if p.is_nan() || p <= 0.0 {
                    report.range_violations.push(RangeViolation {
                        field: "options.clock_period_ns".into(),
                        given: serde_json::json!(p),
                        allowed: "> 0".into(),
                    });
                }
            }
            if let Some(u) = options.core_utilization {
                if !(u > 0.0 && u <= 1.0) {
                    report.range_violations.push(RangeViolation {
                        field: "options.core_utilization".into(),
                        given: serde_json::json!(u),
                        allowed: UTILIZATION_RANGE.into(),
                    });
                }
            }
            if let Some(d) = options.placement_density {
                if !(d > 0.0 && d <= 1.0) {
                    report.range_violations.push(RangeViolation {
                        field: "options.placement_density".into(),
                        given: serde_json::json!(d),
                        allowed: DENSITY_RANGE.into(),
                    });
                }
            }
        }
        Some(v) => return Err(malformed("options", v)),
    }

    if !report.is_empty() {
        return Ok(ValidationOutcome::Incomplete(report));
    }

    Ok(ValidationOutcome::Complete(JobSpec {
        design: design.expect("checked above"),
        stages: stages.expect("checked above"),
        tech: tech.expect("checked above"),
        constraint_path: constraint_path.expect("checked above"),
        tool: tool.expect("checked above"),
        options,
    }))
}

fn malformed(field: &str, value: &serde_json::Value) -> FlowError {
    FlowError::MalformedDocument(format!("field `{field}` has unexpected type/value: {value}"))
}
