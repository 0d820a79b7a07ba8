//! Design-space exploration over backend flow parameters.
//!
//! A [`ParamSpace`] describes the tunable knobs (continuous, integer, or
//! categorical), a [`FlowEvaluator`] turns one parameter assignment into
//! flow metrics or a tool fault, and [`run_dse`] searches the space for
//! the assignment minimizing the delay·power·area product. Trial 0 always
//! evaluates the space defaults so every report can state its improvement
//! against the unmodified flow.
//!
//! Faulting trials do not abort the search: the engine looks the fault up
//! in a list of [`FaultRule`]s and adjusts the space (shrinking a range,
//! pinning a knob back to its default, clamping) before proposing again.
//! A rule can also demand an abort, and any fault that keeps recurring on
//! the same knob stops the run as [`DseError::UnremediableFault`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::adapter::mock_model;
use crate::flow::{ppa_improvement, ppa_product, ParamValue, PpaMetrics};

/// Cooling rate of the annealing temperature schedule (`0.95^trial`).
pub const ANNEAL_COOLING: f64 = 0.95;
/// Gaussian step scale: σ = `ANNEAL_STEP_SCALE` · range · temperature.
pub const ANNEAL_STEP_SCALE: f64 = 0.3;
/// A fault recurring more often than this on one knob stops the run.
pub const MAX_FAULT_RECURRENCES: u32 = 3;

/// One tunable dimension's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimKind {
    /// Real-valued knob in `[lo, hi)`.
    Continuous { lo: f64, hi: f64 },
    /// Whole-valued knob in `[lo, hi]`.
    Integer { lo: i64, hi: i64 },
    /// Finite unordered choice set.
    Categorical { values: Vec<String> },
}

/// A named dimension of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

/// The tunable knobs, their defaults, and any knobs pinned back to their
/// defaults by remediation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dims: Vec<Dim>,
    pub defaults: BTreeMap<String, ParamValue>,
    /// Knobs no longer explored: proposals always use the default value.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub pins: BTreeSet<String>,
}

impl ParamSpace {
    pub fn dim(&self, name: &str) -> Option<&Dim> {
        self.dims.iter().find(|d| d.name == name)
    }

    /// Check structural soundness: unique names, non-empty ordered ranges,
    /// and a type-correct in-range default per dimension.
    pub fn validate(&self) -> Result<(), DseError> {
        let mut seen = BTreeSet::new();
        for d in &self.dims {
            if !seen.insert(d.name.as_str()) {
                return Err(DseError::InvalidSpace(format!("duplicate dimension `{}`", d.name)));
            }
            let default = self.defaults.get(&d.name).ok_or_else(|| {
                DseError::InvalidSpace(format!("dimension `{}` has no default", d.name))
            })?;
            match (&d.kind, default) {
                (DimKind::Continuous { lo, hi }, ParamValue::Float(v)) => {
                    if lo.is_nan() || hi.is_nan() || lo >= hi {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: lo {lo} must be < hi {hi}",
                            d.name
                        )));
                    }
                    if v < lo || v > hi {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: default {v} outside [{lo}, {hi}]",
                            d.name
                        )));
                    }
                }
                (DimKind::Integer { lo, hi }, ParamValue::Int(v)) => {
                    if lo >= hi {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: lo {lo} must be < hi {hi}",
                            d.name
                        )));
                    }
                    if v < lo || v > hi {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: default {v} outside [{lo}, {hi}]",
                            d.name
                        )));
                    }
                }
                (DimKind::Categorical { values }, ParamValue::Text(v)) => {
                    if values.is_empty() {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: empty choice set",
                            d.name
                        )));
                    }
                    if !values.contains(v) {
                        return Err(DseError::InvalidSpace(format!(
                            "dimension `{}`: default `{v}` not among its values",
                            d.name
                        )));
                    }
                }
                (_, v) => {
                    return Err(DseError::InvalidSpace(format!(
                        "dimension `{}`: default {v} does not match the dimension kind",
                        d.name
                    )));
                }
            }
        }
        for pin in &self.pins {
            if !seen.contains(pin.as_str()) {
                return Err(DseError::InvalidSpace(format!("pin `{pin}` names no dimension")));
            }
        }
        Ok(())
    }

    /// Is `value` inside dimension `name`'s current domain?
    pub fn contains(&self, name: &str, value: &ParamValue) -> bool {
        match self.dim(name).map(|d| &d.kind) {
            Some(DimKind::Continuous { lo, hi }) => {
                matches!(value.as_f64(), Some(v) if v >= *lo && v <= *hi)
            }
            Some(DimKind::Integer { lo, hi }) => {
                matches!(value, ParamValue::Int(v) if v >= lo && v <= hi)
            }
            Some(DimKind::Categorical { values }) => {
                matches!(value, ParamValue::Text(v) if values.contains(v))
            }
            None => false,
        }
    }
}

/// Search strategy for [`run_dse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Independent uniform draws per dimension.
    Random,
    /// Gaussian perturbation of the best-so-far point under a cooling
    /// temperature; categorical knobs resample with probability equal to
    /// the temperature.
    Anneal,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Random => write!(f, "random"),
            Strategy::Anneal => write!(f, "anneal"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "anneal" => Ok(Strategy::Anneal),
            other => Err(format!("unknown strategy `{other}` (expected random|anneal)")),
        }
    }
}

/// What happened to one evaluated parameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOutcome {
    Success { objective: f64, metrics: PpaMetrics },
    Failed { fault_code: String, message: String },
}

impl TrialOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            TrialOutcome::Success { objective, .. } => Some(*objective),
            TrialOutcome::Failed { .. } => None,
        }
    }
}

/// One evaluated point of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, ParamValue>,
    pub outcome: TrialOutcome,
}

/// Corrective action a fault rule prescribes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Remedy {
    /// Replace the dimension's range with the centered sub-range of
    /// `factor` times its width that contains the default (slid inward
    /// when the centered window would poke past a bound).
    ShrinkRange { dim: String, factor: f64 },
    /// Stop exploring the dimension; all later proposals use its default.
    ResetToDefault { dim: String },
    /// Clamp the dimension's default into its current bounds.
    ClampToBound { dim: String },
    /// Give up immediately.
    Abort,
}

/// Maps a fault (code plus message substring) to a [`Remedy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    pub fault_code: String,
    /// Substring the fault message must contain; empty matches any message.
    #[serde(rename = "match")]
    pub match_substring: String,
    pub remedy: Remedy,
}

/// What remediation did to the space after one faulting trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RemedyAction {
    ShrunkRange { dim: String, lo: f64, hi: f64 },
    ResetToDefault { dim: String },
    ClampedToBound { dim: String },
    NoRuleMatched,
}

/// Log entry tying a fault to the action taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemediationRecord {
    pub trial_index: usize,
    pub fault_code: String,
    pub message: String,
    #[serde(flatten)]
    pub action: RemedyAction,
}

/// Search result: the best assignment found, its metrics, the improvement
/// over the defaults run, and the full trial/remediation history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseReport {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub best_params: BTreeMap<String, ParamValue>,
    pub best_metrics: PpaMetrics,
    pub best_objective: f64,
    /// `1 − best/defaults` product ratio; absent when the defaults trial
    /// itself faulted, leaving no baseline.
    pub improvement: Option<f64>,
    pub trials: Vec<Trial>,
    pub remediations_applied: Vec<RemediationRecord>,
}

/// Evaluation outcome delivered by a flow evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    Metrics(PpaMetrics),
    Fault { fault_code: String, message: String },
}

/// Anything that can score one parameter assignment by running (or
/// modeling) the flow.
pub trait FlowEvaluator {
    fn evaluate(&self, params: &BTreeMap<String, ParamValue>) -> EvalOutcome;
}

impl<F> FlowEvaluator for F
where
    F: Fn(&BTreeMap<String, ParamValue>) -> EvalOutcome,
{
    fn evaluate(&self, params: &BTreeMap<String, ParamValue>) -> EvalOutcome {
        self(params)
    }
}

/// Closed-form evaluator over the mock backend's metrics model, faulting
/// with `PARAM_RANGE` exactly as the mock tool does for illegal knobs.
#[derive(Debug, Clone, Copy)]
pub struct MockFlowEvaluator {
    pub cell_count: u64,
    pub clock_period_ns: f64,
}

impl MockFlowEvaluator {
    pub fn new(cell_count: u64, clock_period_ns: f64) -> Self {
        MockFlowEvaluator { cell_count, clock_period_ns }
    }
}

impl FlowEvaluator for MockFlowEvaluator {
    fn evaluate(&self, params: &BTreeMap<String, ParamValue>) -> EvalOutcome {
        let utilization = params
            .get("core_utilization")
            .and_then(ParamValue::as_f64)
            .unwrap_or(mock_model::DEFAULT_UTILIZATION);
        let density = params
            .get("placement_density")
            .and_then(ParamValue::as_f64)
            .unwrap_or(mock_model::DEFAULT_DENSITY);
        let (ulo, uhi) = mock_model::UTILIZATION_LEGAL;
        if !(utilization >= ulo && utilization <= uhi) {
            return EvalOutcome::Fault {
                fault_code: "PARAM_RANGE".into(),
                message: format!("core_utilization={utilization} outside legal range [{ulo}, {uhi}]"),
            };
        }
        let (dlo, dhi) = mock_model::DENSITY_LEGAL;
        if !(density >= dlo && density <= dhi) {
            return EvalOutcome::Fault {
                fault_code: "PARAM_RANGE".into(),
                message: format!("placement_density={density} outside legal range [{dlo}, {dhi}]"),
            };
        }
        EvalOutcome::Metrics(mock_model::metrics(self.cell_count, self.clock_period_ns, utilization, density))
    }
}

/// The two-knob space explored against [`MockFlowEvaluator`]: utilization
/// and density over the mock tool's full legal ranges, defaults at the
/// template values.
pub fn mock_parameter_space() -> ParamSpace {
    let (ulo, uhi) = mock_model::UTILIZATION_LEGAL;
    let (dlo, dhi) = mock_model::DENSITY_LEGAL;
    ParamSpace {
        dims: vec![
            Dim {
                name: "core_utilization".into(),
                kind: DimKind::Continuous { lo: ulo, hi: uhi },
            },
            Dim {
                name: "placement_density".into(),
                kind: DimKind::Continuous { lo: dlo, hi: dhi },
            },
        ],
        defaults: BTreeMap::from([
            ("core_utilization".into(), ParamValue::Float(mock_model::DEFAULT_UTILIZATION)),
            ("placement_density".into(), ParamValue::Float(mock_model::DEFAULT_DENSITY)),
        ]),
        pins: BTreeSet::new(),
    }
}

/// Exploration failure modes.
#[derive(Debug, thiserror::Error)]
pub enum DseError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("invalid fault rule: {0}")]
    InvalidFaultRule(String),
    #[error("budget must be >= 1")]
    InvalidBudget,
    #[error("every trial failed; no metrics to report")]
    AllTrialsFailed,
    #[error("fault `{fault_code}` is unremediable: {detail}")]
    UnremediableFault { fault_code: String, detail: String },
    #[error("malformed fault-rule file: {0}")]
    MalformedRuleFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Check fault rules against a space: remedies must reference existing
/// dimensions, range remedies must target ranged dimensions, and shrink
/// factors must lie in (0, 1).
pub fn validate_rules(space: &ParamSpace, rules: &[FaultRule]) -> Result<(), DseError> {
    for rule in rules {
        let (dim_name, wants_range) = match &rule.remedy {
            Remedy::ShrinkRange { dim, factor } => {
                if !(*factor > 0.0 && *factor < 1.0) {
                    return Err(DseError::InvalidFaultRule(format!(
                        "shrink factor {factor} for `{dim}` must be in (0, 1)"
                    )));
                }
                (dim, true)
            }
            Remedy::ClampToBound { dim } => (dim, true),
            Remedy::ResetToDefault { dim } => (dim, false),
            Remedy::Abort => continue,
        };
        let dim = space.dim(dim_name).ok_or_else(|| {
            DseError::InvalidFaultRule(format!(
                "rule for `{}` names unknown dimension `{dim_name}`",
                rule.fault_code
            ))
        })?;
        if wants_range && matches!(dim.kind, DimKind::Categorical { .. }) {
            return Err(DseError::InvalidFaultRule(format!(
                "range remedy on categorical dimension `{dim_name}`"
            )));
        }
    }
    Ok(())
}

/// Read fault rules from their JSON array form.
pub fn load_fault_rules<R: std::io::Read>(reader: R) -> Result<Vec<FaultRule>, DseError> {
    serde_json::from_reader(reader).map_err(|e| DseError::MalformedRuleFile(e.to_string()))
}

fn default_params(space: &ParamSpace) -> BTreeMap<String, ParamValue> {
    space
        .dims
        .iter()
        .map(|d| (d.name.clone(), space.defaults[&d.name].clone()))
        .collect()
}

/// One standard normal draw (Box–Muller over two uniform draws).
fn gaussian(rng: &mut StdRng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps the log finite
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Propose the next parameter assignment.
///
/// `Random` draws each unpinned dimension uniformly. `Anneal` perturbs the
/// best successful point so far (the defaults before any success) with a
/// per-dimension Gaussian step of σ = 0.3 · range · temperature, where
/// temperature = 0.95^index and index = number of trials already run;
/// categorical knobs resample uniformly with probability = temperature.
/// Proposals always land inside the space's current bounds.
pub fn propose(
    strategy: Strategy,
    space: &ParamSpace,
    history: &[Trial],
    rng: &mut StdRng,
) -> BTreeMap<String, ParamValue> {
    let index = history.len();
    let best = history
        .iter()
        .filter_map(|t| t.outcome.objective().map(|o| (o, &t.params)))
        .fold(None::<(f64, &BTreeMap<String, ParamValue>)>, |acc, (o, p)| match acc {
            Some((bo, _)) if bo <= o => acc,
            _ => Some((o, p)),
        })
        .map(|(_, p)| p.clone())
        .unwrap_or_else(|| default_params(space));
    let temperature = ANNEAL_COOLING.powi(index as i32);

    let mut out = BTreeMap::new();
    for d in &space.dims {
        if space.pins.contains(&d.name) {
            out.insert(d.name.clone(), space.defaults[&d.name].clone());
            continue;
        }
        let value = match (&d.kind, strategy) {
            (DimKind::Continuous { lo, hi }, Strategy::Random) => {
                ParamValue::Float(rng.gen_range(*lo..*hi))
            }
            (DimKind::Integer { lo, hi }, Strategy::Random) => {
                ParamValue::Int(rng.gen_range(*lo..=*hi))
            }
            (DimKind::Categorical { values }, Strategy::Random) => {
                ParamValue::Text(values[rng.gen_range(0..values.len())].clone())
            }
            (DimKind::Continuous { lo, hi }, Strategy::Anneal) => {
                let center = best.get(&d.name).and_then(ParamValue::as_f64).unwrap_or((lo + hi) / 2.0);
                let sigma = ANNEAL_STEP_SCALE * (hi - lo) * temperature;
                ParamValue::Float((center + sigma * gaussian(rng)).clamp(*lo, *hi))
            }
            (DimKind::Integer { lo, hi }, Strategy::Anneal) => {
                let center = best.get(&d.name).and_then(ParamValue::as_f64).unwrap_or((*lo as f64 + *hi as f64) / 2.0);
                let sigma = ANNEAL_STEP_SCALE * (*hi - *lo) as f64 * temperature;
                let v = (center + sigma * gaussian(rng)).round() as i64;
                ParamValue::Int(v.clamp(*lo, *hi))
            }
            (DimKind::Categorical { values }, Strategy::Anneal) => {
                let keep = best
                    .get(&d.name)
                    .and_then(|v| match v {
                        ParamValue::Text(t) if values.contains(t) => Some(t.clone()),
                        _ => None,
                    })
                    .unwrap_or_else(|| values[0].clone());
                if rng.gen::<f64>() < temperature {
                    ParamValue::Text(values[rng.gen_range(0..values.len())].clone())
                } else {
                    ParamValue::Text(keep)
                }
            }
        };
        out.insert(d.name.clone(), value);
    }
    out
}

/// Apply the first rule matching `fault_code`/`message` to the space.
///
/// The space is returned unchanged (plus a `NoRuleMatched` record) when no
/// rule matches. An `Abort` remedy is reported through the record; acting
/// on it is [`run_dse`]'s job.
pub fn remediate_space(
    space: &ParamSpace,
    fault_code: &str,
    message: &str,
    rules: &[FaultRule],
) -> (ParamSpace, RemedyAction, Option<Remedy>) {
    let rule = rules
        .iter()
        .find(|r| r.fault_code == fault_code && message.contains(&r.match_substring));
    let Some(rule) = rule else {
        return (space.clone(), RemedyAction::NoRuleMatched, None);
    };
    let mut adjusted = space.clone();
    let action = match &rule.remedy {
        Remedy::Abort => RemedyAction::NoRuleMatched, // placeholder; run_dse aborts before recording
        Remedy::ShrinkRange { dim, factor } => {
            let default = adjusted.defaults.get(dim).and_then(ParamValue::as_f64);
            if let (Some(d), Some(slot)) = (default, adjusted.dims.iter_mut().find(|x| &x.name == dim)) {
                match &mut slot.kind {
                    DimKind::Continuous { lo, hi } => {
                        let (nl, nh) = centered_subrange(*lo, *hi, d, *factor);
                        *lo = nl;
                        *hi = nh;
                        RemedyAction::ShrunkRange { dim: dim.clone(), lo: nl, hi: nh }
                    }
                    DimKind::Integer { lo, hi } => {
                        let (nl, nh) = centered_subrange(*lo as f64, *hi as f64, d, *factor);
                        let (mut il, mut ih) = (nl.ceil() as i64, nh.floor() as i64);
                        if il >= ih {
                            // Degenerate after rounding: keep a minimal
                            // window around the default.
                            il = (d as i64 - 1).max(*lo);
                            ih = (d as i64 + 1).min(*hi);
                        }
                        if il < ih {
                            *lo = il;
                            *hi = ih;
                        }
                        RemedyAction::ShrunkRange { dim: dim.clone(), lo: *lo as f64, hi: *hi as f64 }
                    }
                    DimKind::Categorical { .. } => RemedyAction::NoRuleMatched,
                }
            } else {
                RemedyAction::NoRuleMatched
            }
        }
        Remedy::ResetToDefault { dim } => {
            adjusted.pins.insert(dim.clone());
            RemedyAction::ResetToDefault { dim: dim.clone() }
        }
        Remedy::ClampToBound { dim } => {
            if let Some(slot) = adjusted.dims.iter().find(|x| &x.name == dim) {
                let clamped = match (&slot.kind, adjusted.defaults.get(dim)) {
                    (DimKind::Continuous { lo, hi }, Some(ParamValue::Float(v))) => {
                        Some(ParamValue::Float(v.clamp(*lo, *hi)))
                    }
                    (DimKind::Integer { lo, hi }, Some(ParamValue::Int(v))) => {
                        Some(ParamValue::Int(*v.max(lo).min(hi)))
                    }
                    _ => None,
                };
                if let Some(v) = clamped {
                    adjusted.defaults.insert(dim.clone(), v);
                }
            }
            RemedyAction::ClampedToBound { dim: dim.clone() }
        }
    };
    (adjusted, action, Some(rule.remedy.clone()))
}

/// The sub-range of width `factor·(hi−lo)` centered on `default`, slid
/// inward so it stays within `[lo, hi]` (and thus keeps the default).
fn centered_subrange(lo: f64, hi: f64, default: f64, factor: f64) -> (f64, f64) {
    let width = factor * (hi - lo);
    let mut nl = default - width / 2.0;
    let mut nh = default + width / 2.0;
    if nl < lo {
        nh += lo - nl;
        nl = lo;
    }
    if nh > hi {
        nl -= nh - hi;
        nh = hi;
    }
    (nl.max(lo), nh.min(hi))
}

/// Explore `space` against `evaluator` for `budget` trials and report the
/// best assignment found.
///
/// Trial 0 evaluates the defaults; the remaining `budget − 1` trials come
/// from [`propose`]. Each faulting trial is passed through the fault rules
/// before the next proposal. Deterministic per `seed`.
pub fn run_dse(
    space: &ParamSpace,
    evaluator: &dyn FlowEvaluator,
    budget: usize,
    strategy: Strategy,
    seed: u64,
    fault_rules: &[FaultRule],
) -> Result<DseReport, DseError> {
    space.validate()?;
    validate_rules(space, fault_rules)?;
    if budget == 0 {
        return Err(DseError::InvalidBudget);
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut active = space.clone();
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut remediations: Vec<RemediationRecord> = Vec::new();
    let mut recurrences: BTreeMap<(String, String), u32> = BTreeMap::new();

    for index in 0..budget {
        let params = if index == 0 {
            default_params(&active)
        } else {
            propose(strategy, &active, &trials, &mut rng)
        };
        match evaluator.evaluate(&params) {
            EvalOutcome::Metrics(metrics) => {
                let objective = ppa_product(&metrics);
                trials.push(Trial {
                    index,
                    params,
                    outcome: TrialOutcome::Success { objective, metrics },
                });
            }
            EvalOutcome::Fault { fault_code, message } => {
                trials.push(Trial {
                    index,
                    params,
                    outcome: TrialOutcome::Failed {
                        fault_code: fault_code.clone(),
                        message: message.clone(),
                    },
                });
                let (adjusted, action, remedy) =
                    remediate_space(&active, &fault_code, &message, fault_rules);
                if let Some(Remedy::Abort) = remedy {
                    return Err(DseError::UnremediableFault {
                        fault_code,
                        detail: "an abort rule matched".into(),
                    });
                }
                if let Some(dim) = remedied_dim(&action) {
                    let count = recurrences.entry((fault_code.clone(), dim.to_string())).or_insert(0);
                    *count += 1;
                    if *count > MAX_FAULT_RECURRENCES {
                        return Err(DseError::UnremediableFault {
                            fault_code,
                            detail: format!(
                                "recurred {count} times on dimension `{dim}` (limit {MAX_FAULT_RECURRENCES})"
                            ),
                        });
                    }
                }
                remediations.push(RemediationRecord {
                    trial_index: index,
                    fault_code,
                    message,
                    action,
                });
                active = adjusted;
            }
        }
    }

    let best = trials
        .iter()
        .filter_map(|t| t.outcome.objective().map(|o| (o, t)))
        .fold(None::<(f64, &Trial)>, |acc, (o, t)| match acc {
            Some((bo, _)) if bo <= o => acc,
            _ => Some((o, t)),
        });
    let Some((best_objective, best_trial)) = best else {
        return Err(DseError::AllTrialsFailed);
    };
    let best_metrics = match &best_trial.outcome {
        TrialOutcome::Success { metrics, .. } => *metrics,
        TrialOutcome::Failed { .. } => unreachable!("best trial is a success by construction"),
    };
    let improvement = trials.first().and_then(|t0| match &t0.outcome {
        TrialOutcome::Success { metrics, .. } => Some(ppa_improvement(metrics, &best_metrics)),
        TrialOutcome::Failed { .. } => None,
    });

    Ok(DseReport {
        strategy,
        budget,
        seed,
        best_params: best_trial.params.clone(),
        best_metrics,
        best_objective,
        improvement,
        trials,
        remediations_applied: remediations,
    })
}

fn remedied_dim(action: &RemedyAction) -> Option<&str> {
    match action {
        RemedyAction::ShrunkRange { dim, .. }
        | RemedyAction::ResetToDefault { dim }
        | RemedyAction::ClampedToBound { dim } => Some(dim),
        RemedyAction::NoRuleMatched => None,
    }
}

/// Emit the plot-ready `trial_index,objective` CSV: one row per
/// successful trial, in trial order.
pub fn write_trials_csv<W: Write>(writer: W, report: &DseReport) -> Result<(), DseError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["trial_index", "objective"]).map_err(csv_err)?;
    for t in &report.trials {
        if let Some(objective) = t.outcome.objective() {
            wtr.write_record([t.index.to_string(), objective.to_string()]).map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DseError {
    DseError::MalformedRuleFile(e.to_string())
}
