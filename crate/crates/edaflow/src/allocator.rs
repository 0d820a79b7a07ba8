//! Cost-optimal machine allocation under a flow deadline.
//!
//! Each flow stage can run on one of several machine configurations
//! (vCPU counts with hourly rates); picking one configuration per stage
//! so the whole flow meets a deadline while costs stay low is a
//! multiple-choice knapsack. [`mckp_allocate`] solves it exactly with a
//! dynamic program over an integer-second time axis, maximizing the sum
//! of reciprocal stage costs `Σ 1/c_ij` subject to `Σ t_ij <= budget`.
//! [`brute_force_allocate`] enumerates every combination and serves as
//! the oracle the DP is tested against.
//!
//! Stage cost follows the cloud billing relationship
//! `cost = hourly_rate * runtime_s / 3600`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::StageKind;

/// Hourly price of one machine configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEntry {
    pub vcpus: u32,
    pub rate_per_hour: f64,
}

/// Machine configurations available for rent, sorted by vCPU count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceList {
    pub currency: String,
    pub entries: Vec<PriceEntry>,
}

impl PriceList {
    /// Structural checks: non-empty, positive rates, strictly ascending
    /// distinct vCPU counts.
    pub fn validate(&self) -> Result<(), AllocError> {
        if self.entries.is_empty() {
            return Err(AllocError::EmptyPriceList);
        }
        for e in &self.entries {
            if e.vcpus == 0 || e.rate_per_hour <= 0.0 || !e.rate_per_hour.is_finite() {
                return Err(AllocError::InvalidOption {
                    stage: "price list".into(),
                    detail: format!("{} vCPUs at {}/h", e.vcpus, e.rate_per_hour),
                });
            }
        }
        if !self.entries.windows(2).all(|w| w[0].vcpus < w[1].vcpus) {
            return Err(AllocError::InvalidOption {
                stage: "price list".into(),
                detail: "vCPU counts must be strictly ascending".into(),
            });
        }
        Ok(())
    }

    pub fn rate_for(&self, vcpus: u32) -> Option<f64> {
        self.entries.iter().find(|e| e.vcpus == vcpus).map(|e| e.rate_per_hour)
    }
}

/// One candidate configuration for one stage: runtime and billed cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigOption {
    pub vcpus: u32,
    pub runtime_s: f64,
    pub cost: f64,
}

impl ConfigOption {
    /// Build from an hourly rate; cost follows the billing relationship
    /// exactly (`rate * runtime / 3600`).
    pub fn from_rate(vcpus: u32, runtime_s: f64, rate_per_hour: f64) -> Self {
        ConfigOption { vcpus, runtime_s, cost: stage_cost(rate_per_hour, runtime_s) }
    }
}

/// All candidate configurations for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOptions {
    pub stage: StageKind,
    pub options: Vec<ConfigOption>,
}

/// The configuration chosen for one stage in a finished plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenConfig {
    pub stage: StageKind,
    pub vcpus: u32,
    pub runtime_s: f64,
    pub cost: f64,
}

/// A complete allocation: one configuration per stage plus totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub choices: Vec<ChosenConfig>,
    /// Sum of unrounded stage runtimes; always within the budget.
    pub total_time_s: f64,
    pub total_cost: f64,
    /// The solver objective `Σ 1/cost` over chosen configurations.
    pub objective_value: f64,
}

impl AllocationPlan {
    /// Chosen vCPU counts in stage order, e.g. `[4, 8, 1]`.
    pub fn vcpus(&self) -> Vec<u32> {
        self.choices.iter().map(|c| c.vcpus).collect()
    }
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("no stages to allocate")]
    NoStages,
    #[error("stage {stage} has no machine options")]
    EmptyOptions { stage: String },
    #[error("invalid option for {stage}: {detail}")]
    InvalidOption { stage: String, detail: String },
    #[error("price list has no entries")]
    EmptyPriceList,
    #[error("time budget must be positive (got {budget})")]
    InvalidBudget { budget: f64 },
    #[error("time budget {budget} exceeds the {MAX_BUDGET_S} s solver guardrail")]
    BudgetTooLarge { budget: f64 },
    #[error("no combination fits the budget; fastest possible flow takes {min_total_time_s} s")]
    Infeasible { min_total_time_s: f64 },
    #[error("{combinations} combinations exceed the exhaustive-search bound of {MAX_COMBINATIONS}")]
    TooLarge { combinations: u128 },
}

/// Budgets above this are rejected rather than allocating a huge DP table.
pub const MAX_BUDGET_S: f64 = 1_000_000.0;
/// Combination cap for exhaustive enumeration.
pub const MAX_COMBINATIONS: u128 = 1_000_000;

/// Billed cost of one stage: `rate_per_hour * runtime_s / 3600`.
pub fn stage_cost(rate_per_hour: f64, runtime_s: f64) -> f64 {
    debug_assert!(rate_per_hour > 0.0 && runtime_s > 0.0);
    rate_per_hour * runtime_s / 3600.0
}

/// The single option minimizing cost, ties broken toward fewer vCPUs.
pub fn cheapest_single_stage(options: &[ConfigOption]) -> Result<ConfigOption, AllocError> {
    options
        .iter()
        .copied()
        .min_by(|a, b| {
            a.cost
                .partial_cmp(&b.cost)
                .expect("finite costs")
                .then(a.vcpus.cmp(&b.vcpus))
        })
        .ok_or(AllocError::EmptyOptions { stage: "(single)".into() })
}

fn check_instance(stages: &[StageOptions], budget_s: f64) -> Result<(), AllocError> {
    if budget_s <= 0.0 || !budget_s.is_finite() {
        return Err(AllocError::InvalidBudget { budget: budget_s });
    }
    if budget_s > MAX_BUDGET_S {
        return Err(AllocError::BudgetTooLarge { budget: budget_s });
    }
    if stages.is_empty() {
        return Err(AllocError::NoStages);
    }
    for s in stages {
        if s.options.is_empty() {
            return Err(AllocError::EmptyOptions { stage: s.stage.to_string() });
        }
        for o in &s.options {
            if o.runtime_s <= 0.0 || o.cost <= 0.0 || !o.runtime_s.is_finite() || !o.cost.is_finite() {
                return Err(AllocError::InvalidOption {
                    stage: s.stage.to_string(),
                    detail: format!("{} vCPUs: runtime {} s, cost {}", o.vcpus, o.runtime_s, o.cost),
                });
            }
        }
    }
    Ok(())
}

fn min_total_time(stages: &[StageOptions]) -> f64 {
    stages
        .iter()
        .map(|s| s.options.iter().map(|o| o.runtime_s).fold(f64::INFINITY, f64::min))
        .sum()
}

#[derive(Clone, Copy)]
struct DpCell {
    objective: f64,
    time_s: f64,
    feasible: bool,
}

const NO_CHOICE: u8 = u8::MAX;

/// Exact deadline-constrained allocation via dynamic programming.
///
/// Maximizes `Σ 1/c_ij` (one configuration per stage) subject to
/// `Σ t_ij <= budget_s`. The DP indexes time in whole seconds: stage
/// runtimes are rounded *up* and the budget *down* for state indexing,
/// so plans never exceed the true budget; reported totals use the
/// unrounded runtimes. Ties at equal objective prefer the lower total
/// time, then the lower vCPU count, making plans deterministic.
pub fn mckp_allocate(stages: &[StageOptions], budget_s: f64) -> Result<AllocationPlan, AllocError> {
    check_instance(stages, budget_s)?;
    let budget = budget_s.floor() as usize;
    let n = stages.len();

    let rounded: Vec<Vec<usize>> = stages
        .iter()
        .map(|s| s.options.iter().map(|o| o.runtime_s.ceil() as usize).collect())
        .collect();

    let mut prev = vec![DpCell { objective: 0.0, time_s: 0.0, feasible: false }; budget + 1];
    let mut choices: Vec<Vec<u8>> = Vec::with_capacity(n);

    for (i, stage) in stages.iter().enumerate() {
        assert!(stage.options.len() < NO_CHOICE as usize, "too many options per stage");
        let mut next = vec![DpCell { objective: 0.0, time_s: 0.0, feasible: false }; budget + 1];
        let mut choice_row = vec![NO_CHOICE; budget + 1];
        for w in 0..=budget {
            let mut best: Option<(DpCell, u8)> = None;
            for (j, opt) in stage.options.iter().enumerate() {
                let t = rounded[i][j];
                if t > w {
                    continue;
                }
                let base = if i == 0 {
                    DpCell { objective: 0.0, time_s: 0.0, feasible: true }
                } else {
                    prev[w - t]
                };
                if !base.feasible {
                    continue;
                }
                let cand = DpCell {
                    objective: base.objective + 1.0 / opt.cost,
                    time_s: base.time_s + opt.runtime_s,
                    feasible: true,
                };
                let better = match &best {
                    None => true,
                    Some((b, _)) => {
                        cand.objective > b.objective
                            || (cand.objective == b.objective && cand.time_s < b.time_s)
                    }
                };
                if better {
                    best = Some((cand, j as u8));
                }
            }
            if let Some((cell, j)) = best {
                next[w] = cell;
                choice_row[w] = j;
            }
        }
        prev = next;
        choices.push(choice_row);
    }

    if !prev[budget].feasible {
        return Err(AllocError::Infeasible { min_total_time_s: min_total_time(stages) });
    }

    Ok(reconstruct(stages, &rounded, &choices, budget))
}

/// Deadline-constrained allocation minimizing total cost instead of the
/// reciprocal-cost objective; same DP skeleton, kept as a comparison mode.
pub fn mckp_allocate_min_cost(
    stages: &[StageOptions],
    budget_s: f64,
) -> Result<AllocationPlan, AllocError> {
    check_instance(stages, budget_s)?;
    let budget = budget_s.floor() as usize;
    let n = stages.len();

    let rounded: Vec<Vec<usize>> = stages
        .iter()
        .map(|s| s.options.iter().map(|o| o.runtime_s.ceil() as usize).collect())
        .collect();

    // Cell objective holds the running cost; smaller is better here.
    let mut prev = vec![DpCell { objective: 0.0, time_s: 0.0, feasible: false }; budget + 1];
    let mut choices: Vec<Vec<u8>> = Vec::with_capacity(n);

    for (i, stage) in stages.iter().enumerate() {
        let mut next = vec![DpCell { objective: 0.0, time_s: 0.0, feasible: false }; budget + 1];
        let mut choice_row = vec![NO_CHOICE; budget + 1];
        for w in 0..=budget {
            let mut best: Option<(DpCell, u8)> = None;
            for (j, opt) in stage.options.iter().enumerate() {
                let t = rounded[i][j];
                if t > w {
                    continue;
                }
                let base = if i == 0 {
                    DpCell { objective: 0.0, time_s: 0.0, feasible: true }
                } else {
                    prev[w - t]
                };
                if !base.feasible {
                    continue;
                }
                let cand = DpCell {
                    objective: base.objective + opt.cost,
                    time_s: base.time_s + opt.runtime_s,
                    feasible: true,
                };
                let better = match &best {
                    None => true,
                    Some((b, _)) => {
                        cand.objective < b.objective
                            || (cand.objective == b.objective && cand.time_s < b.time_s)
                    }
                };
                if better {
                    best = Some((cand, j as u8));
                }
            }
            if let Some((cell, j)) = best {
                next[w] = cell;
                choice_row[w] = j;
            }
        }
        prev = next;
        choices.push(choice_row);
    }

    if !prev[budget].feasible {
        return Err(AllocError::Infeasible { min_total_time_s: min_total_time(stages) });
    }

    Ok(reconstruct(stages, &rounded, &choices, budget))
}

fn reconstruct(
    stages: &[StageOptions],
    rounded: &[Vec<usize>],
    choices: &[Vec<u8>],
    budget: usize,
) -> AllocationPlan {
    let mut picked = vec![0usize; stages.len()];
    let mut w = budget;
    for i in (0..stages.len()).rev() {
        let j = choices[i][w];
        assert_ne!(j, NO_CHOICE, "reconstruction walked into an infeasible cell");
        picked[i] = j as usize;
        w -= rounded[i][j as usize];
    }

    let mut plan = AllocationPlan {
        choices: Vec::with_capacity(stages.len()),
        total_time_s: 0.0,
        total_cost: 0.0,
        objective_value: 0.0,
    };
    for (i, stage) in stages.iter().enumerate() {
        let o = stage.options[picked[i]];
        plan.choices.push(ChosenConfig {
            stage: stage.stage,
            vcpus: o.vcpus,
            runtime_s: o.runtime_s,
            cost: o.cost,
        });
        plan.total_time_s += o.runtime_s;
        plan.total_cost += o.cost;
        plan.objective_value += 1.0 / o.cost;
    }
    plan
}

/// Exhaustive oracle: enumerates every combination and keeps the feasible
/// one maximizing `Σ 1/c_ij`. Ties broken by lower total cost, then lower
/// total time, then the lexicographically smaller vCPU vector. Instances
/// above [`MAX_COMBINATIONS`] are rejected.
pub fn brute_force_allocate(
    stages: &[StageOptions],
    budget_s: f64,
) -> Result<AllocationPlan, AllocError> {
    check_instance(stages, budget_s)?;
    let combinations: u128 = stages.iter().map(|s| s.options.len() as u128).product();
    if combinations > MAX_COMBINATIONS {
        return Err(AllocError::TooLarge { combinations });
    }

    let n = stages.len();
    let mut index = vec![0usize; n];
    let mut best: Option<AllocationPlan> = None;

    'combos: loop {
        let mut time = 0.0;
        let mut cost = 0.0;
        let mut objective = 0.0;
        for (i, stage) in stages.iter().enumerate() {
            let o = stage.options[index[i]];
            time += o.runtime_s;
            cost += o.cost;
            objective += 1.0 / o.cost;
        }
        if time <= budget_s {
            let candidate_better = match &best {
                None => true,
                Some(b) => {
                    let vc: Vec<u32> = (0..n).map(|i| stages[i].options[index[i]].vcpus).collect();
                    objective > b.objective_value
                        || (objective == b.objective_value
                            && (cost < b.total_cost
                                || (cost == b.total_cost
                                    && (time < b.total_time_s
                                        || (time == b.total_time_s && vc < b.vcpus())))))
                }
            };
            if candidate_better {
                let choices = (0..n)
                    .map(|i| {
                        let o = stages[i].options[index[i]];
                        ChosenConfig {
                            stage: stages[i].stage,
                            vcpus: o.vcpus,
                            runtime_s: o.runtime_s,
                            cost: o.cost,
                        }
                    })
                    .collect();
                best = Some(AllocationPlan {
                    choices,
                    total_time_s: time,
                    total_cost: cost,
                    objective_value: objective,
                });
            }
        }

        // Odometer increment over option indices; enumeration is complete
        // once every position wraps back to zero.
        let mut i = n;
        while i > 0 {
            i -= 1;
            index[i] += 1;
            if index[i] < stages[i].options.len() {
                continue 'combos;
            }
            index[i] = 0;
        }
        break;
    }

    best.ok_or(AllocError::Infeasible { min_total_time_s: min_total_time(stages) })
}
