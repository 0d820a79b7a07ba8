//! Per-stage runtime prediction from historical flow runs.
//!
//! The predictor is a natively implemented bagged ensemble of regression
//! trees — no external ML dependency. Feature vector per sample:
//! `[ln(cell_count), stage one-hot (5), vcpus]`. Because stage runtimes
//! span orders of magnitude, trees fit `ln(runtime)` and predictions are
//! exponentiated back; with a multiplicative data-generating process this
//! makes leaf averaging behave like relative-error smoothing.
//!
//! Training is single-threaded and fully deterministic for a given seed:
//! the same seed yields bit-identical trees, predictions, and serialized
//! model files.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::mock_model;
use crate::flow::StageKind;

/// One observed (or synthesized) stage runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSample {
    pub cell_count: u64,
    pub stage: StageKind,
    pub vcpus: u32,
    pub runtime_s: f64,
}

/// Number of trees in the ensemble.
pub const N_TREES: usize = 50;
/// Maximum tree depth (root at depth 0).
pub const MAX_DEPTH: usize = 8;
/// Bootstrap fraction: each tree draws `n` samples with replacement.
pub const BOOTSTRAP_FRACTION: f64 = 1.0;
/// Smallest node still considered for splitting.
pub const MIN_SAMPLES_SPLIT: usize = 2;
/// Smallest admissible child node: splits producing a smaller side are
/// discarded, so every leaf aggregates at least this many samples.
pub const MIN_SAMPLES_LEAF: usize = 1;
/// Fraction of samples held out for error measurement.
pub const HOLDOUT_FRACTION: f64 = 0.2;
/// Minimum training-set size.
pub const MIN_SAMPLES: usize = 50;

const FEATURES: usize = 7; // ln(cells) + 5 stage indicators + vcpus
const MODEL_KIND: &str = "tree-ensemble";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// One regression tree over the feature space, nodes in a flat arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, x: &[f64; FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// How well training went; stored inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_samples: usize,
    pub n_train: usize,
    pub n_holdout: usize,
    /// Mean absolute percentage error on the held-out 20%, in percent.
    pub mean_abs_pct_error_on_holdout: f64,
    pub seed: u64,
}

/// A trained runtime model, persistable as a plain JSON tree dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model_version: u32,
    pub model_kind: String,
    pub trees: Vec<Tree>,
    pub training_summary: TrainingSummary,
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("not enough data to train: {detail}")]
    InsufficientData { detail: String },
    #[error("invalid sample at index {index}: {detail}")]
    InvalidSample { index: usize, detail: String },
    #[error("model has no trees; train or load a model first")]
    UntrainedModel,
    #[error("stage `{0}` has no runtime model (concrete stages only)")]
    UnknownStage(StageKind),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("unsupported model file: {0}")]
    ModelFormat(String),
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stage_index(stage: StageKind) -> Option<usize> {
    StageKind::FLOW.iter().position(|s| *s == stage)
}

fn features(cell_count: u64, stage: StageKind, vcpus: u32) -> Result<[f64; FEATURES], PredictError> {
    let idx = stage_index(stage).ok_or(PredictError::UnknownStage(stage))?;
    let mut x = [0.0; FEATURES];
    x[0] = (cell_count as f64).ln();
    x[1 + idx] = 1.0;
    x[6] = vcpus as f64;
    Ok(x)
}

/// Train the ensemble on `samples`.
///
/// Holds out a seed-deterministic 20% for error measurement, fits
/// [`N_TREES`] bootstrap trees on the remaining 80%, and records the
/// holdout MAPE in the summary. Requires at least [`MIN_SAMPLES`] samples
/// covering at least two distinct vCPU counts.
pub fn train(samples: &[RuntimeSample], seed: u64) -> Result<TrainedModel, PredictError> {
    for (index, s) in samples.iter().enumerate() {
        if s.cell_count == 0 || s.vcpus == 0 || s.runtime_s <= 0.0 || !s.runtime_s.is_finite() {
            return Err(PredictError::InvalidSample {
                index,
                detail: format!("{s:?}"),
            });
        }
        if stage_index(s.stage).is_none() {
            return Err(PredictError::InvalidSample {
                index,
                detail: "samples must name a concrete stage".into(),
            });
        }
    }
    if samples.len() < MIN_SAMPLES {
        return Err(PredictError::InsufficientData {
            detail: format!("{} samples, need at least {MIN_SAMPLES}", samples.len()),
        });
    }
    let distinct_vcpus: BTreeSet<u32> = samples.iter().map(|s| s.vcpus).collect();
    if distinct_vcpus.len() < 2 {
        return Err(PredictError::InsufficientData {
            detail: "samples cover a single vCPU count; need at least two".into(),
        });
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = ((samples.len() as f64) * HOLDOUT_FRACTION).round() as usize;
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    let xs: Vec<[f64; FEATURES]> = samples
        .iter()
        .map(|s| features(s.cell_count, s.stage, s.vcpus).expect("validated above"))
        .collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.runtime_s.ln()).collect();

    let n_train = train_idx.len();
    let n_bootstrap = ((n_train as f64) * BOOTSTRAP_FRACTION).round() as usize;
    let mut trees = Vec::with_capacity(N_TREES);
    for _ in 0..N_TREES {
        let bag: Vec<usize> =
            (0..n_bootstrap).map(|_| train_idx[rng.gen_range(0..n_train)]).collect();
        trees.push(grow_tree(&xs, &ys, bag));
    }

    // Holdout error, measured on the raw runtime scale.
    let mut ape_sum = 0.0;
    for &i in holdout_idx {
        let pred = predict_with_trees(&trees, &xs[i]);
        ape_sum += ((pred - samples[i].runtime_s) / samples[i].runtime_s).abs();
    }
    let mape = if holdout_idx.is_empty() { 0.0 } else { 100.0 * ape_sum / holdout_idx.len() as f64 };

    Ok(TrainedModel {
        model_version: MODEL_VERSION,
        model_kind: MODEL_KIND.into(),
        trees,
        training_summary: TrainingSummary {
            n_samples: samples.len(),
            n_train,
            n_holdout: holdout_idx.len(),
            mean_abs_pct_error_on_holdout: mape,
            seed,
        },
    })
}

fn grow_tree(xs: &[[f64; FEATURES]], ys: &[f64], indices: Vec<usize>) -> Tree {
    let mut nodes = Vec::new();
    grow_node(xs, ys, indices, 0, &mut nodes);
    Tree { nodes }
}

/// Grow one node (recursively), returning its arena index.
fn grow_node(
    xs: &[[f64; FEATURES]],
    ys: &[f64],
    indices: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let mean = indices.iter().map(|&i| ys[i]).sum::<f64>() / indices.len() as f64;
    if depth >= MAX_DEPTH || indices.len() < MIN_SAMPLES_SPLIT {
        nodes.push(TreeNode::Leaf { value: mean });
        return nodes.len() - 1;
    }

    // Exhaustive best-split search: for each feature, scan midpoints
    // between consecutive distinct values minimizing summed squared error.
    let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
    #[allow(clippy::needless_range_loop)] // `f` addresses the feature axis of the [sample][feature] table
    for f in 0..FEATURES {
        let mut sorted = indices.clone();
        sorted.sort_by(|&a, &b| xs[a][f].partial_cmp(&xs[b][f]).expect("finite features"));
        let total_sum: f64 = sorted.iter().map(|&i| ys[i]).sum();
        let total_sq: f64 = sorted.iter().map(|&i| ys[i] * ys[i]).sum();
        let n = sorted.len() as f64;
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..sorted.len() - 1 {
            let yi = ys[sorted[k]];
            left_sum += yi;
            left_sq += yi * yi;
            let xa = xs[sorted[k]][f];
            let xb = xs[sorted[k + 1]][f];
            if xa == xb {
                continue; // no boundary between equal values
            }
            if k + 1 < MIN_SAMPLES_LEAF || sorted.len() - (k + 1) < MIN_SAMPLES_LEAF {
                continue; // a side would fall below the leaf floor
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let sse_left = left_sq - left_sum * left_sum / nl;
            let sse_right = (total_sq - left_sq) - (total_sum - left_sum).powi(2) / nr;
            let sse = sse_left + sse_right;
            // Midpoint threshold; when the two values are so close the
            // midpoint rounds onto one of them, fall back to the left
            // value so both partitions stay non-empty.
            let mid = (xa + xb) / 2.0;
            let threshold = if xa < mid && mid < xb { mid } else { xa };
            let better = match best {
                None => true,
                Some((b_sse, b_f, b_thr)) => {
                    sse < b_sse || (sse == b_sse && (f < b_f || (f == b_f && threshold < b_thr)))
                }
            };
            if better {
                best = Some((sse, f, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        // Every feature is constant over this node.
        nodes.push(TreeNode::Leaf { value: mean });
        return nodes.len() - 1;
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| xs[i][feature] <= threshold);

    // Reserve this node's slot, then grow children.
    let slot = nodes.len();
    nodes.push(TreeNode::Leaf { value: mean }); // placeholder
    let left = grow_node(xs, ys, left_idx, depth + 1, nodes);
    let right = grow_node(xs, ys, right_idx, depth + 1, nodes);
    nodes[slot] = TreeNode::Split { feature, threshold, left, right };
    slot
}

fn predict_with_trees(trees: &[Tree], x: &[f64; FEATURES]) -> f64 {
    let sum: f64 = trees.iter().map(|t| t.predict(x)).sum();
    (sum / trees.len() as f64).exp()
}

/// Predict the runtime in seconds of `stage` for a design of
/// `cell_count` cells on `vcpus` cores.
pub fn predict(
    model: &TrainedModel,
    cell_count: u64,
    stage: StageKind,
    vcpus: u32,
) -> Result<f64, PredictError> {
    if model.trees.is_empty() {
        return Err(PredictError::UntrainedModel);
    }
    if cell_count == 0 {
        return Err(PredictError::InvalidQuery("cell_count must be >= 1".into()));
    }
    if vcpus == 0 {
        return Err(PredictError::InvalidQuery("vcpus must be >= 1".into()));
    }
    let x = features(cell_count, stage, vcpus)?;
    Ok(predict_with_trees(&model.trees, &x))
}

/// Synthesize a labeled dataset from the mock runtime model with
/// multiplicative noise `uniform(1-amplitude, 1+amplitude)`.
///
/// Cell counts are log-uniform over [500, 200000]; stages and vCPU counts
/// (1/2/4/8) uniform. Deterministic per seed.
pub fn generate_synthetic_dataset_with_noise(
    seed: u64,
    n: usize,
    noise_amplitude: f64,
) -> Vec<RuntimeSample> {
    let mut rng = StdRng::seed_from_u64(seed);
    let vcpu_choices = [1u32, 2, 4, 8];
    let (lo, hi) = (500.0f64.ln(), 200_000.0f64.ln());
    (0..n)
        .map(|_| {
            let stage = StageKind::FLOW[rng.gen_range(0..StageKind::FLOW.len())];
            let vcpus = vcpu_choices[rng.gen_range(0..vcpu_choices.len())];
            let cell_count = rng.gen_range(lo..hi).exp().round() as u64;
            let noise = if noise_amplitude > 0.0 {
                rng.gen_range(1.0 - noise_amplitude..1.0 + noise_amplitude)
            } else {
                1.0
            };
            RuntimeSample {
                cell_count,
                stage,
                vcpus,
                runtime_s: mock_model::runtime_s(stage, cell_count, vcpus) * noise,
            }
        })
        .collect()
}

/// [`generate_synthetic_dataset_with_noise`] at the standard ±10% noise.
pub fn generate_synthetic_dataset(seed: u64, n: usize) -> Vec<RuntimeSample> {
    generate_synthetic_dataset_with_noise(seed, n, 0.1)
}

/// Read samples from CSV with header `cell_count,stage,vcpus,runtime_s`
/// (stage names lowercase).
pub fn load_samples_csv<R: Read>(reader: R) -> Result<Vec<RuntimeSample>, PredictError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RuntimeSample>().enumerate() {
        let sample = row.map_err(|e| PredictError::MalformedDataset(format!("row {}: {e}", i + 2)))?;
        out.push(sample);
    }
    Ok(out)
}

/// Write samples as CSV, the inverse of [`load_samples_csv`].
pub fn save_samples_csv<W: Write>(writer: W, samples: &[RuntimeSample]) -> Result<(), PredictError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in samples {
        wtr.serialize(s).map_err(|e| PredictError::MalformedDataset(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Persist a model as a versioned JSON tree dump.
pub fn save_model(path: &Path, model: &TrainedModel) -> Result<(), PredictError> {
    let json = serde_json::to_string_pretty(model)
        .map_err(|e| PredictError::ModelFormat(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a model saved by [`save_model`], rejecting unknown versions/kinds.
pub fn load_model(path: &Path) -> Result<TrainedModel, PredictError> {
    let text = std::fs::read_to_string(path)?;
    let model: TrainedModel =
        serde_json::from_str(&text).map_err(|e| PredictError::ModelFormat(e.to_string()))?;
    if model.model_kind != MODEL_KIND {
        return Err(PredictError::ModelFormat(format!("unknown model kind `{}`", model.model_kind)));
    }
    if model.model_version != MODEL_VERSION {
        return Err(PredictError::ModelFormat(format!(
            "model version {} unsupported (expected {MODEL_VERSION})",
            model.model_version
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_dataset_is_deterministic_and_in_range() {
        let a = generate_synthetic_dataset(42, 100);
        let b = generate_synthetic_dataset(42, 100);
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(43, 100);
        assert_ne!(a, c);
        for s in &a {
            assert!((500..=200_000).contains(&s.cell_count));
            assert!([1, 2, 4, 8].contains(&s.vcpus));
            assert!(s.runtime_s > 0.0);
        }
    }

    #[test]
    fn noise_free_samples_match_the_mock_model_exactly() {
        for s in generate_synthetic_dataset_with_noise(7, 50, 0.0) {
            assert_eq!(s.runtime_s, mock_model::runtime_s(s.stage, s.cell_count, s.vcpus));
        }
    }

    #[test]
    fn noisy_samples_stay_within_the_noise_band() {
        for s in generate_synthetic_dataset(7, 200) {
            let clean = mock_model::runtime_s(s.stage, s.cell_count, s.vcpus);
            let ratio = s.runtime_s / clean;
            assert!((0.9..1.1).contains(&ratio), "noise ratio {ratio}");
        }
    }

    #[test]
    fn training_needs_enough_varied_data() {
        let few = generate_synthetic_dataset(1, 10);
        assert!(matches!(train(&few, 1), Err(PredictError::InsufficientData { .. })));

        let mut uniform = generate_synthetic_dataset(1, 100);
        for s in &mut uniform {
            s.vcpus = 4;
        }
        assert!(matches!(train(&uniform, 1), Err(PredictError::InsufficientData { .. })));
    }

    #[test]
    fn noise_free_holdout_error_is_small() {
        let samples = generate_synthetic_dataset_with_noise(7, 400, 0.0);
        let model = train(&samples, 7).unwrap();
        let mape = model.training_summary.mean_abs_pct_error_on_holdout;
        assert!(mape <= 5.0, "noise-free holdout MAPE {mape}%");
        assert_eq!(model.training_summary.n_samples, 400);
        assert_eq!(model.training_summary.n_holdout, 80);
    }

    #[test]
    fn noisy_holdout_error_stays_bounded() {
        let samples = generate_synthetic_dataset(7, 400);
        let model = train(&samples, 7).unwrap();
        let mape = model.training_summary.mean_abs_pct_error_on_holdout;
        assert!(mape <= 15.0, "noisy holdout MAPE {mape}%");
    }

    #[test]
    fn training_points_are_reproduced_closely() {
        let samples = generate_synthetic_dataset_with_noise(5, 400, 0.0);
        let model = train(&samples, 11).unwrap();
        // Spot-check a handful of training points: predictions land within
        // ±10% of the exact mock value.
        for s in samples.iter().step_by(37) {
            let pred = predict(&model, s.cell_count, s.stage, s.vcpus).unwrap();
            let rel = (pred - s.runtime_s).abs() / s.runtime_s;
            assert!(rel <= 0.10, "{s:?}: predicted {pred}, rel err {rel}");
        }
    }

    #[test]
    fn more_vcpus_never_predict_meaningfully_slower() {
        let samples = generate_synthetic_dataset_with_noise(5, 400, 0.0);
        let model = train(&samples, 11).unwrap();
        let mut ok = 0;
        let mut total = 0;
        for stage in StageKind::FLOW {
            for i in 0..20 {
                let cells = (800.0 * 1.32f64.powi(i)) as u64;
                let fast = predict(&model, cells, stage, 8).unwrap();
                let slow = predict(&model, cells, stage, 1).unwrap();
                total += 1;
                if fast <= slow * 1.05 {
                    ok += 1;
                }
            }
        }
        assert!(
            ok as f64 >= 0.95 * total as f64,
            "monotonicity held on {ok}/{total} probes"
        );
    }

    #[test]
    fn same_seed_gives_identical_models_and_predictions() {
        let samples = generate_synthetic_dataset(31, 200);
        let a = train(&samples, 99).unwrap();
        let b = train(&samples, 99).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for i in 0..100 {
            let cells = 500 + i * 1997;
            let stage = StageKind::FLOW[(i % 5) as usize];
            let vcpus = [1, 2, 4, 8][(i % 4) as usize];
            assert_eq!(
                predict(&a, cells, stage, vcpus).unwrap(),
                predict(&b, cells, stage, vcpus).unwrap()
            );
        }
    }

    #[test]
    fn model_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let samples = generate_synthetic_dataset(31, 120);
        let model = train(&samples, 5).unwrap();
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
        assert_eq!(loaded.model_kind, "tree-ensemble");
        assert_eq!(loaded.trees.len(), N_TREES);
    }

    #[test]
    fn unknown_model_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let samples = generate_synthetic_dataset(31, 120);
        let mut model = train(&samples, 5).unwrap();
        model.model_version = 99;
        save_model(&path, &model).unwrap();
        assert!(matches!(load_model(&path), Err(PredictError::ModelFormat(_))));
    }

    #[test]
    fn empty_model_and_bad_queries_error() {
        let samples = generate_synthetic_dataset(31, 120);
        let mut model = train(&samples, 5).unwrap();
        model.trees.clear();
        assert!(matches!(
            predict(&model, 1000, StageKind::Placement, 4),
            Err(PredictError::UntrainedModel)
        ));
        let model = train(&samples, 5).unwrap();
        assert!(matches!(
            predict(&model, 1000, StageKind::FullFlow, 4),
            Err(PredictError::UnknownStage(_))
        ));
        assert!(matches!(
            predict(&model, 0, StageKind::Placement, 4),
            Err(PredictError::InvalidQuery(_))
        ));
        assert!(matches!(
            predict(&model, 1000, StageKind::Placement, 0),
            Err(PredictError::InvalidQuery(_))
        ));
    }

    #[test]
    fn csv_round_trip_preserves_samples() {
        let samples = generate_synthetic_dataset(8, 25);
        let mut buf = Vec::new();
        save_samples_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cell_count,stage,vcpus,runtime_s\n"), "{text}");
        assert!(text.contains(",placement,") || text.contains(",routing,"));
        let loaded = load_samples_csv(buf.as_slice()).unwrap();
        assert_eq!(loaded, samples);
    }

    #[test]
    fn malformed_csv_is_reported_with_the_row() {
        let bad = "cell_count,stage,vcpus,runtime_s\n100,placement,4,not_a_number\n";
        match load_samples_csv(bad.as_bytes()) {
            Err(PredictError::MalformedDataset(msg)) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("expected MalformedDataset, got {other:?}"),
        }
    }
}
