//! End-to-end orchestration: split, resolve the task, encode, search,
//! retrain the winner, evaluate on test and emit predictions.

mod artifact;
mod search;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsdl::{serialize, Schema, TargetSpec, TargetType};
use crate::features::{self, DroppedFeature, FeatureConfig, FeatureMatrix, FeaturePlan};
use crate::models::{self, Hyperparameters, Interaction, Model, ModelError, TrainingData};
use crate::table::{split_indices, Dataset, Fractions, SplitPolicy, SplitSpec};
use crate::task::{
    binary_metrics, numeric_metrics, ranking_metrics, resolve_task, set_metrics, MetricError, MetricTable, ModelId,
    RankedOutput, SelectionMetric, SetOutput, TaskBinding, TruthRelevance, TruthSets,
};

pub use artifact::{schema_fingerprint, ListVocabularies, ModelArtifact, PredictionTable, FORMAT_VERSION};
pub use search::{
    plan_trials, run_trials, select_winner, trial_seed, PlannedTrial, TrialFailure, TrialRecord, TrialStatus,
};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_BUDGET: usize = 20;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    pub budget: usize,
    pub fractions: Fractions,
    pub features: FeatureConfig,
    pub exclude_seen: bool,
    /// Trial worker threads; 0 uses one per core.
    pub workers: usize,
    pub record_timings: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: DEFAULT_SEED,
            budget: DEFAULT_BUDGET,
            fractions: Fractions::default(),
            features: FeatureConfig::default(),
            exclude_seen: false,
            workers: 0,
            record_timings: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Split,
    Features,
    Search,
    Retrain,
    Evaluate,
    Predict,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Split => "split",
            Stage::Features => "features",
            Stage::Search => "search",
            Stage::Retrain => "retrain",
            Stage::Evaluate => "evaluate",
            Stage::Predict => "predict",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("target {target_index}: {stage} stage: {message}")]
pub struct EngineError {
    pub target_index: usize,
    pub stage: Stage,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinnerSummary {
    pub trial_index: usize,
    pub model_id: ModelId,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub model_id: ModelId,
    pub metrics: MetricTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub policy: SplitPolicy,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
    /// Rows left out because the key, label or relevance cell was missing.
    pub dropped_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub raw_dimension: usize,
    pub output_dimension: usize,
    pub dropped: Vec<DroppedFeature>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub split: f64,
    pub features: f64,
    pub search: f64,
    pub retrain: f64,
    pub evaluate: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target_index: usize,
    pub task_type: TargetType,
    pub selection_metric: SelectionMetric,
    pub winner: WinnerSummary,
    /// Test metrics of the winner retrained on train + validation.
    pub metrics: MetricTable,
    /// Validation metrics of the winning trial.
    pub validation_metrics: MetricTable,
    /// Test metrics of the task's baseline, fitted the same way.
    pub baseline: BaselineSummary,
    pub split: SplitSummary,
    pub features: Option<FeatureSummary>,
    pub trials: Vec<TrialRecord>,
    pub seed: u64,
    pub engine_version: String,
    /// Wall-clock milliseconds per stage; `null` unless timings were
    /// requested, so reports stay byte-reproducible by default.
    pub timings_ms: Option<Timings>,
}

pub struct TargetOutcome {
    pub binding: TaskBinding,
    pub report: EvalReport,
    pub artifact: ModelArtifact,
    pub predictions: PredictionTable,
}

pub struct RunResult {
    pub targets: Vec<TargetOutcome>,
}

/// Runs every target of `schema` over `dataset`, sequentially.
pub fn run_pipeline(schema: &Arc<Schema>, dataset: &Dataset, config: &EngineConfig) -> Result<RunResult, EngineError> {
    let config_error = |message: String| EngineError {
        target_index: 0,
        stage: Stage::Config,
        message,
    };
    if config.budget == 0 {
        return Err(config_error("budget must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| config_error(e.to_string()))?;
    let targets = (0..schema.targets.len())
        .map(|i| run_target(schema, dataset, i, config, &pool))
        .collect::<Result<_, _>>()?;
    Ok(RunResult { targets })
}

/// Rows whose key, label and relevance cells are all present.
fn usable_rows(data: &Dataset, target: &TargetSpec) -> Vec<usize> {
    let mut cols = vec![&target.key_col, &target.label_col];
    cols.extend(target.relevance_col.as_ref());
    let cols: Vec<_> = cols
        .into_iter()
        .map(|c| data.column(c).expect("target columns validated"))
        .collect();
    (0..data.rows())
        .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
        .collect()
}

fn scalar_labels(data: &Dataset, label_col: &str) -> Vec<f64> {
    let col = data.column(label_col).expect("label column validated");
    (0..data.rows()).map(|r| col.as_f64(r).unwrap_or(f64::NAN)).collect()
}

fn scalar_table(task: TargetType, predictions: &[f64], y: &[f64]) -> Result<MetricTable, MetricError> {
    match task {
        TargetType::Binary => {
            let labels: Vec<u8> = y.iter().map(|&v| u8::from(v == 1.0)).collect();
            binary_metrics(predictions, &labels)
        }
        _ => numeric_metrics(predictions, y),
    }
}

fn interactions(data: &Dataset, target: &TargetSpec) -> Vec<Interaction> {
    let key = data.column(&target.key_col).expect("key column validated");
    let label = data.column(&target.label_col).expect("label column validated");
    let rel_col = target.relevance_col.as_deref().expect("list target has relevance");
    let rel = data.column(rel_col).expect("relevance column validated");
    (0..data.rows())
        .map(|r| Interaction {
            key: key.cell_string(r).unwrap_or_default(),
            label: label.cell_string(r).unwrap_or_default(),
            relevance: rel.as_f64(r).unwrap_or(0.0),
        })
        .collect()
}

/// Held-out truth: per key, the largest relevance seen for each label.
fn truth_of(interactions: &[Interaction]) -> TruthRelevance {
    let mut truth = TruthRelevance::new();
    for t in interactions {
        let slot = truth
            .entry(t.key.clone())
            .or_default()
            .entry(t.label.clone())
            .or_insert(f64::NEG_INFINITY);
        *slot = slot.max(t.relevance);
    }
    truth
}

fn vocabularies(interactions: &[Interaction]) -> ListVocabularies {
    let candidates: BTreeSet<String> = interactions.iter().map(|t| t.label.clone()).collect();
    let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for t in interactions.iter().filter(|t| t.relevance > 0.0) {
        seen.entry(t.key.clone()).or_default().insert(t.label.clone());
    }
    ListVocabularies {
        candidates: candidates.into_iter().collect(),
        seen,
    }
}

fn list_table(
    task: TargetType,
    model: &Model,
    vocab: &ListVocabularies,
    truth: &TruthRelevance,
    k: u64,
    exclude_seen: bool,
) -> Result<MetricTable, TrialFailure> {
    let mut ranked = RankedOutput::new();
    for key in truth.keys() {
        ranked.insert(
            key.clone(),
            artifact::rank_key(model, vocab, key, k as usize, exclude_seen)?,
        );
    }
    Ok(match task {
        TargetType::OrderedList => ranking_metrics(&ranked, truth, k)?,
        _ => {
            let predicted: SetOutput = ranked
                .into_iter()
                .map(|(key, list)| (key, list.into_iter().map(|(l, _)| l).collect()))
                .collect();
            let sets: TruthSets = truth
                .iter()
                .map(|(key, rel)| {
                    let positives = rel.iter().filter(|(_, r)| **r > 0.0).map(|(l, _)| l.clone()).collect();
                    (key.clone(), positives)
                })
                .collect();
            set_metrics(&predicted, &sets, k)?
        }
    })
}

/// Training and evaluation inputs for one target.
#[allow(clippy::large_enum_variant)]
enum Prepared {
    Scalar {
        plan: FeaturePlan,
        x_train: FeatureMatrix,
        y_train: Vec<f64>,
        x_val: FeatureMatrix,
        y_val: Vec<f64>,
        x_fit: FeatureMatrix,
        y_fit: Vec<f64>,
        x_test: FeatureMatrix,
        y_test: Vec<f64>,
    },
    List {
        train: Vec<Interaction>,
        train_vocab: ListVocabularies,
        val_truth: TruthRelevance,
        fit: Vec<Interaction>,
        fit_vocab: ListVocabularies,
        test_truth: TruthRelevance,
    },
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn run_target(
    schema: &Arc<Schema>,
    dataset: &Dataset,
    target_index: usize,
    config: &EngineConfig,
    pool: &rayon::ThreadPool,
) -> Result<TargetOutcome, EngineError> {
    let fail = |stage: Stage| {
        move |e: &dyn fmt::Display| EngineError {
            target_index,
            stage,
            message: e.to_string(),
        }
    };
    let started = Instant::now();
    let mut timings = Timings::default();
    let target = &schema.targets[target_index];
    let binding = resolve_task(target, schema);
    let task = binding.task_type;
    let k = target.list_size.unwrap_or(0);

    // split
    let t0 = Instant::now();
    let usable = usable_rows(dataset, target);
    let data = dataset.take(&usable);
    let spec = SplitSpec::default_for(schema, target, config.fractions, config.seed);
    let idx = split_indices(&data, &spec).map_err(|e| fail(Stage::Split)(&e))?;
    let (train, val, test) = (data.take(&idx.train), data.take(&idx.validation), data.take(&idx.test));
    let split_summary = SplitSummary {
        policy: spec.policy.clone(),
        train_rows: train.rows(),
        validation_rows: val.rows(),
        test_rows: test.rows(),
        dropped_rows: dataset.rows() - usable.len(),
    };
    timings.split = ms_since(t0);

    // features or interactions
    let t0 = Instant::now();
    let prepared = if task.is_list() {
        let train_i = interactions(&train, target);
        let val_i = interactions(&val, target);
        let mut fit = train_i.clone();
        fit.extend(val_i.iter().cloned());
        Prepared::List {
            train_vocab: vocabularies(&train_i),
            val_truth: truth_of(&val_i),
            fit_vocab: vocabularies(&fit),
            test_truth: truth_of(&interactions(&test, target)),
            train: train_i,
            fit,
        }
    } else {
        let plan = features::fit(&train, schema, target, config.features).map_err(|e| fail(Stage::Features)(&e))?;
        let apply = |d: &Dataset| plan.apply(d).map_err(|e| fail(Stage::Features)(&e));
        let (x_train, x_val, x_test) = (apply(&train)?, apply(&val)?, apply(&test)?);
        let y_train = scalar_labels(&train, &target.label_col);
        let y_val = scalar_labels(&val, &target.label_col);
        let mut y_fit = y_train.clone();
        y_fit.extend_from_slice(&y_val);
        Prepared::Scalar {
            x_fit: x_train.vstack(&x_val),
            y_fit,
            y_test: scalar_labels(&test, &target.label_col),
            plan,
            x_train,
            y_train,
            x_val,
            y_val,
            x_test,
        }
    };
    timings.features = ms_since(t0);

    let fit_model = |model_id: ModelId, hp: &Hyperparameters, seed: u64, on_fit: bool| {
        let data = match &prepared {
            Prepared::Scalar {
                x_train,
                y_train,
                x_fit,
                y_fit,
                ..
            } => {
                if on_fit {
                    TrainingData::Features { x: x_fit, y: y_fit }
                } else {
                    TrainingData::Features { x: x_train, y: y_train }
                }
            }
            Prepared::List { train, fit, .. } => TrainingData::Interactions(if on_fit { fit } else { train }),
        };
        models::train(model_id, task, data, hp, seed)
    };
    // Metrics on validation (`on_fit == false`) or test (`on_fit == true`).
    let evaluate = |model: &Model, on_fit: bool| -> Result<MetricTable, TrialFailure> {
        match &prepared {
            Prepared::Scalar {
                x_val,
                y_val,
                x_test,
                y_test,
                ..
            } => {
                let (x, y) = if on_fit { (x_test, y_test) } else { (x_val, y_val) };
                Ok(scalar_table(task, &model.predict(x)?, y)?)
            }
            Prepared::List {
                train_vocab,
                val_truth,
                fit_vocab,
                test_truth,
                ..
            } => {
                let (vocab, truth) = if on_fit {
                    (fit_vocab, test_truth)
                } else {
                    (train_vocab, val_truth)
                };
                list_table(task, model, vocab, truth, k, config.exclude_seen)
            }
        }
    };

    // search
    let t0 = Instant::now();
    let plan = plan_trials(&binding.candidate_models, config.budget, config.seed);
    let selection_id = binding.selection_metric.id.to_string();
    let outcomes = run_trials(&plan, pool, &selection_id, config.record_timings, |trial| {
        let model = fit_model(trial.model_id, &trial.hyperparameters, trial.seed, false)?;
        evaluate(&model, false)
    });
    let (trials, tables): (Vec<TrialRecord>, Vec<Option<MetricTable>>) = outcomes.into_iter().unzip();
    let winner_pos = select_winner(&trials, binding.selection_metric.direction).ok_or_else(|| EngineError {
        target_index,
        stage: Stage::Search,
        message: format!("no viable model: all {} trials failed", trials.len()),
    })?;
    let winner = &trials[winner_pos];
    let validation_metrics = tables[winner_pos].clone().unwrap_or_default();
    timings.search = ms_since(t0);

    // retrain on train + validation
    let t0 = Instant::now();
    let retrain_fail = |e: ModelError| fail(Stage::Retrain)(&e);
    let final_model = pool
        .install(|| fit_model(winner.model_id, &winner.hyperparameters, winner.seed, true))
        .map_err(retrain_fail)?;
    let baseline_trial = &plan[0];
    let baseline_model = fit_model(
        baseline_trial.model_id,
        &baseline_trial.hyperparameters,
        baseline_trial.seed,
        true,
    )
    .map_err(retrain_fail)?;
    timings.retrain = ms_since(t0);

    // evaluate on test
    let t0 = Instant::now();
    let eval_fail = |e: TrialFailure| fail(Stage::Evaluate)(&e.message);
    let metrics = evaluate(&final_model, true).map_err(eval_fail)?;
    let baseline_metrics = evaluate(&baseline_model, true).map_err(eval_fail)?;

    let (feature_plan, feature_summary, vocab) = match prepared {
        Prepared::Scalar { plan, .. } => {
            let summary = FeatureSummary {
                raw_dimension: plan.raw_dimension,
                output_dimension: plan.output_dimension,
                dropped: plan.dropped.clone(),
            };
            (Some(plan), Some(summary), None)
        }
        Prepared::List { fit_vocab, .. } => (None, None, Some(fit_vocab)),
    };
    let artifact = ModelArtifact {
        format_version: FORMAT_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        target_index,
        target: target.clone(),
        task_type: task,
        model_id: winner.model_id,
        hyperparameters: winner.hyperparameters.clone(),
        parameters: final_model,
        feature_plan,
        vocabularies: vocab,
        exclude_seen: config.exclude_seen,
        seed: winner.seed,
        master_seed: config.seed,
        schema_dsdl: serialize(schema),
        schema_fingerprint: schema_fingerprint(schema),
    };
    let predictions = if task.is_list() {
        artifact.predict(&data)?
    } else {
        artifact.predict(&test)?
    };
    timings.evaluate = ms_since(t0);
    timings.total = ms_since(started);

    let report = EvalReport {
        target_index,
        task_type: task,
        selection_metric: binding.selection_metric,
        winner: WinnerSummary {
            trial_index: winner.trial_index,
            model_id: winner.model_id,
            hyperparameters: winner.hyperparameters.clone(),
            seed: winner.seed,
        },
        metrics,
        validation_metrics,
        baseline: BaselineSummary {
            model_id: baseline_trial.model_id,
            metrics: baseline_metrics,
        },
        split: split_summary,
        features: feature_summary,
        trials,
        seed: config.seed,
        engine_version: ENGINE_VERSION.to_string(),
        timings_ms: config.record_timings.then_some(timings),
    };
    Ok(TargetOutcome {
        binding,
        report,
        artifact,
        predictions,
    })
}

/// Writes `report.target<i>.json`, `model.target<i>.json` and
/// `predictions.target<i>.csv` for every target into `dir`.
pub fn write_outputs(result: &RunResult, dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in &result.targets {
        let i = t.report.target_index;
        let report = serde_json::to_string_pretty(&t.report)? + "\n";
        std::fs::write(dir.join(format!("report.target{i}.json")), report)?;
        let model = serde_json::to_string(&t.artifact)? + "\n";
        std::fs::write(dir.join(format!("model.target{i}.json")), model)?;
        let file = std::fs::File::create(dir.join(format!("predictions.target{i}.csv")))?;
        t.predictions
            .write_csv(std::io::BufWriter::new(file))
            .map_err(std::io::Error::other)?;
    }
    Ok(())
}
