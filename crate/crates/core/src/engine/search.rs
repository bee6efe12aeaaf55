//! Trial enumeration and winner selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hash::derive_seed;
use crate::models::{HyperparameterSpace, Hyperparameters, ModelError};
use crate::task::{Direction, MetricError, MetricTable, ModelId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub trial_index: usize,
    pub model_id: ModelId,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

pub fn trial_seed(seed: u64, model_id: ModelId, trial_index: usize) -> u64 {
    derive_seed(
        seed,
        &[model_id.as_str().as_bytes(), &(trial_index as u64).to_le_bytes()],
    )
}

/// Defaults of every candidate first, then the remaining grid points of
/// each model in a seeded order, drawn round-robin across models until
/// `budget` trials or every grid is used up.
pub fn plan_trials(candidates: &[ModelId], budget: usize, seed: u64) -> Vec<PlannedTrial> {
    let mut queues: Vec<(ModelId, std::vec::IntoIter<Hyperparameters>)> = candidates
        .iter()
        .map(|&m| {
            let mut rest = HyperparameterSpace::for_model(m).points().split_off(1);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"grid", m.as_str().as_bytes()]));
            rest.shuffle(&mut rng);
            (m, rest.into_iter())
        })
        .collect();

    let mut draws: Vec<(ModelId, Hyperparameters)> = candidates
        .iter()
        .map(|&m| (m, HyperparameterSpace::for_model(m).default_point()))
        .collect();
    loop {
        let mut drew = false;
        for (m, q) in &mut queues {
            if let Some(hp) = q.next() {
                draws.push((*m, hp));
                drew = true;
            }
        }
        if !drew || draws.len() >= budget {
            break;
        }
    }
    draws.truncate(budget);
    draws
        .into_iter()
        .enumerate()
        .map(|(t, (model_id, hyperparameters))| PlannedTrial {
            trial_index: t,
            model_id,
            hyperparameters,
            seed: trial_seed(seed, model_id, t),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Diverged,
    /// Training or evaluation raised a non-divergence error.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub model_id: ModelId,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub status: TrialStatus,
    /// Validation selection metric; `null` when undefined or the trial
    /// failed.
    pub validation_metric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub train_ms: Option<f64>,
}

/// Index of the winning record: best metric under `direction` among `ok`
/// trials, absent metrics ranked last, ties to the lower trial index.
pub fn select_winner(trials: &[TrialRecord], direction: Direction) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (pos, t) in trials.iter().enumerate() {
        if t.status != TrialStatus::Ok {
            continue;
        }
        let Some(b) = best else {
            best = Some(pos);
            continue;
        };
        let improves = match (t.validation_metric, trials[b].validation_metric) {
            (Some(v), Some(w)) => direction.better(v, w),
            (Some(_), None) => true,
            _ => false,
        };
        if improves {
            best = Some(pos);
        }
    }
    best
}

/// Why a trial produced no model.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub diverged: bool,
    pub message: String,
}

impl From<ModelError> for TrialFailure {
    fn from(e: ModelError) -> Self {
        TrialFailure {
            diverged: matches!(e, ModelError::Diverged { .. }),
            message: e.to_string(),
        }
    }
}

impl From<MetricError> for TrialFailure {
    fn from(e: MetricError) -> Self {
        TrialFailure {
            diverged: false,
            message: e.to_string(),
        }
    }
}

/// Runs `plan` on `pool`, collecting records in trial order. `eval` trains
/// one trial and returns its validation metric table; `selection` names the
/// entry copied into the record.
pub fn run_trials<F>(
    plan: &[PlannedTrial],
    pool: &rayon::ThreadPool,
    selection: &str,
    record_timings: bool,
    eval: F,
) -> Vec<(TrialRecord, Option<MetricTable>)>
where
    F: Fn(&PlannedTrial) -> Result<MetricTable, TrialFailure> + Sync,
{
    pool.install(|| {
        plan.par_iter()
            .map(|trial| {
                let start = Instant::now();
                let outcome = eval(trial);
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                let (status, validation_metric, error, table) = match outcome {
                    Ok(table) => {
                        let v = table.get(selection).copied().flatten().filter(|x| x.is_finite());
                        (TrialStatus::Ok, v, None, Some(table))
                    }
                    Err(f) if f.diverged => (TrialStatus::Diverged, None, Some(f.message), None),
                    Err(f) => (TrialStatus::Failed, None, Some(f.message), None),
                };
                let record = TrialRecord {
                    trial_index: trial.trial_index,
                    model_id: trial.model_id,
                    hyperparameters: trial.hyperparameters.clone(),
                    seed: trial.seed,
                    status,
                    validation_metric,
                    error,
                    train_ms: record_timings.then_some(elapsed),
                };
                (record, table)
            })
            .collect()
    })
}
