//! Candidate models: constant and popularity baselines, SGD-trained
//! logistic/linear regression and factorization machines, and BPR matrix
//! factorization.

mod baseline;
mod mf;
mod sgd;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsdl::TargetType;
use crate::features::FeatureMatrix;

pub use crate::task::ModelId;
pub use baseline::{train_majority, train_mean, train_popularity, ConstantModel, PopularityModel};
pub use mf::{train_mf_bpr, Interaction, MfModel, PairIndex, MF_INIT_RANGE};
pub use sgd::{link_for, train_sgd, Link, SgdModel, BATCH_SIZE, FM_INIT_RANGE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("training data is empty")]
    Empty,
    #[error("{rows} feature rows but {targets} targets")]
    TargetLength { rows: usize, targets: usize },
    #[error("feature dimension {found} does not match the trained dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{model_id} diverged at epoch {epoch} (non-finite loss) with {hyperparameters}")]
    Diverged {
        model_id: ModelId,
        hyperparameters: String,
        epoch: u32,
    },
    #[error("no interaction has positive relevance")]
    NoPositives,
    #[error("missing hyperparameter '{0}'")]
    MissingHyperparameter(&'static str),
    #[error("hyperparameter '{name}' is invalid: {value}")]
    BadHyperparameter { name: &'static str, value: f64 },
    #[error("{0} does not support this operation")]
    WrongModel(ModelId),
    #[error("{0} is not a candidate for {1} targets")]
    Incompatible(ModelId, TargetType),
}

/// One point of a model's hyperparameter grid. Axes a model does not use
/// are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epochs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub negatives_per_positive: Option<usize>,
}

impl Hyperparameters {
    fn require_learning_rate(&self) -> Result<f64, ModelError> {
        let v = self
            .learning_rate
            .ok_or(ModelError::MissingHyperparameter("learning_rate"))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::BadHyperparameter {
                name: "learning_rate",
                value: v,
            });
        }
        Ok(v)
    }

    fn require_l2(&self) -> Result<f64, ModelError> {
        let v = self.l2.ok_or(ModelError::MissingHyperparameter("l2"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(ModelError::BadHyperparameter { name: "l2", value: v });
        }
        Ok(v)
    }

    fn require_epochs(&self) -> Result<u32, ModelError> {
        self.epochs.ok_or(ModelError::MissingHyperparameter("epochs"))
    }

    fn require_factors(&self) -> Result<usize, ModelError> {
        match self.factors {
            None => Err(ModelError::MissingHyperparameter("factors")),
            Some(0) => Err(ModelError::BadHyperparameter {
                name: "factors",
                value: 0.0,
            }),
            Some(f) => Ok(f),
        }
    }

    fn require_negatives(&self) -> Result<usize, ModelError> {
        match self.negatives_per_positive {
            None => Err(ModelError::MissingHyperparameter("negatives_per_positive")),
            Some(0) => Err(ModelError::BadHyperparameter {
                name: "negatives_per_positive",
                value: 0.0,
            }),
            Some(n) => Ok(n),
        }
    }
}

impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(v) = self.learning_rate {
            parts.push(format!("learning_rate={v}"));
        }
        if let Some(v) = self.l2 {
            parts.push(format!("l2={v}"));
        }
        if let Some(v) = self.epochs {
            parts.push(format!("epochs={v}"));
        }
        if let Some(v) = self.factors {
            parts.push(format!("factors={v}"));
        }
        if let Some(v) = self.negatives_per_positive {
            parts.push(format!("negatives_per_positive={v}"));
        }
        if parts.is_empty() {
            f.write_str("no hyperparameters")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// Named discrete grids. The first value of every axis is the default.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperparameterSpace {
    pub axes: Vec<Axis>,
}

fn axis(name: &'static str, values: &[f64]) -> Axis {
    Axis {
        name,
        values: values.to_vec(),
    }
}

impl HyperparameterSpace {
    pub fn for_model(model_id: ModelId) -> Self {
        let lr = axis("learning_rate", &[0.3, 0.1, 0.03, 0.01]);
        let l2 = axis("l2", &[0.0, 1e-4, 1e-2]);
        let epochs = axis("epochs", &[5.0, 20.0, 50.0]);
        let axes = match model_id {
            ModelId::MajorityBaseline | ModelId::MeanBaseline | ModelId::PopularityBaseline => vec![],
            ModelId::LogisticRegression | ModelId::LinearRegression => vec![lr, l2, epochs],
            ModelId::FactorizationMachine => vec![lr, l2, epochs, axis("factors", &[4.0, 8.0, 16.0])],
            ModelId::MatrixFactorizationBpr => vec![
                axis("factors", &[8.0, 16.0, 32.0]),
                axis("learning_rate", &[0.1, 0.05, 0.01]),
                axis("l2", &[0.0, 1e-4, 1e-2]),
                axis("epochs", &[10.0, 30.0]),
                axis("negatives_per_positive", &[1.0, 4.0]),
            ],
        };
        HyperparameterSpace { axes }
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    fn build(&self, choice: &[usize]) -> Hyperparameters {
        let mut hp = Hyperparameters::default();
        for (a, &c) in self.axes.iter().zip(choice) {
            let v = a.values[c];
            match a.name {
                "learning_rate" => hp.learning_rate = Some(v),
                "l2" => hp.l2 = Some(v),
                "epochs" => hp.epochs = Some(v as u32),
                "factors" => hp.factors = Some(v as usize),
                "negatives_per_positive" => hp.negatives_per_positive = Some(v as usize),
                other => unreachable!("unknown axis {other}"),
            }
        }
        hp
    }

    /// Every grid point; index 0 is the default, later axes vary fastest.
    pub fn points(&self) -> Vec<Hyperparameters> {
        let mut out = Vec::with_capacity(self.size());
        let mut choice = vec![0usize; self.axes.len()];
        loop {
            out.push(self.build(&choice));
            let mut a = self.axes.len();
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                choice[a] += 1;
                if choice[a] < self.axes[a].values.len() {
                    break;
                }
                choice[a] = 0;
            }
        }
    }

    pub fn default_point(&self) -> Hyperparameters {
        self.build(&vec![0; self.axes.len()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Constant(ConstantModel),
    Sgd(SgdModel),
    Popularity(PopularityModel),
    Mf(MfModel),
}

pub enum TrainingData<'a> {
    Features { x: &'a FeatureMatrix, y: &'a [f64] },
    Interactions(&'a [Interaction]),
}

/// Trains `model_id` for a `task_type` target.
pub fn train(
    model_id: ModelId,
    task_type: TargetType,
    data: TrainingData<'_>,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<Model, ModelError> {
    let list_task = matches!(task_type, TargetType::OrderedList | TargetType::UnorderedList);
    let compatible = match model_id {
        ModelId::MajorityBaseline | ModelId::LogisticRegression => task_type == TargetType::Binary,
        ModelId::MeanBaseline | ModelId::LinearRegression => task_type == TargetType::Numeric,
        ModelId::FactorizationMachine => !list_task,
        ModelId::PopularityBaseline | ModelId::MatrixFactorizationBpr => list_task,
    };
    if !compatible {
        return Err(ModelError::Incompatible(model_id, task_type));
    }
    match (model_id, data) {
        (ModelId::MajorityBaseline, TrainingData::Features { x, y }) => train_majority(y, x.dim()).map(Model::Constant),
        (ModelId::MeanBaseline, TrainingData::Features { x, y }) => train_mean(y, x.dim()).map(Model::Constant),
        (ModelId::PopularityBaseline, TrainingData::Interactions(t)) => train_popularity(t).map(Model::Popularity),
        (ModelId::MatrixFactorizationBpr, TrainingData::Interactions(t)) => train_mf_bpr(t, hp, seed).map(Model::Mf),
        (id, TrainingData::Features { x, y }) => {
            let fm_link = if task_type == TargetType::Binary {
                Link::Logistic
            } else {
                Link::Identity
            };
            train_sgd(id, link_for(id, fm_link)?, x, y, hp, seed).map(Model::Sgd)
        }
        (id, _) => Err(ModelError::WrongModel(id)),
    }
}

impl Model {
    pub fn model_id(&self) -> ModelId {
        match self {
            Model::Constant(m) => m.model_id,
            Model::Sgd(m) => m.model_id,
            Model::Popularity(_) => ModelId::PopularityBaseline,
            Model::Mf(_) => ModelId::MatrixFactorizationBpr,
        }
    }

    pub fn feature_dimension(&self) -> Option<usize> {
        match self {
            Model::Constant(m) => Some(m.dim),
            Model::Sgd(m) => Some(m.dim),
            _ => None,
        }
    }

    /// Per-row output for scalar tasks: probability (binary) or value.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        match self {
            Model::Constant(m) => {
                if x.dim() != m.dim {
                    return Err(ModelError::DimensionMismatch {
                        expected: m.dim,
                        found: x.dim(),
                    });
                }
                Ok(vec![m.value; x.rows()])
            }
            Model::Sgd(m) => m.predict(x),
            other => Err(ModelError::WrongModel(other.model_id())),
        }
    }

    /// Score of `label` for `key` in list tasks.
    pub fn score_label(&self, key: &str, label: &str) -> Result<f64, ModelError> {
        match self {
            Model::Popularity(m) => Ok(m.score(label)),
            Model::Mf(m) => Ok(m.score(key, label)),
            other => Err(ModelError::WrongModel(other.model_id())),
        }
    }

    /// Top-`k` candidates for `key`, see [`rank`].
    pub fn rank(&self, key: &str, candidates: &[String], k: usize) -> Result<Vec<(String, f64)>, ModelError> {
        let scored = candidates
            .iter()
            .map(|c| Ok((c.clone(), self.score_label(key, c)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(rank(scored, k))
    }
}

/// Top-`k` by score descending, ties by label ascending. Duplicate labels
/// and labels scored −∞ are dropped.
pub fn rank(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.retain(|(_, s)| *s != f64::NEG_INFINITY);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut seen = std::collections::HashSet::new();
    scored.retain(|(l, _)| seen.insert(l.clone()));
    scored.truncate(k);
    scored
}
