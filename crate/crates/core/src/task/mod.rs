//! Task bindings, losses and evaluation metrics.

mod loss;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsdl::{Schema, TargetSpec, TargetType};

pub use loss::*;
pub use metrics::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("inputs differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    Empty,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("cutoff k must be at least 1")]
    BadK,
    #[error("predicted set for key '{key}' has {size} members, more than k = {k}")]
    OversizedSet { key: String, size: usize, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    MajorityBaseline,
    MeanBaseline,
    PopularityBaseline,
    LogisticRegression,
    LinearRegression,
    FactorizationMachine,
    MatrixFactorizationBpr,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::MajorityBaseline,
        ModelId::MeanBaseline,
        ModelId::PopularityBaseline,
        ModelId::LogisticRegression,
        ModelId::LinearRegression,
        ModelId::FactorizationMachine,
        ModelId::MatrixFactorizationBpr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::MajorityBaseline => "majority_baseline",
            ModelId::MeanBaseline => "mean_baseline",
            ModelId::PopularityBaseline => "popularity_baseline",
            ModelId::LogisticRegression => "logistic_regression",
            ModelId::LinearRegression => "linear_regression",
            ModelId::FactorizationMachine => "factorization_machine",
            ModelId::MatrixFactorizationBpr => "matrix_factorization_bpr",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            ModelId::MajorityBaseline | ModelId::MeanBaseline | ModelId::PopularityBaseline
        )
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown model id '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossId {
    Bce,
    Mse,
    Mae,
    Bpr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Min => a < b,
            Direction::Max => a > b,
        }
    }
}

/// Stable metric identifiers; cutoff metrics carry their k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MetricId {
    Auc,
    Precision,
    Recall,
    F1,
    LogLoss,
    Rmse,
    Mape,
    R2,
    Ndcg(u64),
    Map(u64),
    Mrr,
    JaccardDistance(u64),
    PrecisionAt(u64),
    RecallAt(u64),
}

impl MetricId {
    pub fn direction(self) -> Direction {
        match self {
            MetricId::LogLoss | MetricId::Rmse | MetricId::Mape | MetricId::JaccardDistance(_) => Direction::Min,
            _ => Direction::Max,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::Auc => f.write_str("auc"),
            MetricId::Precision => f.write_str("precision"),
            MetricId::Recall => f.write_str("recall"),
            MetricId::F1 => f.write_str("f1"),
            MetricId::LogLoss => f.write_str("log_loss"),
            MetricId::Rmse => f.write_str("rmse"),
            MetricId::Mape => f.write_str("mape"),
            MetricId::R2 => f.write_str("r2"),
            MetricId::Ndcg(k) => write!(f, "ndcg@{k}"),
            MetricId::Map(k) => write!(f, "map@{k}"),
            MetricId::Mrr => f.write_str("mrr"),
            MetricId::JaccardDistance(k) => write!(f, "jaccard_distance@{k}"),
            MetricId::PrecisionAt(k) => write!(f, "precision@{k}"),
            MetricId::RecallAt(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for MetricId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let plain = match s {
            "auc" => Some(MetricId::Auc),
            "precision" => Some(MetricId::Precision),
            "recall" => Some(MetricId::Recall),
            "f1" => Some(MetricId::F1),
            "log_loss" => Some(MetricId::LogLoss),
            "rmse" => Some(MetricId::Rmse),
            "mape" => Some(MetricId::Mape),
            "r2" => Some(MetricId::R2),
            "mrr" => Some(MetricId::Mrr),
            _ => None,
        };
        if let Some(m) = plain {
            return Ok(m);
        }
        let bad = || format!("unknown metric id '{s}'");
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: u64 = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(match name {
            "ndcg" => MetricId::Ndcg(k),
            "map" => MetricId::Map(k),
            "jaccard_distance" => MetricId::JaccardDistance(k),
            "precision" => MetricId::PrecisionAt(k),
            "recall" => MetricId::RecallAt(k),
            _ => return Err(bad()),
        })
    }
}

impl From<MetricId> for String {
    fn from(m: MetricId) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MetricId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMetric {
    pub id: MetricId,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskBinding {
    pub target: TargetSpec,
    pub task_type: TargetType,
    pub loss_ids: Vec<LossId>,
    pub selection_metric: SelectionMetric,
    pub report_metrics: Vec<MetricId>,
    pub candidate_models: Vec<ModelId>,
}

impl TaskBinding {
    /// Cutoff for list tasks; 0 for scalar tasks.
    pub fn list_size(&self) -> usize {
        self.target.list_size.unwrap_or(0) as usize
    }
}

/// Maps a validated target onto its loss, metrics and candidate models.
pub fn resolve_task(target: &TargetSpec, _schema: &Schema) -> TaskBinding {
    let k = target.list_size.unwrap_or(0);
    let (loss_ids, selection, report, candidates) = match target.target_type {
        TargetType::Binary => (
            vec![LossId::Bce],
            MetricId::LogLoss,
            vec![
                MetricId::Auc,
                MetricId::Precision,
                MetricId::Recall,
                MetricId::F1,
                MetricId::LogLoss,
            ],
            vec![
                ModelId::MajorityBaseline,
                ModelId::LogisticRegression,
                ModelId::FactorizationMachine,
            ],
        ),
        TargetType::Numeric => (
            vec![LossId::Mse, LossId::Mae],
            MetricId::Rmse,
            vec![MetricId::Rmse, MetricId::Mape, MetricId::R2],
            vec![
                ModelId::MeanBaseline,
                ModelId::LinearRegression,
                ModelId::FactorizationMachine,
            ],
        ),
        TargetType::OrderedList => (
            vec![LossId::Bpr],
            MetricId::Ndcg(k),
            vec![MetricId::Ndcg(k), MetricId::Map(k), MetricId::Mrr],
            vec![ModelId::PopularityBaseline, ModelId::MatrixFactorizationBpr],
        ),
        TargetType::UnorderedList => (
            vec![LossId::Bpr],
            MetricId::JaccardDistance(k),
            vec![
                MetricId::JaccardDistance(k),
                MetricId::PrecisionAt(k),
                MetricId::RecallAt(k),
            ],
            vec![ModelId::PopularityBaseline, ModelId::MatrixFactorizationBpr],
        ),
    };
    TaskBinding {
        target: target.clone(),
        task_type: target.target_type,
        loss_ids,
        selection_metric: SelectionMetric {
            id: selection,
            direction: selection.direction(),
        },
        report_metrics: report,
        candidate_models: candidates,
    }
}

/// Metric id → value; `None` marks a metric that is undefined on the data.
pub type MetricTable = BTreeMap<String, Option<f64>>;

pub const CLASSIFICATION_THRESHOLD: f64 = 0.5;

pub fn binary_metrics(scores: &[f64], labels: &[u8]) -> Result<MetricTable, MetricError> {
    let auc = metric_auc(scores, labels)?;
    let prf = metric_prf(scores, labels, CLASSIFICATION_THRESHOLD)?;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let ll = loss_bce(scores, &y)?;
    Ok(BTreeMap::from([
        (MetricId::Auc.to_string(), auc),
        (MetricId::Precision.to_string(), Some(prf.precision)),
        (MetricId::Recall.to_string(), Some(prf.recall)),
        (MetricId::F1.to_string(), Some(prf.f1)),
        (MetricId::LogLoss.to_string(), Some(ll)),
    ]))
}

pub fn numeric_metrics(predictions: &[f64], truths: &[f64]) -> Result<MetricTable, MetricError> {
    let m = metric_regression(predictions, truths)?;
    Ok(BTreeMap::from([
        (MetricId::Rmse.to_string(), Some(m.rmse)),
        (MetricId::Mape.to_string(), m.mape),
        (MetricId::R2.to_string(), m.r2),
    ]))
}

pub fn ranking_metrics(ranked: &RankedOutput, truth: &TruthRelevance, k: u64) -> Result<MetricTable, MetricError> {
    let m = metric_ranking(ranked, truth, k as usize)?;
    Ok(BTreeMap::from([
        (MetricId::Ndcg(k).to_string(), m.ndcg),
        (MetricId::Map(k).to_string(), m.map),
        (MetricId::Mrr.to_string(), m.mrr),
    ]))
}

pub fn set_metrics(predicted: &SetOutput, truth: &TruthSets, k: u64) -> Result<MetricTable, MetricError> {
    let m = metric_set(predicted, truth, k as usize)?;
    Ok(BTreeMap::from([
        (MetricId::JaccardDistance(k).to_string(), m.jaccard_distance),
        (MetricId::PrecisionAt(k).to_string(), m.precision),
        (MetricId::RecallAt(k).to_string(), m.recall),
    ]))
}
