use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Interaction, ModelError};
use crate::task::ModelId;

/// Same output for every row: the positive rate or the mean target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub model_id: ModelId,
    pub value: f64,
    pub dim: usize,
}

pub fn train_majority(labels: &[f64], dim: usize) -> Result<ConstantModel, ModelError> {
    train_constant(ModelId::MajorityBaseline, labels, dim)
}

pub fn train_mean(targets: &[f64], dim: usize) -> Result<ConstantModel, ModelError> {
    train_constant(ModelId::MeanBaseline, targets, dim)
}

fn train_constant(model_id: ModelId, y: &[f64], dim: usize) -> Result<ConstantModel, ModelError> {
    if y.is_empty() {
        return Err(ModelError::Empty);
    }
    Ok(ConstantModel {
        model_id,
        value: y.iter().sum::<f64>() / y.len() as f64,
        dim,
    })
}

/// Labels scored by their summed train relevance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    /// Sorted label vocabulary.
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
}

impl PopularityModel {
    pub fn score(&self, label: &str) -> f64 {
        match self.labels.binary_search_by(|l| l.as_str().cmp(label)) {
            Ok(i) => self.scores[i],
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

pub fn train_popularity(interactions: &[Interaction]) -> Result<PopularityModel, ModelError> {
    if interactions.is_empty() {
        return Err(ModelError::Empty);
    }
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for t in interactions {
        *sums.entry(&t.label).or_insert(0.0) += t.relevance;
    }
    let (labels, scores) = sums.into_iter().map(|(l, s)| (l.to_string(), s)).unzip();
    Ok(PopularityModel { labels, scores })
}
