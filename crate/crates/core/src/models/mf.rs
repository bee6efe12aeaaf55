//! Matrix factorization trained with the pairwise BPR loss.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Hyperparameters, ModelError};
use crate::hash::derive_seed;
use crate::task::{sigmoid, softplus, ModelId};

pub const MF_INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub key: String,
    pub label: String,
    pub relevance: f64,
}

/// `score(key, label) = b_label + ⟨e_key, e_label⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub factors: usize,
    /// Sorted key vocabulary.
    pub keys: Vec<String>,
    /// Sorted label vocabulary.
    pub labels: Vec<String>,
    pub key_embeddings: Vec<f64>,
    pub label_embeddings: Vec<f64>,
    pub label_bias: Vec<f64>,
}

/// Index triple `(key, positive label, negative label)`.
pub type PairIndex = (usize, usize, usize);

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

impl MfModel {
    pub fn key_index(&self, key: &str) -> Option<usize> {
        self.keys.binary_search_by(|k| k.as_str().cmp(key)).ok()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    fn key_vec(&self, u: usize) -> &[f64] {
        &self.key_embeddings[u * self.factors..(u + 1) * self.factors]
    }

    fn label_vec(&self, i: usize) -> &[f64] {
        &self.label_embeddings[i * self.factors..(i + 1) * self.factors]
    }

    fn score_idx(&self, u: usize, i: usize) -> f64 {
        self.label_bias[i] + dot(self.key_vec(u), self.label_vec(i))
    }

    /// Unknown keys fall back to the label bias; unknown labels score −∞.
    pub fn score(&self, key: &str, label: &str) -> f64 {
        match (self.key_index(key), self.label_index(label)) {
            (_, None) => f64::NEG_INFINITY,
            (None, Some(i)) => self.label_bias[i],
            (Some(u), Some(i)) => self.score_idx(u, i),
        }
    }

    pub fn param_len(&self) -> usize {
        self.key_embeddings.len() + self.label_embeddings.len() + self.label_bias.len()
    }

    /// Flat `[key embeddings.., label embeddings.., label bias..]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.key_embeddings.clone();
        p.extend_from_slice(&self.label_embeddings);
        p.extend_from_slice(&self.label_bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_len());
        let a = self.key_embeddings.len();
        let b = a + self.label_embeddings.len();
        self.key_embeddings.copy_from_slice(&p[..a]);
        self.label_embeddings.copy_from_slice(&p[a..b]);
        self.label_bias.copy_from_slice(&p[b..]);
    }

    fn pair_loss(&self, (u, i, j): PairIndex, l2: f64) -> f64 {
        let x = self.score_idx(u, i) - self.score_idx(u, j);
        let reg = sq_norm(self.key_vec(u)) + sq_norm(self.label_vec(i)) + sq_norm(self.label_vec(j));
        softplus(-x) + 0.5 * l2 * reg
    }

    /// Mean over `pairs` of `−ln σ(ŷ_ui − ŷ_uj) + (l2/2)(‖e_u‖² + ‖e_i‖² + ‖e_j‖²)`.
    pub fn objective(&self, pairs: &[PairIndex], l2: f64) -> f64 {
        pairs.iter().map(|&p| self.pair_loss(p, l2)).sum::<f64>() / pairs.len() as f64
    }

    /// Gradient of [`MfModel::objective`] in the [`MfModel::params`] layout.
    pub fn gradient(&self, pairs: &[PairIndex], l2: f64) -> Vec<f64> {
        let k = self.factors;
        let lo = self.key_embeddings.len();
        let bo = lo + self.label_embeddings.len();
        let mut g = vec![0.0; self.param_len()];
        let scale = 1.0 / pairs.len() as f64;
        for &(u, i, j) in pairs {
            let x = self.score_idx(u, i) - self.score_idx(u, j);
            // d/dx of softplus(-x)
            let d = -sigmoid(-x) * scale;
            let (eu, ei, ej) = (self.key_vec(u), self.label_vec(i), self.label_vec(j));
            for f in 0..k {
                g[u * k + f] += d * (ei[f] - ej[f]) + scale * l2 * eu[f];
                g[lo + i * k + f] += d * eu[f] + scale * l2 * ei[f];
                g[lo + j * k + f] += -d * eu[f] + scale * l2 * ej[f];
            }
            g[bo + i] += d;
            g[bo + j] -= d;
        }
        g
    }

    /// One SGD step on a single pair; same gradient as [`MfModel::gradient`]
    /// on a one-element batch.
    fn update_pair(&mut self, (u, i, j): PairIndex, lr: f64, l2: f64) -> f64 {
        let k = self.factors;
        let x = self.score_idx(u, i) - self.score_idx(u, j);
        let loss = softplus(-x);
        let g = sigmoid(-x);
        for f in 0..k {
            let eu = self.key_embeddings[u * k + f];
            let ei = self.label_embeddings[i * k + f];
            let ej = self.label_embeddings[j * k + f];
            self.key_embeddings[u * k + f] += lr * (g * (ei - ej) - l2 * eu);
            self.label_embeddings[i * k + f] += lr * (g * eu - l2 * ei);
            self.label_embeddings[j * k + f] += lr * (-g * eu - l2 * ej);
        }
        self.label_bias[i] += lr * g;
        self.label_bias[j] -= lr * g;
        loss
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Trains on `(key, label, relevance)` triples. Positives are the distinct
/// `(key, label)` pairs with relevance > 0; each draws
/// `negatives_per_positive` labels uniformly from the labels that key has
/// no positive for.
pub fn train_mf_bpr(interactions: &[Interaction], hp: &Hyperparameters, seed: u64) -> Result<MfModel, ModelError> {
    let factors = hp.require_factors()?;
    let lr = hp.require_learning_rate()?;
    let l2 = hp.require_l2()?;
    let epochs = hp.require_epochs()?;
    let negatives = hp.require_negatives()?;

    let keys: Vec<String> = interactions
        .iter()
        .map(|t| t.key.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<String> = interactions
        .iter()
        .map(|t| t.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"mf-init"]));
    let dist = Uniform::new(-MF_INIT_RANGE, MF_INIT_RANGE);
    let key_embeddings = (0..keys.len() * factors).map(|_| dist.sample(&mut rng)).collect();
    let label_embeddings = (0..labels.len() * factors).map(|_| dist.sample(&mut rng)).collect();
    let mut model = MfModel {
        factors,
        label_bias: vec![0.0; labels.len()],
        keys,
        labels,
        key_embeddings,
        label_embeddings,
    };

    let positives: BTreeSet<(usize, usize)> = interactions
        .iter()
        .filter(|t| t.relevance > 0.0)
        .map(|t| {
            (
                model.key_index(&t.key).expect("key in vocabulary"),
                model.label_index(&t.label).expect("label in vocabulary"),
            )
        })
        .collect();
    if positives.is_empty() {
        return Err(ModelError::NoPositives);
    }
    let mut per_key: Vec<Vec<usize>> = vec![Vec::new(); model.keys.len()];
    for &(u, i) in &positives {
        per_key[u].push(i);
    }
    let n_labels = model.labels.len();
    let mut order: Vec<(usize, usize)> = positives.into_iter().collect();
    let sorted = order.clone();

    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"mf-epoch", &epoch.to_le_bytes()]));
        order.copy_from_slice(&sorted);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &(u, i) in &order {
            if per_key[u].len() == n_labels {
                continue;
            }
            for _ in 0..negatives {
                let j = loop {
                    let j = rng.gen_range(0..n_labels);
                    if per_key[u].binary_search(&j).is_err() {
                        break j;
                    }
                };
                epoch_loss += model.update_pair((u, i, j), lr, l2);
            }
        }
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(ModelError::Diverged {
                model_id: ModelId::MatrixFactorizationBpr,
                hyperparameters: hp.to_string(),
                epoch,
            });
        }
    }
    Ok(model)
}
