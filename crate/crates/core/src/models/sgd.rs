//! Logistic regression, linear regression and the degree-2 factorization
//! machine, all trained by mini-batch SGD on one parameter layout.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Hyperparameters, ModelError};
use crate::features::FeatureMatrix;
use crate::hash::derive_seed;
use crate::task::{sigmoid, softplus, ModelId};

pub const BATCH_SIZE: usize = 256;
pub const FM_INIT_RANGE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Probability output, trained on cross-entropy.
    Logistic,
    /// Real output, trained on squared error.
    Identity,
}

/// `z = b + w·x + ½ Σ_f [(Σ_j v_jf x_j)² − Σ_j v_jf² x_j²]`; the factor term
/// is absent when `factors == 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdModel {
    pub model_id: ModelId,
    pub link: Link,
    pub dim: usize,
    pub factors: usize,
    pub bias: f64,
    pub weights: Vec<f64>,
    /// `dim × factors`, row-major by feature.
    pub v: Vec<f64>,
}

impl SgdModel {
    pub fn init(model_id: ModelId, link: Link, dim: usize, factors: usize, seed: u64) -> Self {
        let mut v = vec![0.0; dim * factors];
        if factors > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"fm-init"]));
            let dist = Uniform::new(-FM_INIT_RANGE, FM_INIT_RANGE);
            for x in &mut v {
                *x = dist.sample(&mut rng);
            }
        }
        SgdModel {
            model_id,
            link,
            dim,
            factors,
            bias: 0.0,
            weights: vec![0.0; dim],
            v,
        }
    }

    pub fn param_len(&self) -> usize {
        1 + self.dim + self.v.len()
    }

    /// Flat parameter vector `[bias, weights.., v..]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_len());
        p.push(self.bias);
        p.extend_from_slice(&self.weights);
        p.extend_from_slice(&self.v);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_len());
        self.bias = p[0];
        self.weights.copy_from_slice(&p[1..1 + self.dim]);
        self.v.copy_from_slice(&p[1 + self.dim..]);
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite()) && self.v.iter().all(|w| w.is_finite())
    }

    /// Raw score of one sparse row; leaves per-factor sums in `sums`.
    fn score_row(&self, idx: &[u32], val: &[f64], sums: &mut [f64]) -> f64 {
        let mut z = self.bias;
        for (&j, &x) in idx.iter().zip(val) {
            z += self.weights[j as usize] * x;
        }
        if self.factors > 0 {
            let k = self.factors;
            sums.iter_mut().for_each(|s| *s = 0.0);
            let mut sq = 0.0;
            for (&j, &x) in idx.iter().zip(val) {
                let row = &self.v[j as usize * k..(j as usize + 1) * k];
                for f in 0..k {
                    let t = row[f] * x;
                    sums[f] += t;
                    sq += t * t;
                }
            }
            z += 0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq);
        }
        z
    }

    fn check_dim(&self, x: &FeatureMatrix) -> Result<(), ModelError> {
        if x.dim() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    pub fn raw_scores(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        self.check_dim(x)?;
        let mut sums = vec![0.0; self.factors];
        Ok((0..x.rows())
            .map(|i| {
                let (idx, val) = x.row(i);
                self.score_row(idx, val, &mut sums)
            })
            .collect())
    }

    /// Probabilities for the logistic link, raw scores otherwise.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        let z = self.raw_scores(x)?;
        Ok(match self.link {
            Link::Logistic => z.into_iter().map(sigmoid).collect(),
            Link::Identity => z,
        })
    }

    fn row_loss(&self, z: f64, y: f64) -> f64 {
        match self.link {
            // BCE of σ(z), written to stay finite for large |z|
            Link::Logistic => softplus(z) - y * z,
            Link::Identity => (z - y) * (z - y),
        }
    }

    fn row_dloss(&self, z: f64, y: f64) -> f64 {
        match self.link {
            Link::Logistic => sigmoid(z) - y,
            Link::Identity => 2.0 * (z - y),
        }
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        let sq: f64 = self.weights.iter().chain(&self.v).map(|w| w * w).sum();
        0.5 * l2 * sq
    }

    /// Mean data loss over `rows` plus `(l2/2)(‖w‖² + ‖V‖²)`.
    pub fn objective(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], l2: f64) -> f64 {
        let mut sums = vec![0.0; self.factors];
        let data: f64 = rows
            .iter()
            .map(|&i| {
                let (idx, val) = x.row(i);
                self.row_loss(self.score_row(idx, val, &mut sums), y[i])
            })
            .sum();
        data / rows.len() as f64 + self.l2_penalty(l2)
    }

    /// Writes the gradient of [`SgdModel::objective`] into `grad` (flat
    /// layout as [`SgdModel::params`]) and returns the summed data loss.
    pub fn accumulate_gradient(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], l2: f64, grad: &mut [f64]) -> f64 {
        let k = self.factors;
        let wo = 1;
        let vo = 1 + self.dim;
        for (g, w) in grad[wo..vo].iter_mut().zip(&self.weights) {
            *g = l2 * w;
        }
        for (g, w) in grad[vo..].iter_mut().zip(&self.v) {
            *g = l2 * w;
        }
        grad[0] = 0.0;
        let scale = 1.0 / rows.len() as f64;
        let mut sums = vec![0.0; k];
        let mut loss = 0.0;
        for &i in rows {
            let (idx, val) = x.row(i);
            let z = self.score_row(idx, val, &mut sums);
            loss += self.row_loss(z, y[i]);
            let d = self.row_dloss(z, y[i]) * scale;
            grad[0] += d;
            for (&j, &xv) in idx.iter().zip(val) {
                let j = j as usize;
                grad[wo + j] += d * xv;
                if k > 0 {
                    let row = &self.v[j * k..(j + 1) * k];
                    let g = &mut grad[vo + j * k..vo + (j + 1) * k];
                    for f in 0..k {
                        g[f] += d * xv * (sums[f] - row[f] * xv);
                    }
                }
            }
        }
        loss
    }

    pub fn gradient(&self, x: &FeatureMatrix, y: &[f64], rows: &[usize], l2: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_len()];
        self.accumulate_gradient(x, y, rows, l2, &mut grad);
        grad
    }

    fn step(&mut self, grad: &[f64], lr: f64) {
        self.bias -= lr * grad[0];
        for (w, g) in self.weights.iter_mut().zip(&grad[1..1 + self.dim]) {
            *w -= lr * g;
        }
        for (w, g) in self.v.iter_mut().zip(&grad[1 + self.dim..]) {
            *w -= lr * g;
        }
    }
}

/// Link implied by a gradient-trained model id; the FM follows the task.
pub fn link_for(model_id: ModelId, fm_link: Link) -> Result<Link, ModelError> {
    match model_id {
        ModelId::LogisticRegression => Ok(Link::Logistic),
        ModelId::LinearRegression => Ok(Link::Identity),
        ModelId::FactorizationMachine => Ok(fm_link),
        other => Err(ModelError::WrongModel(other)),
    }
}

/// Mini-batch SGD with per-epoch shuffles seeded by `(seed, epoch)`.
pub fn train_sgd(
    model_id: ModelId,
    link: Link,
    x: &FeatureMatrix,
    y: &[f64],
    hp: &Hyperparameters,
    seed: u64,
) -> Result<SgdModel, ModelError> {
    if x.rows() == 0 {
        return Err(ModelError::Empty);
    }
    if y.len() != x.rows() {
        return Err(ModelError::TargetLength {
            rows: x.rows(),
            targets: y.len(),
        });
    }
    let lr = hp.require_learning_rate()?;
    let l2 = hp.require_l2()?;
    let epochs = hp.require_epochs()?;
    let factors = if model_id == ModelId::FactorizationMachine {
        hp.require_factors()?
    } else {
        0
    };
    let mut model = SgdModel::init(model_id, link, x.dim(), factors, seed);
    let mut grad = vec![0.0; model.param_len()];
    let mut order: Vec<usize> = Vec::with_capacity(x.rows());
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"sgd-epoch", &epoch.to_le_bytes()]));
        order.clear();
        order.extend(0..x.rows());
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(BATCH_SIZE) {
            epoch_loss += model.accumulate_gradient(x, y, batch, l2, &mut grad);
            model.step(&grad, lr);
        }
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(ModelError::Diverged {
                model_id,
                hyperparameters: hp.to_string(),
                epoch,
            });
        }
    }
    Ok(model)
}
