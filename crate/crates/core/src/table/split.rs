use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsdl::{Schema, TargetSpec};
use crate::hash::derive_seed;

use super::Dataset;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitPolicy {
    Temporal,
    Random,
    GroupedByKey { key_col: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl Fractions {
    pub fn check(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0 && *f < 1.0)) {
            return Err(SplitError::BadFractions(*self));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadFractions(*self));
        }
        Ok(())
    }

    /// Partition sizes for `n` rows; every part gets at least one row when
    /// `n >= 3`.
    fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let nf = n as f64;
        let mut val = ((nf * self.validation).round() as usize).max(1);
        let mut test = ((nf * self.test).round() as usize).max(1);
        while val + test + 1 > n && (val > 1 || test > 1) {
            if val >= test {
                val -= 1;
            } else {
                test -= 1;
            }
        }
        (n - val - test, val, test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub policy: SplitPolicy,
    pub fractions: Fractions,
    pub seed: u64,
}

impl SplitSpec {
    /// Grouped by key for list targets (temporal within each key when the
    /// schema has a timestamp column), temporal for scalar targets with a
    /// timestamp, random otherwise.
    pub fn default_for(schema: &Schema, target: &TargetSpec, fractions: Fractions, seed: u64) -> Self {
        let policy = if target.target_type.is_list() {
            SplitPolicy::GroupedByKey {
                key_col: target.key_col.clone(),
            }
        } else if schema.timestamp_col.is_some() {
            SplitPolicy::Temporal
        } else {
            SplitPolicy::Random
        };
        SplitSpec {
            policy,
            fractions,
            seed,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("split fractions must each lie in (0, 1) and sum to 1, got {0:?}")]
    BadFractions(Fractions),
    #[error("temporal split requires a timestamp_col")]
    NoTimestamp,
    #[error("dataset has {0} rows; at least 3 are needed to split")]
    TooFewRows(usize),
    #[error("split column '{0}' not found")]
    UnknownColumn(String),
}

/// Row indices of each partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), SplitError> {
    let idx = split_indices(dataset, spec)?;
    Ok((
        dataset.take(&idx.train),
        dataset.take(&idx.validation),
        dataset.take(&idx.test),
    ))
}

fn timestamps(dataset: &Dataset) -> Result<Vec<f64>, SplitError> {
    let name = dataset
        .schema()
        .timestamp_col
        .as_deref()
        .ok_or(SplitError::NoTimestamp)?;
    let col = dataset
        .column(name)
        .ok_or_else(|| SplitError::UnknownColumn(name.to_string()))?;
    Ok((0..dataset.rows())
        .map(|r| {
            if col.is_missing(r) {
                f64::NEG_INFINITY
            } else {
                col.as_f64(r).unwrap_or(f64::NEG_INFINITY)
            }
        })
        .collect())
}

/// Orders rows by timestamp, ties by original index.
fn temporal_order(rows: &mut [usize], ts: &[f64]) {
    rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]).then(a.cmp(&b)));
}

fn cut(order: &[usize], fractions: &Fractions) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (n_train, n_val, _) = fractions.sizes(order.len());
    (
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    )
}

/// Deterministic train/validation/test partition of `dataset`.
///
/// Temporal partitions keep time order; random and grouped partitions list
/// rows in ascending index order.
pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<SplitIndices, SplitError> {
    spec.fractions.check()?;
    let n = dataset.rows();
    if n < 3 {
        return Err(SplitError::TooFewRows(n));
    }
    let mut all: Vec<usize> = (0..n).collect();

    let (train, validation, test) = match &spec.policy {
        SplitPolicy::Temporal => {
            let ts = timestamps(dataset)?;
            temporal_order(&mut all, &ts);
            cut(&all, &spec.fractions)
        }
        SplitPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[b"split"]));
            all.shuffle(&mut rng);
            let (mut a, mut b, mut c) = cut(&all, &spec.fractions);
            a.sort_unstable();
            b.sort_unstable();
            c.sort_unstable();
            (a, b, c)
        }
        SplitPolicy::GroupedByKey { key_col } => {
            let col = dataset
                .column(key_col)
                .ok_or_else(|| SplitError::UnknownColumn(key_col.clone()))?;
            let ts = if dataset.schema().timestamp_col.is_some() {
                Some(timestamps(dataset)?)
            } else {
                None
            };
            let mut groups: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
            for r in 0..n {
                groups.entry(col.cell_string(r)).or_default().push(r);
            }
            let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
            for (key, mut rows) in groups {
                if rows.len() < 3 {
                    a.extend(rows);
                    continue;
                }
                match &ts {
                    Some(ts) => temporal_order(&mut rows, ts),
                    None => {
                        let key_bytes = key.as_deref().unwrap_or("").as_bytes();
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[b"split-key", key_bytes]));
                        rows.shuffle(&mut rng);
                    }
                }
                let (x, y, z) = cut(&rows, &spec.fractions);
                a.extend(x);
                b.extend(y);
                c.extend(z);
            }
            a.sort_unstable();
            b.sort_unstable();
            c.sort_unstable();
            (a, b, c)
        }
    };
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}
