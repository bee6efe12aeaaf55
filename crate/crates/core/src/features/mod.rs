//! Type-driven feature engineering.
//!
//! [`fit`] learns per-column transforms from the train split only, encodes
//! the train rows, and prunes near-constant and near-duplicate features.
//! [`FeaturePlan::apply`] replays the fitted statistics on any split.
//!
//! | column type            | encoding                                           |
//! |------------------------|----------------------------------------------------|
//! | numeric                | mean-impute, z-score                               |
//! | binary                 | pass-through, missing = 0                          |
//! | categorical            | one-hot over top-N values + `__other__`            |
//! | ordinal                | first-seen rank scaled to [0, 1]                   |
//! | textual / url          | signed hashed bag of tokens                        |
//! | list_of_categorical    | multi-hot over top-N values + `__other__`          |
//! | list_of_numeric        | (mean, min, max, length)                           |
//! | list_of_binary         | (mean, length)                                     |
//! | list_of textual/url/ordinal | element-wise encoding, summed                 |

mod encode;
mod filter;
mod matrix;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsdl::{ColumnType, Schema, TargetSpec};
use crate::table::{Column, ColumnData, Dataset};

pub use encode::{hashed_slot, text_tokens, url_tokens};
pub use filter::{DropReason, DroppedFeature, MAX_ABS_CORRELATION, MIN_VARIANCE};
pub use matrix::FeatureMatrix;

pub const OTHER_TOKEN: &str = "__other__";
pub const MISSING_TOKEN: &str = "__missing__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub vocab_cap: usize,
    pub text_dims: usize,
    pub url_dims: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            vocab_cap: 256,
            text_dims: 1024,
            url_dims: 256,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("no usable feature columns remain after encoding and filtering")]
    NoUsableFeatures,
    #[error("column '{0}' is missing from the data")]
    MissingColumn(String),
    #[error("column '{column}' has type {found}, the plan expects {expected}")]
    TypeMismatch {
        column: String,
        expected: ColumnType,
        found: ColumnType,
    },
    #[error("feature configuration is invalid: {0}")]
    BadConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub value: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transformer {
    Standardize { mean: f64, std: f64, near_constant: bool },
    PassThrough,
    OneHot { vocabulary: Vec<VocabEntry> },
    OrdinalRank { levels: Vec<String>, fill: f64 },
    HashedTokens { dims: usize, url: bool },
    MultiHot { vocabulary: Vec<VocabEntry> },
    NumericListStats,
    BinaryListStats,
    OrdinalListSum { levels: Vec<String>, fill: f64 },
}

impl Transformer {
    pub fn width(&self) -> usize {
        match self {
            Transformer::Standardize { .. }
            | Transformer::PassThrough
            | Transformer::OrdinalRank { .. }
            | Transformer::OrdinalListSum { .. } => 1,
            Transformer::OneHot { vocabulary } | Transformer::MultiHot { vocabulary } => vocabulary.len() + 1,
            Transformer::HashedTokens { dims, .. } => *dims,
            Transformer::NumericListStats => 4,
            Transformer::BinaryListStats => 2,
        }
    }

    fn names(&self, column: &str) -> Vec<String> {
        match self {
            Transformer::Standardize { .. } | Transformer::PassThrough | Transformer::OrdinalRank { .. } => {
                vec![column.to_string()]
            }
            Transformer::OrdinalListSum { .. } => vec![format!("{column}.rank_sum")],
            Transformer::OneHot { vocabulary } | Transformer::MultiHot { vocabulary } => vocabulary
                .iter()
                .map(|e| format!("{column}={}", e.value))
                .chain(std::iter::once(format!("{column}={OTHER_TOKEN}")))
                .collect(),
            Transformer::HashedTokens { dims, .. } => (0..*dims).map(|i| format!("{column}#hash{i}")).collect(),
            Transformer::NumericListStats => ["mean", "min", "max", "len"]
                .iter()
                .map(|s| format!("{column}.{s}"))
                .collect(),
            Transformer::BinaryListStats => vec![format!("{column}.mean"), format!("{column}.len")],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub column: String,
    pub col_type: ColumnType,
    /// First raw (pre-filter) output index of this transform.
    pub offset: usize,
    pub width: usize,
    pub transformer: Transformer,
}

/// Fitted feature transformation. Serialises into the model artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub config: FeatureConfig,
    /// Columns not encoded because they carry the label, key, relevance or
    /// timestamp.
    pub excluded: Vec<String>,
    pub transforms: Vec<ColumnTransform>,
    pub raw_dimension: usize,
    /// Raw indices that survive filtering, ascending.
    pub kept: Vec<usize>,
    pub names: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    pub output_dimension: usize,
}

/// Columns that must not become features for `target`.
pub fn excluded_columns(schema: &Schema, target: &TargetSpec) -> Vec<String> {
    let mut out = vec![target.label_col.clone(), target.key_col.clone()];
    out.extend(target.relevance_col.clone());
    out.extend(schema.timestamp_col.clone());
    let mut seen = std::collections::HashSet::new();
    out.retain(|c| seen.insert(c.clone()));
    out
}

fn vocabulary<'a>(values: impl Iterator<Item = &'a str>, cap: usize) -> Vec<VocabEntry> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let mut entries: Vec<(&str, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries
        .into_iter()
        .take(cap)
        .map(|(value, count)| VocabEntry {
            value: value.to_string(),
            count,
        })
        .collect()
}

fn first_seen_levels<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    values.filter(|v| seen.insert(*v)).map(str::to_string).collect()
}

fn scaled_rank(position: usize, levels: usize) -> f64 {
    if levels <= 1 {
        0.0
    } else {
        position as f64 / (levels - 1) as f64
    }
}

fn fit_transformer(column: &Column, config: &FeatureConfig) -> Transformer {
    let rows = column.missing.len();
    let present = |r: &usize| !column.missing[*r];
    match (&column.data, column.spec.col_type) {
        (ColumnData::Numeric(v), _) => {
            let vals: Vec<f64> = (0..rows).filter(present).map(|r| v[r]).collect();
            if vals.is_empty() {
                return Transformer::Standardize {
                    mean: 0.0,
                    std: 0.0,
                    near_constant: true,
                };
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            Transformer::Standardize {
                mean,
                std,
                near_constant: var < MIN_VARIANCE,
            }
        }
        (ColumnData::Binary(_), _) => Transformer::PassThrough,
        (ColumnData::Text(v), ColumnType::Categorical) => {
            let tokens = (0..rows).map(|r| if column.missing[r] { MISSING_TOKEN } else { &*v[r] });
            Transformer::OneHot {
                vocabulary: vocabulary(tokens, config.vocab_cap),
            }
        }
        (ColumnData::Text(v), ColumnType::Ordinal) => {
            let levels = first_seen_levels((0..rows).filter(present).map(|r| &*v[r]));
            let m = levels.len();
            let fill = if m == 0 {
                0.0
            } else {
                let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let ranks: Vec<f64> = (0..rows)
                    .filter(present)
                    .map(|r| scaled_rank(index[&*v[r]], m))
                    .collect();
                ranks.iter().sum::<f64>() / ranks.len() as f64
            };
            Transformer::OrdinalRank { levels, fill }
        }
        (ColumnData::Text(_), ColumnType::Url) | (ColumnData::TextList(_), ColumnType::ListOfUrl) => {
            Transformer::HashedTokens {
                dims: config.url_dims,
                url: true,
            }
        }
        (ColumnData::Text(_), _) | (ColumnData::TextList(_), ColumnType::ListOfTextual) => Transformer::HashedTokens {
            dims: config.text_dims,
            url: false,
        },
        (ColumnData::TextList(v), ColumnType::ListOfCategorical) => Transformer::MultiHot {
            vocabulary: vocabulary(v.iter().flatten().map(|s| &**s), config.vocab_cap),
        },
        (ColumnData::TextList(v), _) => {
            let levels = first_seen_levels(v.iter().flatten().map(|s| &**s));
            let m = levels.len();
            let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let all: Vec<f64> = v.iter().flatten().map(|s| scaled_rank(index[&**s], m)).collect();
            let fill = if all.is_empty() {
                0.0
            } else {
                all.iter().sum::<f64>() / all.len() as f64
            };
            Transformer::OrdinalListSum { levels, fill }
        }
        (ColumnData::NumericList(_), _) => Transformer::NumericListStats,
        (ColumnData::BinaryList(_), _) => Transformer::BinaryListStats,
    }
}

/// Lookup tables derived from a transformer, built once per `apply`.
enum Encoder<'a> {
    Standardize {
        mean: f64,
        std: f64,
    },
    PassThrough,
    Vocab {
        index: HashMap<&'a str, usize>,
        other: usize,
        multi: bool,
    },
    Ordinal {
        index: HashMap<&'a str, usize>,
        levels: usize,
        fill: f64,
        sum: bool,
    },
    Hashed {
        dims: usize,
        url: bool,
    },
    NumericStats,
    BinaryStats,
}

impl<'a> Encoder<'a> {
    fn new(t: &'a Transformer) -> Self {
        let vocab_index = |v: &'a [VocabEntry]| -> HashMap<&'a str, usize> {
            v.iter().enumerate().map(|(i, e)| (e.value.as_str(), i)).collect()
        };
        let level_index = |l: &'a [String]| -> HashMap<&'a str, usize> {
            l.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
        };
        match t {
            Transformer::Standardize {
                mean,
                std,
                near_constant,
            } => Encoder::Standardize {
                mean: *mean,
                std: if *near_constant { 0.0 } else { *std },
            },
            Transformer::PassThrough => Encoder::PassThrough,
            Transformer::OneHot { vocabulary } => Encoder::Vocab {
                index: vocab_index(vocabulary),
                other: vocabulary.len(),
                multi: false,
            },
            Transformer::MultiHot { vocabulary } => Encoder::Vocab {
                index: vocab_index(vocabulary),
                other: vocabulary.len(),
                multi: true,
            },
            Transformer::OrdinalRank { levels, fill } => Encoder::Ordinal {
                index: level_index(levels),
                levels: levels.len(),
                fill: *fill,
                sum: false,
            },
            Transformer::OrdinalListSum { levels, fill } => Encoder::Ordinal {
                index: level_index(levels),
                levels: levels.len(),
                fill: *fill,
                sum: true,
            },
            Transformer::HashedTokens { dims, url } => Encoder::Hashed { dims: *dims, url: *url },
            Transformer::NumericListStats => Encoder::NumericStats,
            Transformer::BinaryListStats => Encoder::BinaryStats,
        }
    }

    /// Appends `(local index, value)` pairs for one cell.
    fn encode(&self, column: &Column, row: usize, out: &mut Vec<(usize, f64)>) {
        let missing = column.missing[row];
        match (self, &column.data) {
            (Encoder::Standardize { mean, std }, ColumnData::Numeric(v)) => {
                let x = if missing { *mean } else { v[row] };
                if *std > 0.0 {
                    out.push((0, (x - mean) / std));
                }
            }
            (Encoder::PassThrough, ColumnData::Binary(v)) => {
                if !missing && v[row] == 1 {
                    out.push((0, 1.0));
                }
            }
            (
                Encoder::Vocab {
                    index,
                    other,
                    multi: false,
                },
                ColumnData::Text(v),
            ) => {
                let token = if missing { MISSING_TOKEN } else { &*v[row] };
                out.push((index.get(token).copied().unwrap_or(*other), 1.0));
            }
            (
                Encoder::Vocab {
                    index,
                    other,
                    multi: true,
                },
                ColumnData::TextList(v),
            ) => {
                let start = out.len();
                for e in &v[row] {
                    let j = index.get(&**e).copied().unwrap_or(*other);
                    if !out[start..].iter().any(|(k, _)| *k == j) {
                        out.push((j, 1.0));
                    }
                }
            }
            (
                Encoder::Ordinal {
                    index,
                    levels,
                    fill,
                    sum: false,
                },
                ColumnData::Text(v),
            ) => {
                let x = if missing {
                    *fill
                } else {
                    index.get(&*v[row]).map_or(*fill, |&i| scaled_rank(i, *levels))
                };
                out.push((0, x));
            }
            (
                Encoder::Ordinal {
                    index,
                    levels,
                    fill,
                    sum: true,
                },
                ColumnData::TextList(v),
            ) => {
                let x: f64 = v[row]
                    .iter()
                    .map(|e| index.get(&**e).map_or(*fill, |&i| scaled_rank(i, *levels)))
                    .sum();
                out.push((0, x));
            }
            (Encoder::Hashed { dims, url }, data) => {
                let tokenize = |s: &str| if *url { url_tokens(s) } else { text_tokens(s) };
                let tokens: Vec<String> = match data {
                    ColumnData::Text(v) if !missing => tokenize(&v[row]),
                    ColumnData::TextList(v) => v[row].iter().flat_map(|s| tokenize(s)).collect(),
                    _ => Vec::new(),
                };
                for t in tokens {
                    let (slot, sign) = hashed_slot(&t, *dims);
                    out.push((slot, sign));
                }
            }
            (Encoder::NumericStats, ColumnData::NumericList(v)) => {
                let xs = &v[row];
                if !xs.is_empty() {
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    out.extend([(0, mean), (1, min), (2, max), (3, n)]);
                }
            }
            (Encoder::BinaryStats, ColumnData::BinaryList(v)) => {
                let xs = &v[row];
                if !xs.is_empty() {
                    let n = xs.len() as f64;
                    let mean = xs.iter().map(|&b| f64::from(b)).sum::<f64>() / n;
                    out.extend([(0, mean), (1, n)]);
                }
            }
            _ => unreachable!("encoder/column type combination checked in resolve"),
        }
    }
}

/// Sorts by index, sums duplicates (hash collisions) and drops exact zeros.
fn normalise_row(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|(j, _)| *j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|(_, v)| *v != 0.0);
    out
}

fn resolve<'d>(transforms: &[ColumnTransform], data: &'d Dataset) -> Result<Vec<&'d Column>, FeatureError> {
    transforms
        .iter()
        .map(|t| {
            let col = data
                .column(&t.column)
                .ok_or_else(|| FeatureError::MissingColumn(t.column.clone()))?;
            if col.spec.col_type != t.col_type {
                return Err(FeatureError::TypeMismatch {
                    column: t.column.clone(),
                    expected: t.col_type,
                    found: col.spec.col_type,
                });
            }
            Ok(col)
        })
        .collect()
}

/// Raw (pre-filter) encoding of every row.
fn encode_raw(transforms: &[ColumnTransform], data: &Dataset) -> Result<Vec<Vec<(usize, f64)>>, FeatureError> {
    let columns = resolve(transforms, data)?;
    let encoders: Vec<Encoder> = transforms.iter().map(|t| Encoder::new(&t.transformer)).collect();
    let rows = (0..data.rows())
        .into_par_iter()
        .map(|r| {
            let mut row = Vec::new();
            let mut local = Vec::new();
            for ((t, enc), col) in transforms.iter().zip(&encoders).zip(&columns) {
                local.clear();
                enc.encode(col, r, &mut local);
                row.extend(local.iter().map(|(j, v)| (t.offset + j, *v)));
            }
            normalise_row(row)
        })
        .collect();
    Ok(rows)
}

/// Fits the feature plan on `train` for `target`.
pub fn fit(
    train: &Dataset,
    schema: &Schema,
    target: &TargetSpec,
    config: FeatureConfig,
) -> Result<FeaturePlan, FeatureError> {
    if config.text_dims == 0 || config.url_dims == 0 {
        return Err(FeatureError::BadConfig("hash dimensions must be positive".into()));
    }
    let excluded = excluded_columns(schema, target);
    let mut transforms = Vec::new();
    let mut offset = 0;
    for spec in &schema.columns {
        if excluded.contains(&spec.col_name) {
            continue;
        }
        let column = train
            .column(&spec.col_name)
            .ok_or_else(|| FeatureError::MissingColumn(spec.col_name.clone()))?;
        let transformer = fit_transformer(column, &config);
        let width = transformer.width();
        transforms.push(ColumnTransform {
            column: spec.col_name.clone(),
            col_type: spec.col_type,
            offset,
            width,
            transformer,
        });
        offset += width;
    }
    let raw_dimension = offset;
    if raw_dimension == 0 || train.rows() == 0 {
        return Err(FeatureError::NoUsableFeatures);
    }

    let raw_names: Vec<String> = transforms.iter().flat_map(|t| t.transformer.names(&t.column)).collect();
    let raw = raw_matrix(encode_raw(&transforms, train)?, raw_dimension, raw_names.clone());
    let outcome = filter::filter_columns(&raw);
    if outcome.kept.is_empty() {
        return Err(FeatureError::NoUsableFeatures);
    }
    let names = outcome.kept.iter().map(|&j| raw_names[j].clone()).collect();
    let dropped = outcome
        .dropped
        .into_iter()
        .map(|(j, reason)| DroppedFeature {
            name: raw_names[j].clone(),
            reason,
        })
        .collect();
    Ok(FeaturePlan {
        config,
        excluded,
        transforms,
        raw_dimension,
        output_dimension: outcome.kept.len(),
        kept: outcome.kept,
        names,
        dropped,
    })
}

fn raw_matrix(rows: Vec<Vec<(usize, f64)>>, dim: usize, names: Vec<String>) -> FeatureMatrix {
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(|(j, v)| (j as u32, v)).collect())
        .collect();
    FeatureMatrix::from_rows(dim, rows, names)
}

impl FeaturePlan {
    pub fn output_dimension(&self) -> usize {
        self.output_dimension
    }

    /// Encodes `data` with the fitted statistics.
    pub fn apply(&self, data: &Dataset) -> Result<FeatureMatrix, FeatureError> {
        let mut remap = vec![u32::MAX; self.raw_dimension];
        for (new, &old) in self.kept.iter().enumerate() {
            remap[old] = new as u32;
        }
        let rows = encode_raw(&self.transforms, data)?
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .filter_map(|(j, v)| {
                        let k = remap[j];
                        (k != u32::MAX).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        Ok(FeatureMatrix::from_rows(
            self.output_dimension,
            rows,
            self.names.clone(),
        ))
    }

    /// Re-runs the variance and correlation filters over the already
    /// filtered encoding of `train`; returns the names that would be dropped.
    pub fn refilter(&self, train: &Dataset) -> Result<Vec<String>, FeatureError> {
        let m = self.apply(train)?;
        let outcome = filter::filter_columns(&m);
        Ok(outcome
            .dropped
            .into_iter()
            .map(|(j, _)| self.names[j].clone())
            .collect())
    }
}
