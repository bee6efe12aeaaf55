//! Persisted model artifacts and prediction tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EngineError, Stage};
use crate::dsdl::{serialize, Schema, TargetSpec, TargetType};
use crate::features::FeaturePlan;
use crate::hash::fnv1a;
use crate::models::{Hyperparameters, Model};
use crate::table::{format_f64, Dataset};
use crate::task::{MetricTable, ModelId};

pub const FORMAT_VERSION: u32 = 1;

/// Hex FNV-1a of the canonical DsDL text.
pub fn schema_fingerprint(schema: &Schema) -> String {
    format!("{:016x}", fnv1a(serialize(schema).as_bytes()))
}

/// Label vocabulary for list tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListVocabularies {
    /// Candidate labels: every label in the training interactions.
    pub candidates: Vec<String>,
    /// Positive labels per key in the training interactions, used when
    /// `exclude_seen` is set.
    pub seen: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub engine_version: String,
    pub target_index: usize,
    pub target: TargetSpec,
    pub task_type: TargetType,
    pub model_id: ModelId,
    pub hyperparameters: Hyperparameters,
    pub parameters: Model,
    pub feature_plan: Option<FeaturePlan>,
    pub vocabularies: Option<ListVocabularies>,
    pub exclude_seen: bool,
    /// Trial seed the parameters were trained with.
    pub seed: u64,
    pub master_seed: u64,
    pub schema_dsdl: String,
    pub schema_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl PredictionTable {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn key_strings(data: &Dataset, key_col: &str) -> Vec<String> {
    let col = data.column(key_col).expect("key column validated");
    (0..data.rows())
        .map(|r| col.cell_string(r).unwrap_or_default())
        .collect()
}

/// Top-`k` labels for `key` among `vocab.candidates`.
pub(crate) fn rank_key(
    model: &Model,
    vocab: &ListVocabularies,
    key: &str,
    k: usize,
    exclude_seen: bool,
) -> Result<Vec<(String, f64)>, crate::models::ModelError> {
    if exclude_seen {
        if let Some(seen) = vocab.seen.get(key) {
            let filtered: Vec<String> = vocab
                .candidates
                .iter()
                .filter(|c| !seen.contains(*c))
                .cloned()
                .collect();
            return model.rank(key, &filtered, k);
        }
    }
    model.rank(key, &vocab.candidates, k)
}

impl ModelArtifact {
    fn fail(&self, stage: Stage, message: impl Into<String>) -> EngineError {
        EngineError {
            target_index: self.target_index,
            stage,
            message: message.into(),
        }
    }

    /// Checks that `data` was read with the schema this artifact was
    /// trained on.
    pub fn check_schema(&self, data: &Dataset) -> Result<(), EngineError> {
        let found = schema_fingerprint(data.schema());
        if found != self.schema_fingerprint {
            return Err(self.fail(
                Stage::Predict,
                format!(
                    "data schema fingerprint {found} does not match the artifact's {}",
                    self.schema_fingerprint
                ),
            ));
        }
        Ok(())
    }

    /// Report metrics of the stored model on labelled `data`. List tasks
    /// take each key's rows in `data` as its truth.
    pub fn evaluate(&self, data: &Dataset) -> Result<MetricTable, EngineError> {
        self.check_schema(data)?;
        let rows = super::usable_rows(data, &self.target);
        let data = data.take(&rows);
        if data.rows() == 0 {
            return Err(self.fail(Stage::Evaluate, "no rows with key and label present"));
        }
        let eval_fail = |m: String| self.fail(Stage::Evaluate, m);
        match (&self.feature_plan, &self.vocabularies) {
            (Some(plan), _) => {
                let x = plan
                    .apply(&data)
                    .map_err(|e| self.fail(Stage::Features, e.to_string()))?;
                let p = self.parameters.predict(&x).map_err(|e| eval_fail(e.to_string()))?;
                let y = super::scalar_labels(&data, &self.target.label_col);
                super::scalar_table(self.task_type, &p, &y).map_err(|e| eval_fail(e.to_string()))
            }
            (None, Some(vocab)) => {
                let truth = super::truth_of(&super::interactions(&data, &self.target));
                let k = self.target.list_size.unwrap_or(1);
                super::list_table(self.task_type, &self.parameters, vocab, &truth, k, self.exclude_seen)
                    .map_err(|e| eval_fail(e.message))
            }
            (None, None) => Err(eval_fail("artifact has neither feature plan nor vocabulary".into())),
        }
    }

    /// Scalar tasks: one row per data row. List tasks: the top-`list_size`
    /// list of every key present in `data`.
    pub fn predict(&self, data: &Dataset) -> Result<PredictionTable, EngineError> {
        self.check_schema(data)?;
        let keys = key_strings(data, &self.target.key_col);
        match self.task_type {
            TargetType::Binary | TargetType::Numeric => {
                let plan = self
                    .feature_plan
                    .as_ref()
                    .ok_or_else(|| self.fail(Stage::Predict, "artifact has no feature plan"))?;
                let x = plan
                    .apply(data)
                    .map_err(|e| self.fail(Stage::Features, e.to_string()))?;
                let scores = self
                    .parameters
                    .predict(&x)
                    .map_err(|e| self.fail(Stage::Predict, e.to_string()))?;
                let header = if self.task_type == TargetType::Binary {
                    vec!["key", "score"]
                } else {
                    vec!["key", "prediction"]
                };
                let rows = keys
                    .into_iter()
                    .zip(scores)
                    .map(|(k, s)| vec![k, format_f64(s)])
                    .collect();
                Ok(PredictionTable { header, rows })
            }
            TargetType::OrderedList | TargetType::UnorderedList => {
                let vocab = self
                    .vocabularies
                    .as_ref()
                    .ok_or_else(|| self.fail(Stage::Predict, "artifact has no label vocabulary"))?;
                let k = self.target.list_size.unwrap_or(1) as usize;
                let distinct: BTreeSet<String> = keys.into_iter().collect();
                let ordered = self.task_type == TargetType::OrderedList;
                let mut rows = Vec::new();
                for key in distinct {
                    let ranked = rank_key(&self.parameters, vocab, &key, k, self.exclude_seen)
                        .map_err(|e| self.fail(Stage::Predict, e.to_string()))?;
                    for (pos, (label, score)) in ranked.into_iter().enumerate() {
                        rows.push(if ordered {
                            vec![key.clone(), (pos + 1).to_string(), label, format_f64(score)]
                        } else {
                            vec![key.clone(), label]
                        });
                    }
                }
                let header = if ordered {
                    vec!["key", "rank", "label", "score"]
                } else {
                    vec!["key", "label"]
                };
                Ok(PredictionTable { header, rows })
            }
        }
    }
}
