use std::collections::{BTreeMap, BTreeSet};

use super::MetricError;

/// Neumaier-compensated sum in the given order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| compensated_sum(values.iter().copied()) / values.len() as f64)
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Area under the ROC curve, ties counted as half. `None` when labels hold
/// a single class.
pub fn metric_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>, MetricError> {
    check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (mut concordant, mut tied) = (0u64, 0u64);
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        concordant += pos * negatives_below;
        tied += pos * neg;
        negatives_below += neg;
        i = j;
    }
    let positives = labels.iter().filter(|&&y| y == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    Ok(Some(
        (2 * concordant + tied) as f64 / (2 * positives * negatives) as f64,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 with positives predicted at `score >= threshold`.
pub fn metric_prf(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Prf, MetricError> {
    check_scores(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf { precision, recall, f1 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    /// Percent; `None` when every truth is zero.
    pub mape: Option<f64>,
    /// `None` when truths are constant.
    pub r2: Option<f64>,
}

pub fn metric_regression(predictions: &[f64], truths: &[f64]) -> Result<RegressionMetrics, MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricError::Empty);
    }
    if predictions.iter().chain(truths).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n = truths.len() as f64;
    let ss_res = compensated_sum(predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)));
    let ape: Vec<f64> = predictions
        .iter()
        .zip(truths)
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| (p - t).abs() / t.abs())
        .collect();
    let mean_t = compensated_sum(truths.iter().copied()) / n;
    let ss_tot = compensated_sum(truths.iter().map(|t| (t - mean_t) * (t - mean_t)));
    Ok(RegressionMetrics {
        rmse: (ss_res / n).sqrt(),
        mape: mean_of(&ape).map(|m| m * 100.0),
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    })
}

/// `Σ_{i<k} rel_i / log2(i + 2)` over relevances in ranked order.
pub fn dcg(relevances: &[f64], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| r / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k for one ranked list; `all_relevances` is the key's full truth
/// profile. `None` when the ideal DCG is zero.
pub fn ndcg(ranked_relevances: &[f64], all_relevances: &[f64], k: usize) -> Option<f64> {
    let mut ideal = all_relevances.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    (idcg > 0.0).then(|| dcg(ranked_relevances, k) / idcg)
}

/// AP@k with binary relevance, normalised by `min(k, total_relevant)`.
pub fn average_precision(ranked_relevances: &[f64], total_relevant: usize, k: usize) -> Option<f64> {
    let denom = k.min(total_relevant);
    if denom == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in ranked_relevances.iter().take(k).enumerate() {
        if *r > 0.0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / denom as f64)
}

/// Reciprocal rank of the first relevant item within the top k, else 0.
pub fn reciprocal_rank(ranked_relevances: &[f64], k: usize) -> f64 {
    ranked_relevances
        .iter()
        .take(k)
        .position(|r| *r > 0.0)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Per key: labels in ranked order with their scores.
pub type RankedOutput = BTreeMap<String, Vec<(String, f64)>>;
/// Per key: label → relevance. Unlisted labels have relevance 0.
pub type TruthRelevance = BTreeMap<String, BTreeMap<String, f64>>;
/// Per key: predicted label set.
pub type SetOutput = BTreeMap<String, BTreeSet<String>>;
pub type TruthSets = BTreeMap<String, BTreeSet<String>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingMetrics {
    pub ndcg: Option<f64>,
    pub map: Option<f64>,
    pub mrr: Option<f64>,
    pub scored_keys: usize,
}

/// NDCG@k, MAP@k and MRR averaged over truth keys with at least one
/// relevant label. A key missing from `ranked` counts as an empty list.
pub fn metric_ranking(ranked: &RankedOutput, truth: &TruthRelevance, k: usize) -> Result<RankingMetrics, MetricError> {
    if k == 0 {
        return Err(MetricError::BadK);
    }
    let (mut ndcgs, mut aps, mut rrs) = (Vec::new(), Vec::new(), Vec::new());
    for (key, rel) in truth {
        let total_relevant = rel.values().filter(|r| **r > 0.0).count();
        if total_relevant == 0 {
            continue;
        }
        let list = ranked.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let ranked_rel: Vec<f64> = list
            .iter()
            .map(|(label, _)| rel.get(label).copied().unwrap_or(0.0))
            .collect();
        let all: Vec<f64> = rel.values().copied().collect();
        ndcgs.extend(ndcg(&ranked_rel, &all, k));
        aps.extend(average_precision(&ranked_rel, total_relevant, k));
        rrs.push(reciprocal_rank(&ranked_rel, k));
    }
    Ok(RankingMetrics {
        ndcg: mean_of(&ndcgs),
        map: mean_of(&aps),
        mrr: mean_of(&rrs),
        scored_keys: rrs.len(),
    })
}

pub fn jaccard_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetMetrics {
    pub jaccard_distance: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub scored_keys: usize,
}

/// Jaccard distance, Precision@K and Recall@K averaged over truth keys.
/// An empty predicted set has precision 0; keys with an empty truth set are
/// left out of the recall mean.
pub fn metric_set(predicted: &SetOutput, truth: &TruthSets, k: usize) -> Result<SetMetrics, MetricError> {
    if k == 0 {
        return Err(MetricError::BadK);
    }
    let empty = BTreeSet::new();
    let (mut dist, mut prec, mut rec) = (Vec::new(), Vec::new(), Vec::new());
    for (key, t) in truth {
        let p = predicted.get(key).unwrap_or(&empty);
        if p.len() > k {
            return Err(MetricError::OversizedSet {
                key: key.clone(),
                size: p.len(),
                k,
            });
        }
        let inter = p.intersection(t).count() as f64;
        dist.push(jaccard_distance(p, t));
        prec.push(if p.is_empty() { 0.0 } else { inter / p.len() as f64 });
        if !t.is_empty() {
            rec.push(inter / t.len() as f64);
        }
    }
    Ok(SetMetrics {
        jaccard_distance: mean_of(&dist),
        precision: mean_of(&prec),
        recall: mean_of(&rec),
        scored_keys: dist.len(),
    })
}
