//! Variance and pairwise-correlation filtering over a sparse train matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

pub const MIN_VARIANCE: f64 = 1e-12;
pub const MAX_ABS_CORRELATION: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    LowVariance { variance: f64 },
    Correlated { with: String, r: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

pub(crate) struct FilterOutcome {
    /// Surviving column indices, ascending.
    pub kept: Vec<usize>,
    pub dropped: Vec<(usize, DropReason)>,
}

/// Population mean and variance per column.
pub(crate) fn column_moments(m: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let d = m.dim();
    let mut sum = vec![0.0; d];
    let mut count = vec![0usize; d];
    for i in 0..m.rows() {
        let (idx, val) = m.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            sum[j as usize] += v;
            count[j as usize] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    // two-pass: nonzeros contribute (v - mean)^2, implicit zeros mean^2
    let mut ss = vec![0.0; d];
    for i in 0..m.rows() {
        let (idx, val) = m.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            let dv = v - mean[j as usize];
            ss[j as usize] += dv * dv;
        }
    }
    let var = (0..d)
        .map(|j| (ss[j] + (m.rows() - count[j]) as f64 * mean[j] * mean[j]) / n)
        .collect();
    (mean, var)
}

/// Drops columns with variance below [`MIN_VARIANCE`], then scans the rest
/// in column order and drops the later column of any pair whose |Pearson r|
/// exceeds [`MAX_ABS_CORRELATION`].
pub(crate) fn filter_columns(m: &FeatureMatrix) -> FilterOutcome {
    let (mean, var) = column_moments(m);
    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for (j, &v) in var.iter().enumerate() {
        if v < MIN_VARIANCE {
            dropped.push((j, DropReason::LowVariance { variance: v }));
        } else {
            candidates.push(j);
        }
    }

    // Co-occurrence sums of x_a * x_b over rows, for candidate pairs a < b.
    let mut position = vec![usize::MAX; m.dim()];
    for (p, &j) in candidates.iter().enumerate() {
        position[j] = p;
    }
    let mut cross: HashMap<(u32, u32), f64> = HashMap::new();
    let mut live: Vec<(u32, f64)> = Vec::new();
    for i in 0..m.rows() {
        let (idx, val) = m.row(i);
        live.clear();
        live.extend(
            idx.iter()
                .zip(val)
                .filter(|(j, _)| position[**j as usize] != usize::MAX)
                .map(|(&j, &v)| (position[j as usize] as u32, v)),
        );
        for a in 0..live.len() {
            for b in a + 1..live.len() {
                let (pa, va) = live[a];
                let (pb, vb) = live[b];
                let key = if pa < pb { (pa, pb) } else { (pb, pa) };
                *cross.entry(key).or_insert(0.0) += va * vb;
            }
        }
    }

    let n = m.rows() as f64;
    let sd: Vec<f64> = candidates.iter().map(|&j| var[j].sqrt()).collect();
    let mut kept_pos: Vec<usize> = Vec::new();
    for (pb, &jb) in candidates.iter().enumerate() {
        let mut reject = None;
        for &pa in &kept_pos {
            let ja = candidates[pa];
            let exy = cross.get(&(pa as u32, pb as u32)).copied().unwrap_or(0.0) / n;
            let r = (exy - mean[ja] * mean[jb]) / (sd[pa] * sd[pb]);
            if r.abs() > MAX_ABS_CORRELATION {
                reject = Some((ja, r));
                break;
            }
        }
        match reject {
            Some((ja, r)) => dropped.push((
                jb,
                DropReason::Correlated {
                    with: m.names()[ja].clone(),
                    r,
                },
            )),
            None => kept_pos.push(pb),
        }
    }
    dropped.sort_by_key(|(j, _)| *j);
    FilterOutcome {
        kept: kept_pos.into_iter().map(|p| candidates[p]).collect(),
        dropped,
    }
}
