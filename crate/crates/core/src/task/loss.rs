use super::MetricError;

pub const PROBABILITY_CLIP: f64 = 1e-15;

fn check_pair(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
}

/// Per-row binary cross-entropy with clipped probability.
pub fn bce_term(p: f64, y: f64) -> f64 {
    let p = clip_probability(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn loss_bce(probabilities: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_pair(probabilities.len(), labels.len())?;
    let total: f64 = probabilities.iter().zip(labels).map(|(&p, &y)| bce_term(p, y)).sum();
    Ok(total / labels.len() as f64)
}

pub fn loss_mse(predictions: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check_pair(predictions.len(), truths.len())?;
    let total: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / truths.len() as f64)
}

pub fn loss_mae(predictions: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check_pair(predictions.len(), truths.len())?;
    let total: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / truths.len() as f64)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(pos - neg)`.
pub fn bpr_term(score_pos: f64, score_neg: f64) -> f64 {
    softplus(score_neg - score_pos)
}

/// Mean BPR loss over a batch of `(positive, negative)` score pairs.
pub fn loss_bpr(pairs: &[(f64, f64)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let total: f64 = pairs.iter().map(|&(p, n)| bpr_term(p, n)).sum();
    Ok(total / pairs.len() as f64)
}
