//! Evaluation metrics: pixelwise ROC-AUC and thresholded Dice overlap.

use crate::error::{Error, Result};

/// Area under the ROC curve via the rank-sum statistic (ties get average
/// ranks). Labels are booleans; scores any finite ordering.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::arg("roc_auc needs equal-length, non-empty inputs"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::arg("roc_auc needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    // Average ranks over tied score groups (1-based ranks).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Dice overlap of the thresholded prediction against a binary mask.
pub fn dice_score(pred: &[f64], mask: &[f64], threshold: f64) -> Result<f64> {
    if pred.len() != mask.len() || pred.is_empty() {
        return Err(Error::arg("dice_score needs equal-length, non-empty inputs"));
    }
    let mut inter = 0.0;
    let mut a = 0.0;
    let mut b = 0.0;
    for (&p, &m) in pred.iter().zip(mask) {
        let pa = if p >= threshold { 1.0 } else { 0.0 };
        inter += pa * m;
        a += pa;
        b += m;
    }
    Ok(if a + b == 0.0 { 1.0 } else { 2.0 * inter / (a + b) })
}
