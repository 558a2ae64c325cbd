use crate::error::BenchError;
use crate::svec::{sub, FeatureSet, SparseVec};

/// Exact support recovery: every true feature was selected.
pub fn success_metric(selected: &FeatureSet, truth: &FeatureSet) -> bool {
    selected.is_superset(truth)
}

pub fn l2_error(beta_hat: &SparseVec, beta_star: &SparseVec) -> f64 {
    sub(beta_hat, beta_star).norm()
}

/// Mann-Whitney statistic `P(s+ > s-) + P(s+ = s-) / 2`, via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, BenchError> {
    if scores.len() != labels.len() {
        return Err(BenchError::Config(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(BenchError::Config("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}
