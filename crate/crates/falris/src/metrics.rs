//! Classification metrics, AUC, MSE, ROC construction, and the pooled
//! bootstrap test used to compare per-replication metric samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Positive class = operative (Y = 1).
pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut c = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&y, &pred) in labels.iter().zip(predictions) {
        match (y, pred) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::DegenerateData("labels must be 0/1".into())),
        }
    }
    Ok(c)
}

/// Metric values; a `None` records a zero denominator, never silently 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub tpv: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub mse: Option<f64>,
}

pub fn classification_metrics(c: &ConfusionCounts) -> MetricsReport {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let accuracy = ratio(c.tp + c.tn, c.total());
    let tpv = ratio(c.tp, c.tp + c.fp);
    let f1 = match (tpv, sensitivity) {
        (Some(t), Some(s)) if t + s > 0.0 => Some(2.0 * t * s / (t + s)),
        _ => None,
    };
    MetricsReport { sensitivity, specificity, accuracy, tpv, f1, auc: None, mse: None }
}

/// How score ties across the two classes count toward the AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Ties contribute 0 (strict inequality).
    #[default]
    Strict,
    /// Ties contribute 1/2 (Mann–Whitney convention).
    HalfCredit,
}

/// Probability that a failed system scores strictly below an operative one,
/// averaged over all failed/operative pairs.
pub fn auc_estimate(scores: &[f64], labels: &[u8]) -> Result<f64> {
    auc_estimate_with(scores, labels, TieRule::Strict)
}

pub fn auc_estimate_with(scores: &[f64], labels: &[u8], ties: TieRule) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_o = labels.iter().filter(|&&y| y == 1).count();
    let n_f = labels.len() - n_o;
    if n_o == 0 || n_f == 0 {
        return Err(Error::DegenerateData("AUC needs both classes".into()));
    }
    let mut hits = 0.0;
    for (sf, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 0) {
        for (so, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 1) {
            if sf < so {
                hits += 1.0;
            } else if sf == so && ties == TieRule::HalfCredit {
                hits += 0.5;
            }
        }
    }
    Ok(hits / (n_o as f64 * n_f as f64))
}

/// Mean squared error of reliability estimates against the true reliability.
pub fn mse_estimate(estimates: &[f64], true_r: &[f64]) -> Result<f64> {
    if estimates.len() != true_r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} true values",
            estimates.len(),
            true_r.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::DegenerateData("empty MSE sample".into()));
    }
    Ok(estimates
        .iter()
        .zip(true_r)
        .map(|(e, r)| (e - r) * (e - r))
        .sum::<f64>()
        / estimates.len() as f64)
}

/// ROC staircase as (1−specificity, sensitivity) pairs, one per distinct
/// threshold: +∞, the midpoints between consecutive distinct scores, −∞.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (thresholds, _) = threshold_grid(scores, labels)?;
    let n_o = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n_f = labels.len() as f64 - n_o;
    let mut pts = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &y) in scores.iter().zip(labels) {
            if s >= t {
                if y == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        pts.push((fp / n_f, tp / n_o));
    }
    Ok(pts)
}

/// Thresholds from +∞ down to −∞ (descending), plus the sorted distinct scores.
fn threshold_grid(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::DegenerateData("ROC needs both classes".into()));
    }
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut thresholds = vec![f64::INFINITY];
    for w in distinct.windows(2).rev() {
        thresholds.push(0.5 * (w[0] + w[1]));
    }
    thresholds.push(f64::NEG_INFINITY);
    Ok((thresholds, distinct))
}

/// Cutoff maximizing Youden's J = sensitivity + specificity − 1 on the given
/// sample, under the rule "classify 1 iff score ≥ cutoff". Candidates are 0
/// and the midpoints between consecutive distinct scores; ties go to the
/// smallest cutoff.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (_, distinct) = threshold_grid(scores, labels)?;
    let mut candidates = vec![0.0];
    for w in distinct.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    let n_o = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n_f = labels.len() as f64 - n_o;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &t in &candidates {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &y) in scores.iter().zip(labels) {
            if s >= t {
                if y == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let j = tp / n_o - fp / n_f;
        if j > best.0 + 1e-12 {
            best = (j, t);
        }
    }
    Ok(best.1)
}

/// p-value convention for `bootstrap_compare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BootstrapMode {
    /// p = #(|d*| ≥ |d|) / B — two-sided test of equal means.
    #[default]
    Standard,
    /// p = #(d* ≤ |d|) / B — the literal published rule, kept for comparison.
    PaperLiteral,
}

/// Pooled two-sample bootstrap for the difference in means. Draws B pairs of
/// with-replacement samples (of the original sizes) from the pooled data;
/// deterministic per seed via per-resample RNG substreams.
pub fn bootstrap_compare(
    sample_a: &[f64],
    sample_b: &[f64],
    b_resamples: usize,
    seed: u64,
    mode: BootstrapMode,
) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::DegenerateData("empty bootstrap sample".into()));
    }
    if b_resamples == 0 {
        return Err(Error::InvalidParameter("need at least one resample".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let d_obs = mean(sample_a) - mean(sample_b);
    // Sorted pool -> the resampling distribution depends only on the pooled
    // multiset, so swapping the arguments flips d* signs at most.
    let mut pool: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Substream assignment keyed by size order, again for swap symmetry.
    let (small, large, a_is_small) = if sample_a.len() <= sample_b.len() {
        (sample_a.len(), sample_b.len(), true)
    } else {
        (sample_b.len(), sample_a.len(), false)
    };
    let draw_mean = |stream: u64, len: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..len).map(|_| pool[rng.random_range(0..pool.len())]).sum::<f64>() / len as f64
    };
    let mut count = 0usize;
    for k in 0..b_resamples as u64 {
        let m_small = draw_mean(2 * k, small);
        let m_large = draw_mean(2 * k + 1, large);
        let d_star = if a_is_small { m_small - m_large } else { m_large - m_small };
        let hit = match mode {
            BootstrapMode::Standard => d_star.abs() >= d_obs.abs(),
            BootstrapMode::PaperLiteral => d_star <= d_obs.abs(),
        };
        if hit {
            count += 1;
        }
    }
    Ok(count as f64 / b_resamples as f64)
}
