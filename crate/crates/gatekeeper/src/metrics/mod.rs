//! The evaluation suite: distributional overlap, AUROC, deferral curves,
//! deferral performance, Pearson correlation, and factuality-probability
//! normalization.

mod curves;
mod kde;

pub use curves::{
    deferral_curve_ideal, deferral_curve_ideal_binary, deferral_curve_ideal_graded,
    deferral_curve_random, deferral_curve_realized, deferral_performance, uniform_grid,
    DeferralCurve,
};
pub use kde::{kde_overlap, BandwidthRule, KdeConfig, KdeDomain};

use crate::error::{Error, Result};

/// Mann-Whitney AUROC: the probability that a random correct-prediction
/// score exceeds a random incorrect-prediction score, with half credit for
/// ties. Computed via one sort and average ranks.
pub fn auroc(scores_correct: &[f64], scores_incorrect: &[f64]) -> Result<f64> {
    if scores_correct.is_empty() || scores_incorrect.is_empty() {
        return Err(Error::Data("auroc needs at least one score in each set".into()));
    }
    let n_pos = scores_correct.len();
    let n_neg = scores_incorrect.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(n_pos + n_neg);
    all.extend(scores_correct.iter().map(|&s| (s, true)));
    all.extend(scores_incorrect.iter().map(|&s| (s, false)));
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Numeric("auroc scores must not be NaN".into()));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // average 1-based rank of the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// The quadratic pairwise AUROC count, used as an independent check of the
/// sort-based implementation.
pub fn auroc_pairwise(scores_correct: &[f64], scores_incorrect: &[f64]) -> Result<f64> {
    if scores_correct.is_empty() || scores_incorrect.is_empty() {
        return Err(Error::Data("auroc needs at least one score in each set".into()));
    }
    let mut numerator = 0.0;
    for &c in scores_correct {
        for &w in scores_incorrect {
            if c > w {
                numerator += 1.0;
            } else if c == w {
                numerator += 0.5;
            }
        }
    }
    Ok(numerator / (scores_correct.len() as f64 * scores_incorrect.len() as f64))
}

/// Sample Pearson correlation. Zero variance in either argument is an
/// error so callers can report the value as absent with a diagnostic.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} xs for {} ys", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Data("pearson needs at least two pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Data("pearson undefined: an argument has zero variance".into()));
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Judge-confidence normalization: two answer log-likelihoods softmaxed
/// into the probability that the candidate matches the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactualityScore {
    pub p_same: f64,
}

impl FactualityScore {
    pub fn p_diff(&self) -> f64 {
        1.0 - self.p_same
    }
}

/// `p_same = exp(l_same) / (exp(l_same) + exp(l_diff))`, computed through
/// the difference so it is stable for any magnitudes. Swapping the
/// arguments complements the result exactly.
pub fn factuality_prob(loglik_same: f64, loglik_diff: f64) -> Result<FactualityScore> {
    if !loglik_same.is_finite() || !loglik_diff.is_finite() {
        return Err(Error::Numeric("log-likelihoods must be finite".into()));
    }
    // evaluate the sigmoid on the nonnegative side; its value lies in
    // [0.5, 1] where 1 - x is exact, so the complement identity is exact
    let d = loglik_same - loglik_diff;
    let high = 1.0 / (1.0 + (-d.abs()).exp());
    let p_same = if d >= 0.0 { high } else { 1.0 - high };
    Ok(FactualityScore { p_same })
}

/// One evaluated model's metric suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub acc_s: f64,
    pub acc_l: f64,
    /// Dominance violation rate; absent in graded mode.
    pub delta: Option<f64>,
    /// Confidence-overlap of correct vs incorrect predictions; absent in
    /// graded mode.
    pub s_o: Option<f64>,
    pub s_auroc: Option<f64>,
    /// Deferral performance; absent when ideal and random coincide.
    pub s_d: Option<f64>,
    /// Signal/quality correlation; absent when degenerate.
    pub pearson_rho: Option<f64>,
}

/// Fixed column order of the metrics CSV.
pub const METRICS_CSV_HEADER: &str =
    "dataset,alpha,seed,gating,acc_s,acc_l,delta,s_o,s_auroc,s_d,pearson_rho";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row in the contract order; `alpha = None` marks the baseline
/// control.
pub fn metrics_csv_row(
    dataset: &str,
    alpha: Option<f64>,
    seed: u64,
    gating: &str,
    report: &MetricsReport,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        dataset,
        cell(alpha),
        seed,
        gating,
        report.acc_s,
        report.acc_l,
        cell(report.delta),
        cell(report.s_o),
        cell(report.s_auroc),
        cell(report.s_d),
        cell(report.pearson_rho),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn auroc_hand_case() {
        let v = auroc(&[0.9, 0.4], &[0.6, 0.1]).unwrap();
        assert_eq!(v, 0.75);
        assert_eq!(auroc_pairwise(&[0.9, 0.4], &[0.6, 0.1]).unwrap(), 0.75);
    }

    #[test]
    fn auroc_separated_and_all_ties() {
        assert_eq!(auroc(&[0.8, 0.9], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert!(auroc(&[], &[0.1]).is_err());
    }

    #[test]
    fn auroc_matches_pairwise_exactly_with_ties() {
        let mut rng = crate::seeding::rng(42, &[0x40c]);
        for _ in 0..50 {
            let n_pos = rng.gen_range(1..60);
            let n_neg = rng.gen_range(1..60);
            // coarse grid forces plenty of ties
            let pos: Vec<f64> = (0..n_pos).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
            let neg: Vec<f64> = (0..n_neg).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
            let fast = auroc(&pos, &neg).unwrap();
            let slow = auroc_pairwise(&pos, &neg).unwrap();
            assert_eq!(fast, slow, "pos={pos:?} neg={neg:?}");
        }
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance_is_a_diagnostic_error() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("variance"), "{err}");
    }

    #[test]
    fn factuality_examples() {
        assert_eq!(factuality_prob(2.0, 2.0).unwrap().p_same, 0.5);
        let p = factuality_prob(3.0f64.ln(), 0.0).unwrap().p_same;
        assert!((p - 0.75).abs() < 1e-12);
        let p = factuality_prob(0.0, 3.0f64.ln()).unwrap().p_same;
        assert!((p - 0.25).abs() < 1e-12);
    }

    #[test]
    fn factuality_complement_is_exact() {
        let mut rng = crate::seeding::rng(3, &[0xfac]);
        for _ in 0..1000 {
            let a = rng.gen_range(-50.0..50.0);
            let b = rng.gen_range(-50.0..50.0);
            let sum = factuality_prob(a, b).unwrap().p_same + factuality_prob(b, a).unwrap().p_same;
            assert_eq!(sum, 1.0);
        }
        assert!(factuality_prob(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn csv_row_has_contract_order_and_empty_absent_cells() {
        let report = MetricsReport {
            acc_s: 0.7,
            acc_l: 0.9,
            delta: Some(0.01),
            s_o: Some(0.4),
            s_auroc: Some(0.8),
            s_d: None,
            pearson_rho: None,
        };
        let row = metrics_csv_row("blobs", Some(0.05), 3, "max-softmax", &report);
        assert_eq!(row, "blobs,0.05,3,max-softmax,0.7,0.9,0.01,0.4,0.8,,");
        let baseline = metrics_csv_row("blobs", None, 3, "max-softmax", &report);
        assert!(baseline.starts_with("blobs,,3,"));
    }
}
