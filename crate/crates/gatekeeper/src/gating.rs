//! Deferral signals and the thresholded cascade decision rule.

use crate::error::{Error, Result};
use crate::numerics::{entropy, ProbVector};

/// A sequence of per-position token distributions.
pub type TokenDistSeq = Vec<ProbVector>;

/// Which scalar confidence signal the small model exposes.
///
/// Max softmax applies to single-distribution outputs; negative predictive
/// entropy applies to sequences (a single distribution is a length-1
/// sequence).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatingFunction {
    MaxSoftmax,
    NegPredEntropy,
}

impl GatingFunction {
    pub fn name(self) -> &'static str {
        match self {
            GatingFunction::MaxSoftmax => "max-softmax",
            GatingFunction::NegPredEntropy => "nent",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "max-softmax" => Ok(GatingFunction::MaxSoftmax),
            "nent" => Ok(GatingFunction::NegPredEntropy),
            other => Err(Error::Config(format!("unknown gating function '{other}'"))),
        }
    }
}

/// A gating function together with its acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeferralRule {
    pub gating: GatingFunction,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CascadeChoice {
    Accept,
    Defer,
}

/// Max-softmax confidence: `max_c p_c`, in `[1/C, 1]`.
pub fn g_cl(p: &ProbVector) -> f64 {
    p.probs().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Negative predictive entropy averaged over positions:
/// `-(1/T) sum_t H(p_t)`, in `[-log C, 0]`. Higher means more confident.
pub fn g_nent(seq: &[ProbVector]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::Shape("negative predictive entropy of an empty sequence".into()));
    }
    let total: f64 = seq.iter().map(entropy).sum();
    Ok(-total / seq.len() as f64)
}

/// Accept on the small model iff `signal >= tau`; the boundary accepts.
pub fn cascade_decide(signal: f64, rule: &DeferralRule) -> CascadeChoice {
    if signal >= rule.tau {
        CascadeChoice::Accept
    } else {
        CascadeChoice::Defer
    }
}

/// A calibrated threshold and the deferral ratio it actually achieves on
/// the calibration set. With tie-heavy signals the exact target may be
/// unreachable, so the achieved ratio is reported rather than assumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCalibration {
    pub tau: f64,
    pub achieved_ratio: f64,
}

/// Choose `tau` so that the fraction of calibration signals below it (the
/// deferred fraction under the >=-accept rule) is as close as possible to
/// the target; ties prefer fewer deferrals. `target = 0` accepts everything
/// (`tau = min`), `target = 1` defers everything (`tau = +inf`).
pub fn calibrate_threshold(signals: &[f64], target: f64) -> Result<ThresholdCalibration> {
    if signals.is_empty() {
        return Err(Error::Data("cannot calibrate a threshold on zero signals".into()));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("target ratio must lie in [0,1], got {target}")));
    }
    if signals.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("signals must be finite".into()));
    }
    let n = signals.len();
    let mut sorted = signals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // candidate cuts: tau at each distinct value defers everything strictly
    // below it; tau = +inf defers all
    let mut best = ThresholdCalibration { tau: sorted[0], achieved_ratio: 0.0 };
    let mut best_err = target;
    let mut consider = |tau: f64, deferred: usize| {
        let ratio = deferred as f64 / n as f64;
        let err = (ratio - target).abs();
        if err < best_err {
            best_err = err;
            best = ThresholdCalibration { tau, achieved_ratio: ratio };
        }
    };
    for (k, &v) in sorted.iter().enumerate() {
        if k == 0 || v > sorted[k - 1] {
            consider(v, k);
        }
    }
    consider(f64::INFINITY, n);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax;
    use proptest::prelude::*;

    #[test]
    fn g_cl_bounds_and_example() {
        assert!((g_cl(&ProbVector::uniform(10).unwrap()) - 0.1).abs() < 1e-15);
        let hot = ProbVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(g_cl(&hot), 1.0);
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(g_cl(&p), 0.5);
    }

    #[test]
    fn g_nent_examples() {
        let hot = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert!(g_nent(&[hot.clone(), hot]).unwrap().abs() < 1e-10);
        let u = ProbVector::uniform(4).unwrap();
        assert!((g_nent(&[u.clone(), u.clone(), u]).unwrap() + 4.0f64.ln()).abs() < 1e-12);
        let p = ProbVector::new(vec![0.8, 0.2]).unwrap();
        let u2 = ProbVector::uniform(2).unwrap();
        let v = g_nent(&[p, u2]).unwrap();
        assert!((v - (-0.5967748020490666)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn g_nent_rejects_empty() {
        assert!(matches!(g_nent(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn decide_boundary_accepts() {
        let rule = DeferralRule { gating: GatingFunction::MaxSoftmax, tau: 0.5 };
        assert_eq!(cascade_decide(0.9, &rule), CascadeChoice::Accept);
        assert_eq!(cascade_decide(0.5, &rule), CascadeChoice::Accept);
        assert_eq!(cascade_decide(0.1, &rule), CascadeChoice::Defer);
    }

    #[test]
    fn calibrate_endpoints() {
        let signals = [0.4, 0.1, 0.3, 0.2];
        let none = calibrate_threshold(&signals, 0.0).unwrap();
        assert_eq!(none.achieved_ratio, 0.0);
        assert!(signals.iter().all(|&s| s >= none.tau));
        let all = calibrate_threshold(&signals, 1.0).unwrap();
        assert_eq!(all.achieved_ratio, 1.0);
        assert!(signals.iter().all(|&s| s < all.tau));
    }

    #[test]
    fn calibrate_half_defers_two_lowest() {
        let signals = [0.1, 0.2, 0.3, 0.4];
        let cal = calibrate_threshold(&signals, 0.5).unwrap();
        assert_eq!(cal.achieved_ratio, 0.5);
        let deferred: Vec<f64> = signals.iter().cloned().filter(|&s| s < cal.tau).collect();
        assert_eq!(deferred, vec![0.1, 0.2]);
    }

    #[test]
    fn calibrate_reports_achievable_ratio_under_ties() {
        let signals = [0.5, 0.5, 0.5, 0.9];
        let cal = calibrate_threshold(&signals, 0.5).unwrap();
        // only 0, 3/4 and 1 are achievable; ties prefer fewer deferrals
        assert_eq!(cal.achieved_ratio, 0.75);
        assert!(matches!(calibrate_threshold(&[], 0.5), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn sharpening_never_decreases_signals(
            logits in proptest::collection::vec(-4.0f64..4.0, 2..7),
            power in 1.0f64..4.0,
        ) {
            let p = softmax(&logits).unwrap();
            let sharper = softmax(&logits.iter().map(|z| z * power).collect::<Vec<_>>()).unwrap();
            prop_assert!(g_cl(&sharper) >= g_cl(&p) - 1e-12);
            let a = g_nent(&[p.clone()]).unwrap();
            let b = g_nent(&[sharper.clone()]).unwrap();
            prop_assert!(b >= a - 1e-12);
            let c = p.len() as f64;
            prop_assert!(g_cl(&p) >= 1.0 / c - 1e-12 && g_cl(&p) <= 1.0 + 1e-12);
            prop_assert!(a >= -c.ln() - 1e-12 && a <= 1e-12);
        }

        #[test]
        fn calibrated_ratio_close_to_target_without_ties(
            base in proptest::collection::vec(0.0f64..1.0, 3..40),
            target in 0.0f64..1.0,
        ) {
            // de-duplicate to guarantee distinct signals
            let mut signals = base;
            signals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            signals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            prop_assume!(signals.len() >= 2);
            let n = signals.len() as f64;
            let cal = calibrate_threshold(&signals, target).unwrap();
            prop_assert!((cal.achieved_ratio - target).abs() <= 1.0 / n + 1e-12);
            let realized = signals.iter().filter(|&&s| s < cal.tau).count() as f64 / n;
            prop_assert!((realized - cal.achieved_ratio).abs() < 1e-12);
        }
    }
}
