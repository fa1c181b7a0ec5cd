//! Deferral curves: joint accuracy as a function of the fraction of
//! inputs routed to the large model, for random, ideal, and realized
//! deferral strategies, plus the deferral-performance ratio.

use crate::error::{Error, Result};

/// Joint accuracy sampled over an ascending deferral-ratio grid from 0
/// (everything answered by the small model) to 1 (everything deferred).
#[derive(Debug, Clone, PartialEq)]
pub struct DeferralCurve {
    ratios: Vec<f64>,
    accuracies: Vec<f64>,
    p_s: f64,
    p_l: f64,
}

impl DeferralCurve {
    pub fn new(ratios: Vec<f64>, accuracies: Vec<f64>) -> Result<Self> {
        if ratios.len() != accuracies.len() {
            return Err(Error::Shape(format!(
                "{} ratios for {} accuracies",
                ratios.len(),
                accuracies.len()
            )));
        }
        if ratios.len() < 2 {
            return Err(Error::Shape("curve needs at least the two endpoints".into()));
        }
        if ratios[0] != 0.0 || *ratios.last().unwrap() != 1.0 {
            return Err(Error::Shape("ratio grid must span [0, 1]".into()));
        }
        if ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("ratio grid must be strictly ascending".into()));
        }
        let p_s = accuracies[0];
        let p_l = *accuracies.last().unwrap();
        Ok(Self { ratios, accuracies, p_s, p_l })
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    /// Accuracy at zero deferral: the small model alone.
    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    /// Accuracy at full deferral: the large model alone.
    pub fn p_l(&self) -> f64 {
        self.p_l
    }

    fn same_grid(&self, other: &DeferralCurve) -> bool {
        self.ratios.len() == other.ratios.len()
            && self.ratios.iter().zip(&other.ratios).all(|(a, b)| (a - b).abs() < 1e-12)
    }
}

/// An evenly spaced ratio grid with `segments + 1` points over `[0, 1]`.
pub fn uniform_grid(segments: usize) -> Vec<f64> {
    assert!(segments >= 1);
    (0..=segments).map(|k| k as f64 / segments as f64).collect()
}

fn check_endpoint_accuracies(p_s: f64, p_l: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_s) || !(0.0..=1.0).contains(&p_l) {
        return Err(Error::Config(format!("accuracies must lie in [0,1]: p_s={p_s}, p_l={p_l}")));
    }
    if p_s > p_l {
        return Err(Error::Config(format!(
            "small-model accuracy {p_s} exceeds large-model accuracy {p_l}"
        )));
    }
    Ok(())
}

/// Expected accuracy of deferring a uniformly random `r`-fraction:
/// the straight line `(1-r) p_s + r p_l`.
pub fn deferral_curve_random(p_s: f64, p_l: f64, grid: &[f64]) -> Result<DeferralCurve> {
    check_endpoint_accuracies(p_s, p_l)?;
    let accuracies = grid.iter().map(|&r| (1.0 - r) * p_s + r * p_l).collect();
    DeferralCurve::new(grid.to_vec(), accuracies)
}

/// Oracle accuracy when exactly the small model's mistakes are deferred
/// first: linear from `p_s` up to `p_l` over `r in [0, 1-p_s]`, then flat.
pub fn deferral_curve_ideal(p_s: f64, p_l: f64, grid: &[f64]) -> Result<DeferralCurve> {
    check_endpoint_accuracies(p_s, p_l)?;
    let accuracies = grid
        .iter()
        .map(|&r| {
            if p_s >= 1.0 {
                // degenerate: nothing to fix, the curve is identically 1
                1.0
            } else if r <= 1.0 - p_s {
                p_s + (p_l - p_s) / (1.0 - p_s) * r
            } else {
                p_l
            }
        })
        .collect();
    DeferralCurve::new(grid.to_vec(), accuracies)
}

/// Evaluate the joint value at every cut `k = 0..n` for a fixed deferral
/// priority order: the first `k` indices in `order` are answered by the
/// large model, the rest by the small model.
fn curve_for_order(order: &[usize], s_values: &[f64], l_values: &[f64]) -> Result<DeferralCurve> {
    let n = order.len();
    let mut ratios = Vec::with_capacity(n + 1);
    let mut accuracies = Vec::with_capacity(n + 1);
    let mut value: f64 = s_values.iter().sum();
    ratios.push(0.0);
    accuracies.push(value / n as f64);
    for (k, &i) in order.iter().enumerate() {
        value += l_values[i] - s_values[i];
        ratios.push((k + 1) as f64 / n as f64);
        accuracies.push(value / n as f64);
    }
    DeferralCurve::new(ratios, accuracies)
}

fn check_values(s_values: &[f64], l_values: &[f64]) -> Result<()> {
    if s_values.is_empty() {
        return Err(Error::Data("no records".into()));
    }
    if s_values.len() != l_values.len() {
        return Err(Error::Shape(format!(
            "{} small-model values for {} large-model values",
            s_values.len(),
            l_values.len()
        )));
    }
    Ok(())
}

/// Discrete oracle curve for binary correctness: defer every example the
/// small model gets wrong first (stable by index), then the correct ones.
pub fn deferral_curve_ideal_binary(
    s_correct: &[bool],
    l_correct: &[bool],
) -> Result<DeferralCurve> {
    let s_values: Vec<f64> = s_correct.iter().map(|&b| b as u8 as f64).collect();
    let l_values: Vec<f64> = l_correct.iter().map(|&b| b as u8 as f64).collect();
    check_values(&s_values, &l_values)?;
    let mut order: Vec<usize> = (0..s_correct.len()).filter(|&i| !s_correct[i]).collect();
    order.extend((0..s_correct.len()).filter(|&i| s_correct[i]));
    curve_for_order(&order, &s_values, &l_values)
}

/// Discrete oracle curve for graded scores: defer by descending
/// improvement `l_score - s_score` (stable by index).
pub fn deferral_curve_ideal_graded(
    s_scores: &[f64],
    l_scores: &[f64],
) -> Result<DeferralCurve> {
    check_values(s_scores, l_scores)?;
    let mut order: Vec<usize> = (0..s_scores.len()).collect();
    order.sort_by(|&a, &b| {
        let gain_a = l_scores[a] - s_scores[a];
        let gain_b = l_scores[b] - s_scores[b];
        gain_b.partial_cmp(&gain_a).unwrap().then(a.cmp(&b))
    });
    curve_for_order(&order, s_scores, l_scores)
}

/// Realized curve: at ratio `k/n` the `k` lowest-signal records (ties
/// broken by stable index order) are answered by the large model.
pub fn deferral_curve_realized(
    signals: &[f64],
    s_values: &[f64],
    l_values: &[f64],
) -> Result<DeferralCurve> {
    check_values(s_values, l_values)?;
    if signals.len() != s_values.len() {
        return Err(Error::Shape(format!(
            "{} signals for {} records",
            signals.len(),
            s_values.len()
        )));
    }
    if signals.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("signals must be finite".into()));
    }
    let mut order: Vec<usize> = (0..signals.len()).collect();
    order.sort_by(|&a, &b| signals[a].partial_cmp(&signals[b]).unwrap().then(a.cmp(&b)));
    curve_for_order(&order, s_values, l_values)
}

/// The deferral-performance ratio: realized gain over random deferral
/// divided by ideal gain over random deferral, via trapezoidal integrals
/// on a shared grid. `None` when the denominator degenerates (`p_s = p_l`);
/// negative values indicate a worse-than-random signal and are reported
/// unclamped.
pub fn deferral_performance(
    realized: &DeferralCurve,
    random: &DeferralCurve,
    ideal: &DeferralCurve,
) -> Result<Option<f64>> {
    if !realized.same_grid(random) || !realized.same_grid(ideal) {
        return Err(Error::Shape("deferral curves must share one ratio grid".into()));
    }
    let grid = realized.ratios();
    let trapz_diff = |hi: &DeferralCurve, lo: &DeferralCurve| -> f64 {
        let mut area = 0.0;
        for i in 1..grid.len() {
            let a = hi.accuracies[i - 1] - lo.accuracies[i - 1];
            let b = hi.accuracies[i] - lo.accuracies[i];
            area += 0.5 * (a + b) * (grid[i] - grid[i - 1]);
        }
        area
    };
    let numerator = trapz_diff(realized, random);
    let denominator = trapz_diff(ideal, random);
    if denominator < 1e-12 {
        return Ok(None);
    }
    Ok(Some(numerator / denominator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn random_curve_is_the_straight_line() {
        let grid = uniform_grid(10);
        let c = deferral_curve_random(0.6, 0.9, &grid).unwrap();
        assert_eq!(c.p_s(), 0.6);
        assert_eq!(c.p_l(), 0.9);
        assert!((c.accuracies()[5] - 0.75).abs() < 1e-12);
        for w in c.accuracies().windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_curve_rejects_inverted_accuracies() {
        assert!(deferral_curve_random(0.9, 0.6, &uniform_grid(4)).is_err());
    }

    #[test]
    fn ideal_curve_piecewise_values() {
        let grid = uniform_grid(10);
        let c = deferral_curve_ideal(0.6, 0.9, &grid).unwrap();
        assert!((c.accuracies()[2] - 0.75).abs() < 1e-12); // r = 0.2
        assert!((c.accuracies()[5] - 0.9).abs() < 1e-12); // r = 0.5, past the knee at 0.4
        assert_eq!(c.accuracies()[0], 0.6);
        // continuity at the knee
        let knee_grid = vec![0.0, 0.4 - 1e-9, 0.4, 0.4 + 1e-9, 1.0];
        let k = deferral_curve_ideal(0.6, 0.9, &knee_grid).unwrap();
        assert!((k.accuracies()[1] - k.accuracies()[3]).abs() < 1e-6);
    }

    #[test]
    fn ideal_curve_degenerate_perfect_small_model() {
        let c = deferral_curve_ideal(1.0, 1.0, &uniform_grid(4)).unwrap();
        assert!(c.accuracies().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn discrete_ideal_all_correct_starts_at_one() {
        let s = vec![true; 5];
        let l = vec![true, false, true, true, false];
        let c = deferral_curve_ideal_binary(&s, &l).unwrap();
        assert_eq!(c.accuracies()[0], 1.0);
        assert_eq!(c.p_l(), 3.0 / 5.0);
    }

    #[test]
    fn discrete_ideal_single_record() {
        let c = deferral_curve_ideal_binary(&[false], &[true]).unwrap();
        assert_eq!(c.ratios(), &[0.0, 1.0]);
        assert_eq!(c.accuracies(), &[0.0, 1.0]);
    }

    #[test]
    fn discrete_ideal_matches_continuous_when_large_model_is_perfect() {
        let mut rng = crate::seeding::rng(33, &[1]);
        for _ in 0..20 {
            let n = 200;
            let s: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.7).collect();
            let l = vec![true; n];
            let p_s = s.iter().filter(|&&b| b).count() as f64 / n as f64;
            let discrete = deferral_curve_ideal_binary(&s, &l).unwrap();
            let continuous = deferral_curve_ideal(p_s, 1.0, discrete.ratios()).unwrap();
            for (d, c) in discrete.accuracies().iter().zip(continuous.accuracies()) {
                assert!((d - c).abs() <= 1.0 / n as f64 + 1e-12, "{d} vs {c}");
            }
        }
    }

    #[test]
    fn graded_ideal_defers_largest_gain_first() {
        let s = [0.2, 0.9, 0.5];
        let l = [0.9, 0.8, 0.9]; // gains: 0.7, -0.1, 0.4
        let c = deferral_curve_ideal_graded(&s, &l).unwrap();
        // first deferred is index 0, then 2, then 1
        let vals = c.accuracies();
        assert!((vals[0] - (0.2 + 0.9 + 0.5) / 3.0).abs() < 1e-12);
        assert!((vals[1] - (0.9 + 0.9 + 0.5) / 3.0).abs() < 1e-12);
        assert!((vals[2] - (0.9 + 0.9 + 0.9) / 3.0).abs() < 1e-12);
        assert!((vals[3] - (0.9 + 0.8 + 0.9) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn realized_with_oracle_signal_equals_discrete_ideal() {
        let mut rng = crate::seeding::rng(8, &[2]);
        let n = 150;
        let s: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.6).collect();
        let l: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.9).collect();
        let signals: Vec<f64> = s.iter().map(|&b| b as u8 as f64).collect();
        let sv: Vec<f64> = s.iter().map(|&b| b as u8 as f64).collect();
        let lv: Vec<f64> = l.iter().map(|&b| b as u8 as f64).collect();
        let realized = deferral_curve_realized(&signals, &sv, &lv).unwrap();
        let ideal = deferral_curve_ideal_binary(&s, &l).unwrap();
        assert_eq!(realized, ideal);
    }

    #[test]
    fn realized_endpoints_are_model_accuracies() {
        let signals = [0.3, 0.9, 0.1];
        let sv = [1.0, 0.0, 1.0];
        let lv = [1.0, 1.0, 0.0];
        let c = deferral_curve_realized(&signals, &sv, &lv).unwrap();
        assert!((c.p_s() - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.p_l() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_shuffles_average_to_the_random_line() {
        let mut rng = crate::seeding::rng(91, &[3]);
        let n = 200;
        let s: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.55) as u8 as f64).collect();
        let l: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.9) as u8 as f64).collect();
        let signals = vec![0.5; n];
        let p_s = s.iter().sum::<f64>() / n as f64;
        let p_l = l.iter().sum::<f64>() / n as f64;

        let mut sums = vec![0.0; n + 1];
        let shuffles = 100;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..shuffles {
            order.shuffle(&mut rng);
            let sp: Vec<f64> = order.iter().map(|&i| s[i]).collect();
            let lp: Vec<f64> = order.iter().map(|&i| l[i]).collect();
            let c = deferral_curve_realized(&signals, &sp, &lp).unwrap();
            for (acc, v) in sums.iter_mut().zip(c.accuracies()) {
                *acc += v;
            }
        }
        let grid = uniform_grid(n);
        let line = deferral_curve_random(p_s.min(p_l), p_s.max(p_l), &grid).unwrap();
        for (sum, expect) in sums.iter().zip(line.accuracies()) {
            assert!((sum / shuffles as f64 - expect).abs() < 0.05);
        }
    }

    #[test]
    fn performance_endpoints_and_midpoint() {
        let grid = uniform_grid(50);
        let random = deferral_curve_random(0.6, 0.9, &grid).unwrap();
        let ideal = deferral_curve_ideal(0.6, 0.9, &grid).unwrap();
        assert!((deferral_performance(&ideal, &random, &ideal).unwrap().unwrap() - 1.0).abs() < 1e-9);
        assert!(deferral_performance(&random, &random, &ideal).unwrap().unwrap().abs() < 1e-9);
        let mid_acc: Vec<f64> = random
            .accuracies()
            .iter()
            .zip(ideal.accuracies())
            .map(|(r, i)| 0.5 * (r + i))
            .collect();
        let mid = DeferralCurve::new(grid.clone(), mid_acc).unwrap();
        let s_d = deferral_performance(&mid, &random, &ideal).unwrap().unwrap();
        assert!((s_d - 0.5).abs() < 1e-9);
    }

    #[test]
    fn performance_grid_mismatch_and_degenerate_denominator() {
        let a = deferral_curve_random(0.6, 0.9, &uniform_grid(10)).unwrap();
        let b = deferral_curve_random(0.6, 0.9, &uniform_grid(20)).unwrap();
        let i = deferral_curve_ideal(0.6, 0.9, &uniform_grid(10)).unwrap();
        assert!(matches!(deferral_performance(&b, &a, &i), Err(Error::Shape(_))));

        let grid = uniform_grid(10);
        let flat_random = deferral_curve_random(0.7, 0.7, &grid).unwrap();
        let flat_ideal = deferral_curve_ideal(0.7, 0.7, &grid).unwrap();
        let s_d = deferral_performance(&flat_random, &flat_random, &flat_ideal).unwrap();
        assert!(s_d.is_none());
    }

    proptest! {
        #[test]
        fn realized_curve_invariant_under_monotone_signal_transforms(
            signals in proptest::collection::vec(0.0f64..1.0, 5..40),
            flags in proptest::collection::vec(proptest::bool::ANY, 5..40),
        ) {
            let n = signals.len().min(flags.len());
            let signals = &signals[..n];
            let sv: Vec<f64> = flags[..n].iter().map(|&b| b as u8 as f64).collect();
            let lv = vec![1.0; n];
            let base = deferral_curve_realized(signals, &sv, &lv).unwrap();
            let mapped: Vec<f64> = signals.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
            let transformed = deferral_curve_realized(&mapped, &sv, &lv).unwrap();
            prop_assert_eq!(base, transformed);
        }
    }
}
