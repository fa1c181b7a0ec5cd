//! Gaussian kernel density estimation and the distributional-overlap
//! score: the integral of the pointwise minimum of the two estimated
//! confidence densities.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `0.9 * min(sigma, IQR/1.34) * n^(-1/5)`, floored at 1e-3.
    Silverman,
    Fixed(f64),
}

/// Where the density grid lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdeDomain {
    /// Grid over `[0, 1]` with reflection padding at both boundaries;
    /// suits max-softmax confidences that pile up near 1.
    UnitIntervalReflected,
    /// Grid over the pooled data span padded by three bandwidths; suits
    /// unbounded entropy-based signals.
    DataSpanPadded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub grid_points: usize,
    pub bandwidth_rule: BandwidthRule,
    pub domain: KdeDomain,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            grid_points: 512,
            bandwidth_rule: BandwidthRule::Silverman,
            domain: KdeDomain::DataSpanPadded,
        }
    }
}

impl KdeConfig {
    pub fn unit_interval() -> Self {
        Self { domain: KdeDomain::UnitIntervalReflected, ..Self::default() }
    }

    pub fn data_span() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::Config(format!(
                "need at least 16 grid points, got {}",
                self.grid_points
            )));
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth_rule {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("fixed bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

const BANDWIDTH_FLOOR: f64 = 1e-3;

/// Type-7 linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = sigma.min(iqr / 1.34);
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

fn bandwidth(cfg: &KdeConfig, sorted: &[f64]) -> f64 {
    match cfg.bandwidth_rule {
        BandwidthRule::Silverman => silverman_bandwidth(sorted),
        BandwidthRule::Fixed(h) => h.max(BANDWIDTH_FLOOR),
    }
}

fn gaussian_kernel_sum(x: f64, data: &[f64], h: f64) -> f64 {
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    data.iter()
        .map(|&xi| {
            let d = (x - xi) / h;
            (-0.5 * d * d).exp()
        })
        .sum::<f64>()
        * norm
}

fn density_on_grid(grid: &[f64], data: &[f64], h: f64, reflect_unit: bool) -> Vec<f64> {
    let n = data.len() as f64;
    grid.iter()
        .map(|&x| {
            let mut total = gaussian_kernel_sum(x, data, h);
            if reflect_unit {
                // reflect the sample across both boundaries of [0, 1]
                let reflected_low: Vec<f64> = data.iter().map(|&v| -v).collect();
                let reflected_high: Vec<f64> = data.iter().map(|&v| 2.0 - v).collect();
                total += gaussian_kernel_sum(x, &reflected_low, h);
                total += gaussian_kernel_sum(x, &reflected_high, h);
            }
            total / n
        })
        .collect()
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..grid.len() {
        area += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    area
}

fn checked_sorted(name: &str, scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::Data(format!(
            "overlap needs at least 2 {name} scores, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite {name} score")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted)
}

/// Distributional overlap of two score samples: KDE each set, evaluate on
/// a shared grid, integrate the pointwise minimum, clamp to `[0, 1]`.
/// Zero means perfectly separable confidences, one means indistinguishable.
pub fn kde_overlap(
    scores_correct: &[f64],
    scores_incorrect: &[f64],
    cfg: &KdeConfig,
) -> Result<f64> {
    cfg.validate()?;
    let a = checked_sorted("correct", scores_correct)?;
    let b = checked_sorted("incorrect", scores_incorrect)?;
    let h_a = bandwidth(cfg, &a);
    let h_b = bandwidth(cfg, &b);

    let (grid, reflect) = match cfg.domain {
        KdeDomain::UnitIntervalReflected => (linspace(0.0, 1.0, cfg.grid_points), true),
        KdeDomain::DataSpanPadded => {
            let h_max = h_a.max(h_b);
            let lo = a[0].min(b[0]) - 3.0 * h_max;
            let hi = a[a.len() - 1].max(b[b.len() - 1]) + 3.0 * h_max;
            (linspace(lo, hi, cfg.grid_points), false)
        }
    };
    let da = density_on_grid(&grid, &a, h_a, reflect);
    let db = density_on_grid(&grid, &b, h_b, reflect);
    let minimum: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x.min(*y)).collect();
    Ok(trapezoid(&grid, &minimum).clamp(0.0, 1.0))
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform_sample(lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeding::rng(seed, &[0xadd]);
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    fn normal_sample(mean: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeding::rng(seed, &[0x90a]);
        (0..n)
            .map(|_| {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                mean + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn identical_samples_overlap_near_one() {
        let xs = uniform_sample(0.0, 1.0, 500, 1);
        let s = kde_overlap(&xs, &xs, &KdeConfig::unit_interval()).unwrap();
        assert!(s >= 0.95, "overlap {s}");
        let g = normal_sample(0.0, 500, 2);
        let s = kde_overlap(&g, &g, &KdeConfig::data_span()).unwrap();
        assert!(s >= 0.95, "overlap {s}");
    }

    #[test]
    fn disjoint_supports_overlap_near_zero() {
        let hi = uniform_sample(0.9, 1.0, 400, 3);
        let lo = uniform_sample(0.0, 0.1, 400, 4);
        let s = kde_overlap(&hi, &lo, &KdeConfig::unit_interval()).unwrap();
        assert!(s <= 0.05, "overlap {s}");
    }

    #[test]
    fn gaussians_two_sigma_apart_match_closed_form() {
        // closed form for unit Gaussians 2 sigma apart: 2*Phi(-1) = 0.31731
        let a = normal_sample(0.0, 2000, 5);
        let b = normal_sample(2.0, 2000, 6);
        let s = kde_overlap(&a, &b, &KdeConfig::data_span()).unwrap();
        assert!((s - 0.3173).abs() < 0.05, "overlap {s}");
    }

    #[test]
    fn overlap_is_symmetric() {
        let a = uniform_sample(0.2, 0.9, 120, 7);
        let b = uniform_sample(0.1, 0.7, 90, 8);
        let cfg = KdeConfig::unit_interval();
        assert_eq!(kde_overlap(&a, &b, &cfg).unwrap(), kde_overlap(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn overlap_invariant_under_shared_affine_map_on_span_domain() {
        let a = normal_sample(0.0, 150, 9);
        let b = normal_sample(1.0, 150, 10);
        let cfg = KdeConfig::data_span();
        let base = kde_overlap(&a, &b, &cfg).unwrap();
        let map = |xs: &[f64]| -> Vec<f64> { xs.iter().map(|x| 3.5 * x + 11.0).collect() };
        let mapped = kde_overlap(&map(&a), &map(&b), &cfg).unwrap();
        assert!((base - mapped).abs() < 1e-9, "{base} vs {mapped}");
    }

    #[test]
    fn tiny_sets_are_data_errors() {
        let cfg = KdeConfig::default();
        assert!(matches!(kde_overlap(&[0.5], &[0.1, 0.2], &cfg), Err(Error::Data(_))));
        assert!(matches!(kde_overlap(&[0.5, 0.6], &[], &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn constant_sets_fall_back_to_floor_bandwidth() {
        let a = vec![0.5; 50];
        let b = vec![0.9; 50];
        let s = kde_overlap(&a, &b, &KdeConfig::unit_interval()).unwrap();
        assert!(s < 0.01, "overlap {s}");
        let same = kde_overlap(&a, &a, &KdeConfig::unit_interval()).unwrap();
        assert!(same > 0.95, "overlap {same}");
    }
}
