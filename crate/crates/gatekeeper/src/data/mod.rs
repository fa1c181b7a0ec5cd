//! Synthetic dataset generators with controllable difficulty, file
//! ingestion, deterministic splits and batching.

mod csv;
mod idx;
mod sequences;

pub use csv::load_csv;
pub use idx::load_idx;
pub use sequences::{gen_sequences, SequenceDataset, SequenceRule, SequenceTaskSpec, BOS_TOKEN};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{softmax, DenseMatrix, ProbVector};
use crate::seeding;

/// Labeled feature matrix; labels are class indices in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl TabularDataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::Data("dataset must contain at least one example".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Index { index: bad, len: class_count });
        }
        Ok(Self { features, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy the given rows into a new dataset slice.
    pub fn gather(&self, indices: &[usize]) -> (DenseMatrix, Vec<usize>) {
        let cols = self.features.cols();
        let mut m = DenseMatrix::zeros(indices.len(), cols);
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        (m, labels)
    }

    fn subset(&self, indices: &[usize]) -> TabularDataset {
        let (features, labels) = self.gather(indices);
        TabularDataset { features, labels, class_count: self.class_count }
    }
}

/// Isotropic Gaussian class blobs with independent label flips.
///
/// The flip rate is the difficulty knob: flipped examples form an
/// irreducible error region that no classifier can get right, so the small
/// model has something it must learn to be unconfident about.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBlobSpec {
    pub class_count: usize,
    pub dims: usize,
    pub means: Vec<Vec<f64>>,
    pub stddev: f64,
    pub label_flip_rate: f64,
    pub sample_count: usize,
}

impl SyntheticBlobSpec {
    /// Class means evenly spaced on a circle of the given radius (first two
    /// dimensions; any further dimensions are zero).
    pub fn ring(class_count: usize, dims: usize, radius: f64) -> Self {
        let means = (0..class_count)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / class_count as f64;
                let mut m = vec![0.0; dims.max(2)];
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
                m.truncate(dims.max(2));
                m
            })
            .collect();
        Self {
            class_count,
            dims: dims.max(2),
            means,
            stddev: 1.0,
            label_flip_rate: 0.0,
            sample_count: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.dims == 0 {
            return Err(Error::Config("need at least 1 feature dimension".into()));
        }
        if self.means.len() != self.class_count {
            return Err(Error::Config(format!(
                "{} means for {} classes",
                self.means.len(),
                self.class_count
            )));
        }
        if self.means.iter().any(|m| m.len() != self.dims) {
            return Err(Error::Config("mean dimensionality mismatch".into()));
        }
        for i in 0..self.means.len() {
            for j in i + 1..self.means.len() {
                if self.means[i] == self.means[j] {
                    return Err(Error::Config(format!("means {i} and {j} coincide")));
                }
            }
        }
        if !(self.stddev > 0.0) {
            return Err(Error::Config("stddev must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.label_flip_rate) {
            return Err(Error::Config(format!(
                "label flip rate must lie in [0, 0.5), got {}",
                self.label_flip_rate
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        Ok(())
    }
}

/// A generated blob sample with its pre-flip labels retained.
#[derive(Debug, Clone)]
pub struct BlobSample {
    pub dataset: TabularDataset,
    pub clean_labels: Vec<usize>,
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; u1 is kept away from zero so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate blob samples. Classes are drawn uniformly, features are
/// isotropic Gaussians around the class mean, and each label is flipped to
/// a uniformly random other class with the configured rate.
///
/// Sample and flip draws come from separate derived streams, so the same
/// seed produces identical features regardless of the flip rate.
pub fn gen_blobs_detailed(spec: &SyntheticBlobSpec, seed: u64) -> Result<BlobSample> {
    spec.validate()?;
    let mut sample_rng = seeding::rng(seed, &[0x5a]);
    let mut flip_rng = seeding::rng(seed, &[0xf1]);
    let n = spec.sample_count;
    let mut features = DenseMatrix::zeros(n, spec.dims);
    let mut clean_labels = Vec::with_capacity(n);
    for r in 0..n {
        let class = sample_rng.gen_range(0..spec.class_count);
        clean_labels.push(class);
        let row = features.row_mut(r);
        for (d, v) in row.iter_mut().enumerate() {
            *v = spec.means[class][d] + spec.stddev * standard_normal(&mut sample_rng);
        }
    }
    let mut labels = clean_labels.clone();
    if spec.label_flip_rate > 0.0 {
        for label in labels.iter_mut() {
            if flip_rng.gen::<f64>() < spec.label_flip_rate {
                let offset = flip_rng.gen_range(1..spec.class_count);
                *label = (*label + offset) % spec.class_count;
            }
        }
    }
    let dataset = TabularDataset::new(features, labels, spec.class_count)?;
    Ok(BlobSample { dataset, clean_labels })
}

pub fn gen_blobs(spec: &SyntheticBlobSpec, seed: u64) -> Result<TabularDataset> {
    Ok(gen_blobs_detailed(spec, seed)?.dataset)
}

/// Closed-form posterior over the true class under the blob model (equal
/// priors, shared isotropic covariance): a softmax over
/// `-||x - mean_c||^2 / (2 sigma^2)`.
pub fn bayes_posterior(spec: &SyntheticBlobSpec, x: &[f64]) -> Result<ProbVector> {
    if x.len() != spec.dims {
        return Err(Error::Shape(format!(
            "point has {} dims, spec has {}",
            x.len(),
            spec.dims
        )));
    }
    let inv_two_var = 1.0 / (2.0 * spec.stddev * spec.stddev);
    let scores: Vec<f64> = spec
        .means
        .iter()
        .map(|m| {
            let d2: f64 = m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2 * inv_two_var
        })
        .collect();
    softmax(&scores)
}

/// The optimal prediction under the blob model. With flip rates below
/// `(C-1)/C` this is also optimal against the flipped labels.
pub fn bayes_predict(spec: &SyntheticBlobSpec, x: &[f64]) -> Result<usize> {
    let posterior = bayes_posterior(spec, x)?;
    Ok(crate::models::predict_argmax(posterior.probs()))
}

/// Shuffled index partition with largest-remainder size rounding: the
/// parts are disjoint and exhaustive.
pub fn split_indices(
    n: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let fs = [fractions.0, fractions.1, fractions.2];
    if fs.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Config(format!("fractions must be non-negative, got {fs:?}")));
    }
    let sum: f64 = fs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("fractions sum to {sum}, expected 1")));
    }
    let mut sizes = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(3);
    let mut assigned = 0;
    for (i, &f) in fs.iter().enumerate() {
        let exact = f * n as f64;
        sizes[i] = exact.floor() as usize;
        assigned += sizes[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n - assigned {
        sizes[remainders[k % 3].0] += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeding::rng(seed, &[0x57]));
    let val = order.split_off(sizes[0]);
    let mut val = val;
    let test = val.split_off(sizes[1]);
    Ok((order, val, test))
}

/// Seeded shuffle followed by contiguous slicing. Sizes are rounded with
/// the largest-remainder rule so the three parts are disjoint and
/// exhaustive.
pub fn split(
    dataset: &TabularDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(TabularDataset, TabularDataset, TabularDataset)> {
    let (train_idx, val_idx, test_idx) = split_indices(dataset.len(), fractions, seed)?;
    Ok((
        maybe_subset(dataset, &train_idx),
        maybe_subset(dataset, &val_idx),
        maybe_subset(dataset, &test_idx),
    ))
}

fn maybe_subset(dataset: &TabularDataset, indices: &[usize]) -> TabularDataset {
    // An empty part keeps the feature width and class count so downstream
    // shape checks stay meaningful.
    if indices.is_empty() {
        return TabularDataset {
            features: DenseMatrix::zeros(0, dataset.features.cols()),
            labels: Vec::new(),
            class_count: dataset.class_count,
        };
    }
    dataset.subset(indices)
}

/// Index batches for one epoch: a reshuffle derived from `(seed, epoch)`
/// followed by contiguous chunks. The final short batch is kept.
pub fn batch_indices(len: usize, batch_size: usize, epoch: u64, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seeding::rng(seed, &[0xba7c4, epoch]));
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}
