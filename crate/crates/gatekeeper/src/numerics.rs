//! Dense matrices, probability primitives, and a finite-difference
//! gradient checker. Everything downstream builds on these.

use crate::error::{Error, Result};

/// Log-stability floor applied inside every logarithm.
///
/// Prevents `-inf` on one-hot distributions, which confidence tuning
/// itself pushes the model toward.
pub const CLIP_EPS: f64 = 1e-12;

/// Row-major dense matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    /// Build from a row-major value buffer. Length and finiteness are checked.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {}x{}={} values, got {}",
                rows,
                cols,
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self (n×k) * other (k×m)`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (j, &b) in orow.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self (n×k) * other^T (k×m)` without materializing the transpose.
    pub fn matmul_transpose(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul_transpose {}x{} * ({}x{})^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let out_row = out.row_mut(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                out_row[j] = arow.iter().zip(brow).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// `self^T (k×n) * other (n×m)` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "transpose_matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let arow = self.row(n);
            let brow = other.row(n);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (j, &b) in brow.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// A categorical distribution over `C >= 2` classes.
///
/// Entries lie in `[0, 1]` and sum to one within `1e-9`; every log taken
/// of an entry is floored at [`clip_eps`](Self::clip_eps).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
    clip_eps: f64,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_clip(probs, CLIP_EPS)
    }

    pub fn with_clip(probs: Vec<f64>, clip_eps: f64) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Shape(format!(
                "probability vector needs >= 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Numeric("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs, clip_eps })
    }

    /// The uniform distribution over `classes` outcomes.
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Shape(format!("uniform needs >= 2 classes, got {classes}")));
        }
        Ok(Self { probs: vec![1.0 / classes as f64; classes], clip_eps: CLIP_EPS })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip_eps
    }
}

/// Numerically stable softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(Error::Shape(format!("softmax needs >= 2 logits, got {}", logits.len())));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("softmax input must be finite".into()));
    }
    let mut probs = vec![0.0; logits.len()];
    softmax_into(logits, &mut probs);
    Ok(ProbVector { probs, clip_eps: CLIP_EPS })
}

/// Softmax into a caller-provided buffer; inputs assumed finite.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `-log p_y`, floored at the clip epsilon. Always non-negative.
pub fn cross_entropy(p: &ProbVector, y: usize) -> Result<f64> {
    if y >= p.len() {
        return Err(Error::Index { index: y, len: p.len() });
    }
    Ok(-p.probs[y].max(p.clip_eps).ln())
}

/// Shannon entropy in nats, clipped logs; lies in `[0, log C]`.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_slice(p.probs(), p.clip_eps)
}

pub fn entropy_slice(probs: &[f64], clip_eps: f64) -> f64 {
    probs.iter().map(|&q| if q > 0.0 { -q * q.max(clip_eps).ln() } else { 0.0 }).sum()
}

/// KL divergence from `p` to the uniform distribution: `log C - H(p)`.
///
/// Shares the entropy clipping, so the identity with [`entropy`] is exact.
pub fn kl_to_uniform(p: &ProbVector) -> f64 {
    (p.len() as f64).ln() - entropy(p)
}

/// Result of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub param_count: usize,
    pub step_size: f64,
}

/// Central-difference gradient estimate, one coordinate at a time.
pub fn finite_diff_gradient<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let plus = f(&probe);
        probe[j] = theta[j] - h;
        let minus = f(&probe);
        probe[j] = theta[j];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective non-finite near coordinate {j}: f+={plus}, f-={minus}"
            )));
        }
        grad[j] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error between two gradient entries, floored to avoid 0/0.
pub fn gradient_relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compare an analytic gradient against [`finite_diff_gradient`] of `f`.
pub fn gradient_check<F>(f: F, theta: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let numeric = finite_diff_gradient(f, theta, h)?;
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| gradient_relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport { max_relative_error, param_count: theta.len(), step_size: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn softmax_symmetric_input() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_close(p.probs()[0], 0.5, 1e-15);
        assert_close(p.probs()[1], 0.5, 1e-15);
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert_close(p.probs()[0], 2.0 / 3.0, 1e-12);
        assert_close(p.probs()[1], 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(Error::Numeric(_))));
        assert!(matches!(softmax(&[f64::INFINITY, 0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn cross_entropy_certainty_and_uniform() {
        let hot = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert!(cross_entropy(&hot, 0).unwrap().abs() < 1e-10);
        let u4 = ProbVector::uniform(4).unwrap();
        for y in 0..4 {
            assert_close(cross_entropy(&u4, y).unwrap(), 4.0f64.ln(), 1e-12);
        }
        let p = ProbVector::new(vec![0.25, 0.75]).unwrap();
        assert_close(cross_entropy(&p, 1).unwrap(), -(0.75f64.ln()), 1e-12);
    }

    #[test]
    fn cross_entropy_index_error() {
        let p = ProbVector::uniform(3).unwrap();
        assert!(matches!(cross_entropy(&p, 3), Err(Error::Index { index: 3, len: 3 })));
    }

    #[test]
    fn kl_to_uniform_examples() {
        assert_close(kl_to_uniform(&ProbVector::uniform(7).unwrap()), 0.0, 1e-12);
        let mut one_hot = vec![0.0; 10];
        one_hot[3] = 1.0;
        let p = ProbVector::new(one_hot).unwrap();
        assert_close(kl_to_uniform(&p), 10.0f64.ln(), 1e-10);
        let p = ProbVector::new(vec![0.8, 0.2]).unwrap();
        assert_close(kl_to_uniform(&p), 0.19274475702175742, 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let hot = ProbVector::new(vec![0.0, 1.0]).unwrap();
        assert!(entropy(&hot).abs() < 1e-10);
        assert_close(entropy(&ProbVector::uniform(5).unwrap()), 5.0f64.ln(), 1e-12);
        let p = ProbVector::new(vec![0.8, 0.2]).unwrap();
        assert_close(entropy(&p), 0.5004024235381879, 1e-12);
    }

    #[test]
    fn finite_diff_quadratic() {
        let grad = finite_diff_gradient(|t| t.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5)
            .unwrap();
        assert_close(grad[0], 2.0, 1e-8);
        assert_close(grad[1], 4.0, 1e-8);
    }

    #[test]
    fn finite_diff_constant_is_zero() {
        let grad = finite_diff_gradient(|_| 3.5, &[0.3, -0.7, 1.1], 1e-5).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn finite_diff_softmax_ce() {
        // d/dz CE(softmax(z), y) = p - onehot(y); at z = [0,0], y = 0 this is [-0.5, 0.5].
        let f = |t: &[f64]| cross_entropy(&softmax(t).unwrap(), 0).unwrap();
        let grad = finite_diff_gradient(f, &[0.0, 0.0], 1e-5).unwrap();
        assert_close(grad[0], -0.5, 1e-8);
        assert_close(grad[1], 0.5, 1e-8);
    }

    #[test]
    fn finite_diff_rejects_non_finite_objective() {
        let res = finite_diff_gradient(|t| t[0].ln(), &[0.0], 1e-5);
        assert!(matches!(res, Err(Error::Numeric(_))));
    }

    #[test]
    fn gradient_check_catches_planted_sign_flip() {
        let f = |t: &[f64]| cross_entropy(&softmax(t).unwrap(), 0).unwrap();
        let good = [-0.5, 0.5];
        let flipped = [0.5, 0.5];
        let ok = gradient_check(f, &[0.0, 0.0], &good, 1e-5).unwrap();
        let bad = gradient_check(f, &[0.0, 0.0], &flipped, 1e-5).unwrap();
        assert!(ok.max_relative_error < 1e-6);
        assert!(bad.max_relative_error > 1e-1);
    }

    #[test]
    fn matmul_shapes_and_values() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.row(0), &[58.0, 64.0]);
        assert_eq!(c.row(1), &[139.0, 154.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn matmul_transpose_matches_explicit() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap();
        let c = a.matmul_transpose(&b).unwrap();
        assert_eq!(c.row(0), &[-2.0, 3.0]);
        assert_eq!(c.row(1), &[-2.0, 7.5]);
    }

    #[test]
    fn transpose_matmul_matches_explicit() {
        let a = DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 2, vec![0.5, -1.0, 2.0, 0.0, 1.0, 3.0]).unwrap();
        let out = a.transpose_matmul(&b).unwrap();
        // a^T b computed by hand
        assert_eq!(out.row(0), &[11.5, 14.0]);
        assert_eq!(out.row(1), &[15.0, 16.0]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..8),
            shift in -50.0f64..50.0,
        ) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn kl_identity_and_ranges(logits in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            let p = softmax(&logits).unwrap();
            let c = p.len() as f64;
            let h = entropy(&p);
            prop_assert!((kl_to_uniform(&p) - (c.ln() - h)).abs() < 1e-15);
            prop_assert!(h >= 0.0 && h <= c.ln() + 1e-12);
            prop_assert!(kl_to_uniform(&p) >= -1e-12 && kl_to_uniform(&p) <= c.ln() + 1e-12);
            for y in 0..p.len() {
                prop_assert!(cross_entropy(&p, y).unwrap() >= 0.0);
            }
        }
    }
}
