//! The hybrid correctness-aware loss: cross-entropy on currently-correct
//! examples, KL-to-uniform on currently-incorrect ones, blended by alpha.
//! Masks are recomputed from the live model outputs every batch and treated
//! as stop-gradient constants.

use crate::error::{Error, Result};
use crate::models::predict_argmax;
use crate::numerics::{softmax_into, DenseMatrix, CLIP_EPS};

/// How the token-level loss is normalized.
///
/// `PerBatch` divides both terms by the number of sequences only, which is
/// the literal two-term formula; `PerToken` divides by sequences times
/// positions. For equal-length batches the two are proportional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenNormalization {
    #[default]
    PerBatch,
    PerToken,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatekeeperConfig {
    pub alpha: f64,
    pub token_normalization: TokenNormalization,
    pub clip_eps: f64,
}

impl GatekeeperConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie strictly in (0,1), got {alpha}")));
        }
        Ok(Self { alpha, token_normalization: TokenNormalization::default(), clip_eps: CLIP_EPS })
    }

    pub fn with_normalization(mut self, norm: TokenNormalization) -> Self {
        self.token_normalization = norm;
        self
    }
}

/// Both loss terms, their blend, and the mask counts for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_corr: f64,
    pub l_incorr: f64,
    pub l_total: f64,
    pub n_corr: usize,
    pub n_incorr: usize,
}

/// Per-example correctness masks from argmax predictions. The second mask
/// is the complement of the first; no gradient flows through either.
pub fn correctness_masks(
    logits: &DenseMatrix,
    labels: &[usize],
) -> Result<(Vec<bool>, Vec<bool>)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let classes = logits.cols();
    let mut m_corr = Vec::with_capacity(labels.len());
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Index { index: y, len: classes });
        }
        m_corr.push(predict_argmax(logits.row(r)) == y);
    }
    let m_incorr = m_corr.iter().map(|&c| !c).collect();
    Ok((m_corr, m_incorr))
}

/// Per-row loss term and logit gradient, before any alpha or 1/N scaling.
///
/// Correct rows contribute `CE(p, y)` with gradient `p - onehot(y)`;
/// incorrect rows contribute `KL(p || U)` with gradient
/// `p_j (log p_j + H(p))`. Logs are floored at `clip_eps` in the values,
/// and the gradient carries the matching correction terms so that it is
/// the exact derivative of the clipped value.
fn row_term(
    logits_row: &[f64],
    y: usize,
    correct: bool,
    clip_eps: f64,
    probs: &mut [f64],
    grad_row: &mut [f64],
) -> f64 {
    softmax_into(logits_row, probs);
    if correct {
        let value = -probs[y].max(clip_eps).ln();
        for (g, &p) in grad_row.iter_mut().zip(probs.iter()) {
            *g = p;
        }
        grad_row[y] -= 1.0;
        value
    } else {
        let c = probs.len() as f64;
        let mut clipped_entropy = 0.0;
        let mut unclipped_mass = 0.0;
        for &p in probs.iter() {
            clipped_entropy -= p * p.max(clip_eps).ln();
            if p >= clip_eps {
                unclipped_mass += p;
            }
        }
        let value = c.ln() - clipped_entropy;
        for (g, &p) in grad_row.iter_mut().zip(probs.iter()) {
            let log_term = p.max(clip_eps).ln() + clipped_entropy;
            let clip_correction = if p >= clip_eps { 1.0 } else { 0.0 } - unclipped_mass;
            *g = p * (log_term + clip_correction);
        }
        value
    }
}

/// The classification-form hybrid loss with both terms divided by the full
/// batch size, plus the analytic logit gradient of the blend (masks held
/// constant). A batch with no incorrect examples yields `l_incorr = 0`.
pub fn gatekeeper_loss_classification(
    logits: &DenseMatrix,
    labels: &[usize],
    cfg: &GatekeeperConfig,
) -> Result<(LossBreakdown, DenseMatrix)> {
    let (m_corr, _) = correctness_masks(logits, labels)?;
    gatekeeper_loss_with_masks(logits, labels, &m_corr, cfg)
}

/// Same as [`gatekeeper_loss_classification`] but with caller-supplied
/// correctness masks, which makes the fixed-mask objective available to
/// finite-difference checks.
pub fn gatekeeper_loss_with_masks(
    logits: &DenseMatrix,
    labels: &[usize],
    m_corr: &[bool],
    cfg: &GatekeeperConfig,
) -> Result<(LossBreakdown, DenseMatrix)> {
    let n = logits.rows();
    if n == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    if labels.len() != n || m_corr.len() != n {
        return Err(Error::Shape(format!(
            "batch of {n} with {} labels and {} mask entries",
            labels.len(),
            m_corr.len()
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie strictly in (0,1), got {}", cfg.alpha)));
    }
    let classes = logits.cols();
    let scale = 1.0 / n as f64;
    let mut grad = DenseMatrix::zeros(n, classes);
    let mut probs = vec![0.0; classes];
    let mut sum_corr = 0.0;
    let mut sum_incorr = 0.0;
    let mut n_corr = 0;
    for (r, (&y, &correct)) in labels.iter().zip(m_corr).enumerate() {
        if y >= classes {
            return Err(Error::Index { index: y, len: classes });
        }
        let term = row_term(logits.row(r), y, correct, cfg.clip_eps, &mut probs, grad.row_mut(r));
        let weight = if correct {
            n_corr += 1;
            sum_corr += term;
            cfg.alpha * scale
        } else {
            sum_incorr += term;
            (1.0 - cfg.alpha) * scale
        };
        for g in grad.row_mut(r) {
            *g *= weight;
        }
    }
    let l_corr = sum_corr * scale;
    let l_incorr = sum_incorr * scale;
    let breakdown = LossBreakdown {
        l_corr,
        l_incorr,
        l_total: cfg.alpha * l_corr + (1.0 - cfg.alpha) * l_incorr,
        n_corr,
        n_incorr: n - n_corr,
    };
    Ok((breakdown, grad))
}

/// Token-level generalization: per-position masks under teacher forcing,
/// summed over sequences and positions. All sequences must share one
/// length; ragged batches are rejected.
pub fn gatekeeper_loss_token(
    position_logits: &[DenseMatrix],
    sequences: &[Vec<usize>],
    cfg: &GatekeeperConfig,
) -> Result<(LossBreakdown, Vec<DenseMatrix>)> {
    let n = sequences.len();
    if n == 0 {
        return Err(Error::Data("empty sequence batch".into()));
    }
    if position_logits.len() != n {
        return Err(Error::Shape(format!(
            "{} logit blocks for {n} sequences",
            position_logits.len()
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie strictly in (0,1), got {}", cfg.alpha)));
    }
    let t = sequences[0].len();
    if t == 0 {
        return Err(Error::Shape("sequences must have at least one position".into()));
    }
    for (i, seq) in sequences.iter().enumerate() {
        if seq.len() != t {
            return Err(Error::Shape(format!(
                "ragged batch: sequence 0 has length {t}, sequence {i} has length {}",
                seq.len()
            )));
        }
        if position_logits[i].rows() != t {
            return Err(Error::Shape(format!(
                "sequence {i} has {t} positions but {} logit rows",
                position_logits[i].rows()
            )));
        }
    }
    let classes = position_logits[0].cols();
    let denom = match cfg.token_normalization {
        TokenNormalization::PerBatch => n as f64,
        TokenNormalization::PerToken => (n * t) as f64,
    };
    let scale = 1.0 / denom;
    let mut grads = Vec::with_capacity(n);
    let mut probs = vec![0.0; classes];
    let mut sum_corr = 0.0;
    let mut sum_incorr = 0.0;
    let mut n_corr = 0;
    for (seq, logits) in sequences.iter().zip(position_logits) {
        let mut grad = DenseMatrix::zeros(t, classes);
        for (pos, &tok) in seq.iter().enumerate() {
            if tok >= classes {
                return Err(Error::Index { index: tok, len: classes });
            }
            let row = logits.row(pos);
            let correct = predict_argmax(row) == tok;
            let term = row_term(row, tok, correct, cfg.clip_eps, &mut probs, grad.row_mut(pos));
            let weight = if correct {
                n_corr += 1;
                sum_corr += term;
                cfg.alpha * scale
            } else {
                sum_incorr += term;
                (1.0 - cfg.alpha) * scale
            };
            for g in grad.row_mut(pos) {
                *g *= weight;
            }
        }
        grads.push(grad);
    }
    let l_corr = sum_corr * scale;
    let l_incorr = sum_incorr * scale;
    let breakdown = LossBreakdown {
        l_corr,
        l_incorr,
        l_total: cfg.alpha * l_corr + (1.0 - cfg.alpha) * l_incorr,
        n_corr,
        n_incorr: n * t - n_corr,
    };
    Ok((breakdown, grads))
}
