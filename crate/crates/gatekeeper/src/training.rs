//! Training loops: standard cross-entropy pretraining and the
//! correctness-aware fine-tuning stage. Masks are recomputed from the live
//! model every batch; all loops are deterministic under a fixed seed.

use std::path::Path;

use crate::data::{batch_indices, SequenceDataset, TabularDataset};
use crate::error::{Error, Result};
use crate::loss::{gatekeeper_loss_classification, gatekeeper_loss_token, GatekeeperConfig};
use crate::models::{
    backward, forward, predict_argmax, sgd_step, softmax_rows, MlpParams, TokenModelParams,
    Velocity,
};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0,1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One fine-tuning epoch of the hybrid loss, aggregated over batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub l_corr: f64,
    pub l_incorr: f64,
    pub l_total: f64,
    pub train_acc: f64,
    pub n_corr: usize,
    pub n_incorr: usize,
}

/// One cross-entropy pretraining epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeEpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// Append fine-tuning stats as CSV: one row per epoch.
pub fn write_stats_csv(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,l_corr,l_incorr,l_total,train_acc,n_corr,n_incorr\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.epoch, s.l_corr, s.l_incorr, s.l_total, s.train_acc, s.n_corr, s.n_incorr
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn check_class_shapes(params: &MlpParams, data: &TabularDataset) -> Result<()> {
    if params.input_dim() != data.features.cols() {
        return Err(Error::Shape(format!(
            "model expects {} features, dataset has {}",
            params.input_dim(),
            data.features.cols()
        )));
    }
    if params.output_dim() != data.class_count {
        return Err(Error::Shape(format!(
            "model has {} outputs, dataset has {} classes",
            params.output_dim(),
            data.class_count
        )));
    }
    Ok(())
}

/// Plain cross-entropy training of a classifier.
pub fn pretrain_classifier(
    params: &mut MlpParams,
    data: &TabularDataset,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<CeEpochStats>> {
    opt.validate()?;
    check_class_shapes(params, data)?;
    let mut velocity = Velocity::zeros_like(params);
    let mut stats = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in batch_indices(data.len(), opt.batch_size, epoch as u64, seed) {
            let (features, labels) = data.gather(&batch);
            let trace = forward(params, &features)?;
            let nb = labels.len() as f64;
            let mut grad = softmax_rows(trace.logits());
            for (r, &y) in labels.iter().enumerate() {
                let p_y = grad.at(r, y);
                loss_sum += -p_y.max(crate::numerics::CLIP_EPS).ln();
                if predict_argmax(trace.logits().row(r)) == y {
                    hits += 1;
                }
                let row = grad.row_mut(r);
                row[y] -= 1.0;
                for v in row.iter_mut() {
                    *v /= nb;
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            let grads = backward(params, &trace, &grad)?;
            sgd_step(params, &grads, opt.lr, opt.momentum, &mut velocity)?;
        }
        stats.push(CeEpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_acc: hits as f64 / data.len() as f64,
        });
    }
    Ok(stats)
}

/// Correctness-aware fine-tuning of a classifier with the hybrid loss.
pub fn finetune_classifier(
    params: &mut MlpParams,
    data: &TabularDataset,
    cfg: &GatekeeperConfig,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    opt.validate()?;
    check_class_shapes(params, data)?;
    let mut velocity = Velocity::zeros_like(params);
    let mut stats = Vec::with_capacity(epochs);
    let n = data.len() as f64;
    for epoch in 0..epochs {
        let mut corr_sum = 0.0;
        let mut incorr_sum = 0.0;
        let mut n_corr = 0usize;
        for batch in batch_indices(data.len(), opt.batch_size, epoch as u64, seed) {
            let (features, labels) = data.gather(&batch);
            let trace = forward(params, &features)?;
            let (breakdown, dl_dlogits) =
                gatekeeper_loss_classification(trace.logits(), &labels, cfg)?;
            if !breakdown.l_total.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            let nb = labels.len() as f64;
            corr_sum += breakdown.l_corr * nb;
            incorr_sum += breakdown.l_incorr * nb;
            n_corr += breakdown.n_corr;
            let grads = backward(params, &trace, &dl_dlogits)?;
            sgd_step(params, &grads, opt.lr, opt.momentum, &mut velocity)?;
        }
        let l_corr = corr_sum / n;
        let l_incorr = incorr_sum / n;
        stats.push(EpochStats {
            epoch,
            l_corr,
            l_incorr,
            l_total: cfg.alpha * l_corr + (1.0 - cfg.alpha) * l_incorr,
            train_acc: n_corr as f64 / n,
            n_corr,
            n_incorr: data.len() - n_corr,
        });
    }
    Ok(stats)
}

fn stacked_contexts(
    params: &TokenModelParams,
    data: &SequenceDataset,
    batch: &[usize],
) -> Result<DenseMatrix> {
    let t = data.length();
    let width = params.context_window() * params.vocab_size();
    let mut contexts = DenseMatrix::zeros(batch.len() * t, width);
    for (b, &i) in batch.iter().enumerate() {
        let ctx = params.context_matrix(&data.sequences[i])?;
        for pos in 0..t {
            contexts.row_mut(b * t + pos).copy_from_slice(ctx.row(pos));
        }
    }
    Ok(contexts)
}

fn check_token_shapes(params: &TokenModelParams, data: &SequenceDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty sequence dataset".into()));
    }
    if params.vocab_size() != data.vocab_size {
        return Err(Error::Shape(format!(
            "model vocab {} but dataset vocab {}",
            params.vocab_size(),
            data.vocab_size
        )));
    }
    let t = data.length();
    if data.sequences.iter().any(|s| s.len() != t) {
        return Err(Error::Shape("ragged sequence dataset".into()));
    }
    Ok(())
}

/// Teacher-forced cross-entropy pretraining of the token model, averaged
/// per token.
pub fn pretrain_token(
    params: &mut TokenModelParams,
    data: &SequenceDataset,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<CeEpochStats>> {
    opt.validate()?;
    check_token_shapes(params, data)?;
    let t = data.length();
    let mut velocity = Velocity::zeros_like(params.mlp());
    let mut stats = Vec::with_capacity(epochs);
    let token_total = (data.len() * t) as f64;
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in batch_indices(data.len(), opt.batch_size, epoch as u64, seed) {
            let contexts = stacked_contexts(params, data, &batch)?;
            let trace = forward(params.mlp(), &contexts)?;
            let tokens = (batch.len() * t) as f64;
            let mut grad = softmax_rows(trace.logits());
            for (b, &i) in batch.iter().enumerate() {
                for (pos, &tok) in data.sequences[i].iter().enumerate() {
                    let r = b * t + pos;
                    let p_y = grad.at(r, tok);
                    loss_sum += -p_y.max(crate::numerics::CLIP_EPS).ln();
                    if predict_argmax(trace.logits().row(r)) == tok {
                        hits += 1;
                    }
                    let row = grad.row_mut(r);
                    row[tok] -= 1.0;
                    for v in row.iter_mut() {
                        *v /= tokens;
                    }
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            let grads = backward(params.mlp(), &trace, &grad)?;
            sgd_step(params.mlp_mut(), &grads, opt.lr, opt.momentum, &mut velocity)?;
        }
        stats.push(CeEpochStats {
            epoch,
            loss: loss_sum / token_total,
            train_acc: hits as f64 / token_total,
        });
    }
    Ok(stats)
}

/// Correctness-aware fine-tuning of the token model with the token-level
/// hybrid loss.
pub fn finetune_token(
    params: &mut TokenModelParams,
    data: &SequenceDataset,
    cfg: &GatekeeperConfig,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    opt.validate()?;
    check_token_shapes(params, data)?;
    let t = data.length();
    let c = params.vocab_size();
    let mut velocity = Velocity::zeros_like(params.mlp());
    let mut stats = Vec::with_capacity(epochs);
    let token_total = (data.len() * t) as f64;
    for epoch in 0..epochs {
        let mut corr_sum = 0.0;
        let mut incorr_sum = 0.0;
        let mut n_corr = 0usize;
        let mut seq_count = 0usize;
        for batch in batch_indices(data.len(), opt.batch_size, epoch as u64, seed) {
            let contexts = stacked_contexts(params, data, &batch)?;
            let trace = forward(params.mlp(), &contexts)?;
            let per_seq_logits: Vec<DenseMatrix> = (0..batch.len())
                .map(|b| {
                    let mut m = DenseMatrix::zeros(t, c);
                    for pos in 0..t {
                        m.row_mut(pos).copy_from_slice(trace.logits().row(b * t + pos));
                    }
                    m
                })
                .collect();
            let sequences: Vec<Vec<usize>> =
                batch.iter().map(|&i| data.sequences[i].clone()).collect();
            let (breakdown, grads) = gatekeeper_loss_token(&per_seq_logits, &sequences, cfg)?;
            if !breakdown.l_total.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            // accumulate as per-sequence sums so epoch stats are normalized once
            let nb = batch.len() as f64;
            corr_sum += breakdown.l_corr * nb;
            incorr_sum += breakdown.l_incorr * nb;
            n_corr += breakdown.n_corr;
            seq_count += batch.len();

            let mut stacked = DenseMatrix::zeros(batch.len() * t, c);
            for (b, g) in grads.iter().enumerate() {
                for pos in 0..t {
                    stacked.row_mut(b * t + pos).copy_from_slice(g.row(pos));
                }
            }
            let pgrads = backward(params.mlp(), &trace, &stacked)?;
            sgd_step(params.mlp_mut(), &pgrads, opt.lr, opt.momentum, &mut velocity)?;
        }
        let l_corr = corr_sum / seq_count as f64;
        let l_incorr = incorr_sum / seq_count as f64;
        stats.push(EpochStats {
            epoch,
            l_corr,
            l_incorr,
            l_total: cfg.alpha * l_corr + (1.0 - cfg.alpha) * l_incorr,
            train_acc: n_corr as f64 / token_total,
            n_corr,
            n_incorr: data.len() * t - n_corr,
        });
    }
    Ok(stats)
}

/// Fraction of examples whose argmax prediction matches the label.
pub fn classifier_accuracy(params: &MlpParams, data: &TabularDataset) -> Result<f64> {
    let trace = forward(params, &data.features)?;
    let hits = data
        .labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| predict_argmax(trace.logits().row(r)) == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, gen_sequences, SequenceRule, SequenceTaskSpec, SyntheticBlobSpec};
    use crate::models::{init_params, Activation};

    fn blob_data(n: usize) -> TabularDataset {
        let mut spec = SyntheticBlobSpec::ring(3, 2, 4.0);
        spec.sample_count = n;
        gen_blobs(&spec, 5).unwrap()
    }

    fn opt(lr: f64) -> OptimizerConfig {
        OptimizerConfig { lr, momentum: 0.9, batch_size: 32 }
    }

    #[test]
    fn pretrain_learns_separable_blobs() {
        let data = blob_data(600);
        let mut params = init_params(1, &[2, 16, 3], Activation::Relu).unwrap();
        let stats = pretrain_classifier(&mut params, &data, &opt(0.05), 12, 3).unwrap();
        assert_eq!(stats.len(), 12);
        assert!(stats.last().unwrap().train_acc > 0.9, "{:?}", stats.last());
        assert!(stats.last().unwrap().loss < stats[0].loss);
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let data = blob_data(100);
        let mut params = init_params(2, &[2, 8, 3], Activation::Relu).unwrap();
        let before = params.clone();
        let cfg = GatekeeperConfig::new(0.3).unwrap();
        let stats = finetune_classifier(&mut params, &data, &cfg, &opt(0.01), 0, 3).unwrap();
        assert!(stats.is_empty());
        assert_eq!(before, params);
    }

    #[test]
    fn finetune_is_reproducible_bitwise() {
        let data = blob_data(300);
        let cfg = GatekeeperConfig::new(0.1).unwrap();
        let run = || {
            let mut p = init_params(4, &[2, 12, 3], Activation::Relu).unwrap();
            pretrain_classifier(&mut p, &data, &opt(0.05), 4, 7).unwrap();
            let stats = finetune_classifier(&mut p, &data, &cfg, &opt(0.005), 4, 9).unwrap();
            (p, stats)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn finetune_aborts_on_divergence() {
        // features and weights chosen so the first matmul overflows to
        // inf, which turns the softmax (inf - inf) into NaN
        let features = DenseMatrix::from_vec(4, 2, vec![1e308; 8]).unwrap();
        let data = TabularDataset::new(features, vec![1, 1, 1, 1], 3).unwrap();
        let mut params = init_params(2, &[2, 8, 3], Activation::Relu).unwrap();
        let ones = vec![1.0; params.param_count()];
        params.set_from_flat(&ones).unwrap();
        let cfg = GatekeeperConfig::new(0.5).unwrap();
        let res = finetune_classifier(
            &mut params,
            &data,
            &cfg,
            &OptimizerConfig { lr: 1.0, momentum: 0.0, batch_size: 4 },
            4,
            3,
        );
        assert!(res.is_err(), "expected divergence, got {res:?}");
    }

    #[test]
    fn token_pretrain_learns_copy_rule() {
        let spec = SequenceTaskSpec {
            vocab_size: 4,
            length: 8,
            rule: SequenceRule::CopyWithNoise,
            ambiguous_fraction: 0.2,
            sample_count: 400,
        };
        let data = gen_sequences(&spec, 2).unwrap();
        let mut params = TokenModelParams::init(3, 4, 2, &[16], Activation::Relu, 0).unwrap();
        let stats = pretrain_token(&mut params, &data, &opt(0.1), 10, 4).unwrap();
        // copy is the dominant pattern; accuracy should comfortably beat 1/4 chance
        assert!(stats.last().unwrap().train_acc > 0.6, "{:?}", stats.last());
    }

    #[test]
    fn token_finetune_runs_and_logs_mask_counts() {
        let spec = SequenceTaskSpec {
            vocab_size: 4,
            length: 6,
            rule: SequenceRule::CopyWithNoise,
            ambiguous_fraction: 0.3,
            sample_count: 200,
        };
        let data = gen_sequences(&spec, 8).unwrap();
        let mut params = TokenModelParams::init(6, 4, 2, &[16], Activation::Relu, 0).unwrap();
        pretrain_token(&mut params, &data, &opt(0.1), 4, 1).unwrap();
        let cfg = GatekeeperConfig::new(0.1).unwrap();
        let stats = finetune_token(&mut params, &data, &cfg, &opt(0.01), 3, 2).unwrap();
        assert_eq!(stats.len(), 3);
        for s in &stats {
            assert_eq!(s.n_corr + s.n_incorr, 200 * 6);
            assert!((s.l_total - (0.1 * s.l_corr + 0.9 * s.l_incorr)).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_csv_has_contract_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        let stats = vec![EpochStats {
            epoch: 0,
            l_corr: 0.5,
            l_incorr: 0.25,
            l_total: 0.375,
            train_acc: 0.75,
            n_corr: 3,
            n_incorr: 1,
        }];
        write_stats_csv(&path, &stats).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,l_corr,l_incorr,l_total,train_acc,n_corr,n_incorr\n"));
        assert!(text.contains("0,0.5,0.25,0.375,0.75,3,1"));
    }
}
