//! The three-stage pipeline: pretrain both models, fine-tune the small
//! model across the (alpha, seed) grid, then evaluate every checkpoint on
//! the held-out split. Each stage records its artifacts in the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cascade::{
    build_classification_records, build_sequence_records, write_records_csv, CascadeDataset,
};
use crate::data::{
    gen_blobs, gen_sequences, load_csv, load_idx, split, split_indices, SequenceDataset,
    SequenceTaskSpec, SyntheticBlobSpec, TabularDataset,
};
use crate::error::{Error, Result};
use crate::harness::config::{DataConfig, ExperimentConfig, LargeModelMode};
use crate::harness::manifest::RunManifest;
use crate::loss::GatekeeperConfig;
use crate::metrics::{metrics_csv_row, METRICS_CSV_HEADER};
use crate::models::{
    forward, init_params, predict_argmax, softmax_rows, token_forward, Checkpoint,
    MlpParams, TokenModelParams,
};
use crate::numerics::ProbVector;
use crate::seeding;
use crate::training::{
    finetune_classifier, finetune_token, pretrain_classifier, pretrain_token, write_stats_csv,
    CeEpochStats, OptimizerConfig,
};

const STAGE_DATA: u64 = 0;
const STAGE_PRETRAIN: u64 = 1;
const STAGE_FINETUNE: u64 = 2;

/// Execution knobs that do not affect artifact bytes.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    /// Replace the deferral signal with the correctness bit, turning the
    /// evaluation into a plumbing check that must report `s_d = 1`.
    pub oracle_signal: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, oracle_signal: false }
    }
}

/// The train/eval material for one experiment.
pub enum Prepared {
    Tabular {
        train: TabularDataset,
        eval: TabularDataset,
        blob_spec: Option<SyntheticBlobSpec>,
    },
    Sequence {
        train: SequenceDataset,
        eval: SequenceDataset,
        spec: SequenceTaskSpec,
    },
}

impl Prepared {
    fn eval_len(&self) -> usize {
        match self {
            Prepared::Tabular { eval, .. } => eval.len(),
            Prepared::Sequence { eval, .. } => eval.len(),
        }
    }
}

/// Materialize and split the configured dataset. Deterministic in the
/// master seed alone.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data_seed = seeding::mix(cfg.master_seed, &[STAGE_DATA]);
    let split_seed = seeding::mix(cfg.master_seed, &[STAGE_DATA, 1]);
    let fractions = {
        let s = cfg.data.split();
        (s[0], s[1], s[2])
    };
    match &cfg.data {
        DataConfig::Blobs { .. } => {
            let spec = cfg.data.blob_spec()?.expect("blobs config");
            let full = gen_blobs(&spec, data_seed)?;
            let (train, _val, eval) = split(&full, fractions, split_seed)?;
            Ok(Prepared::Tabular { train, eval, blob_spec: Some(spec) })
        }
        DataConfig::Idx { images, labels, .. } => {
            let full = load_idx(images, labels)?;
            let (train, _val, eval) = split(&full, fractions, split_seed)?;
            Ok(Prepared::Tabular { train, eval, blob_spec: None })
        }
        DataConfig::Csv { path, label_column, .. } => {
            let full = load_csv(path, label_column)?;
            let (train, _val, eval) = split(&full, fractions, split_seed)?;
            Ok(Prepared::Tabular { train, eval, blob_spec: None })
        }
        DataConfig::Sequences { .. } => {
            let spec = cfg.data.sequence_spec()?.expect("sequences config");
            let full = gen_sequences(&spec, data_seed)?;
            let (train_idx, _val_idx, eval_idx) =
                split_indices(full.len(), fractions, split_seed)?;
            let pick = |idx: &[usize]| SequenceDataset {
                sequences: idx.iter().map(|&i| full.sequences[i].clone()).collect(),
                vocab_size: full.vocab_size,
                ambiguity: idx.iter().map(|&i| full.ambiguity[i].clone()).collect(),
            };
            Ok(Prepared::Sequence { train: pick(&train_idx), eval: pick(&eval_idx), spec })
        }
    }
}

fn write_ce_stats_csv(path: &Path, stats: &[CeEpochStats]) -> Result<()> {
    let mut out = String::from("epoch,loss,train_acc\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.loss, s.train_acc));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn alpha_id(alpha: f64) -> String {
    format!("alpha{alpha}")
}

pub fn cell_id(alpha: f64, seed: u64) -> String {
    format!("{}_seed{seed}", alpha_id(alpha))
}

fn small_dims(cfg: &ExperimentConfig, input: usize, classes: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(&cfg.model_small.hidden);
    dims.push(classes);
    dims
}

fn large_dims(cfg: &ExperimentConfig, input: usize, classes: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(&cfg.model_large.hidden);
    dims.push(classes);
    dims
}

fn checkpoint_dir(out: &Path) -> PathBuf {
    out.join("checkpoints")
}

fn small_checkpoint_path(out: &Path) -> PathBuf {
    checkpoint_dir(out).join("small_pretrained.ckpt")
}

fn large_checkpoint_path(out: &Path) -> PathBuf {
    checkpoint_dir(out).join("large.ckpt")
}

fn cell_checkpoint_path(out: &Path, alpha: f64, seed: u64) -> PathBuf {
    checkpoint_dir(out).join(format!("{}.ckpt", cell_id(alpha, seed)))
}

/// Pretrain the small model (and the large one, unless it is the
/// closed-form oracle) with plain cross-entropy.
pub fn cmd_pretrain(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let out = &cfg.out_dir;
    std::fs::create_dir_all(checkpoint_dir(out))?;
    std::fs::create_dir_all(out.join("stats"))?;
    let mut manifest = RunManifest::load_or_new(out, &cfg.hash())?;
    let prepared = prepare_data(cfg)?;
    let opt = OptimizerConfig {
        lr: cfg.pretrain.lr,
        momentum: cfg.pretrain.momentum,
        batch_size: cfg.pretrain.batch_size,
    };
    let epochs_large = cfg.pretrain.epochs_large.unwrap_or(cfg.pretrain.epochs);
    let init_seed = seeding::mix(cfg.master_seed, &[0, 0, STAGE_PRETRAIN, 0]);
    let train_seed = seeding::mix(cfg.master_seed, &[0, 0, STAGE_PRETRAIN, 1]);
    let large_init_seed = seeding::mix(cfg.master_seed, &[0, 0, STAGE_PRETRAIN, 2]);
    let large_train_seed = seeding::mix(cfg.master_seed, &[0, 0, STAGE_PRETRAIN, 3]);

    let mut artifacts = Vec::new();
    match &prepared {
        Prepared::Tabular { train, blob_spec, .. } => {
            let dims = small_dims(cfg, train.features.cols(), train.class_count);
            let mut small = init_params(init_seed, &dims, cfg.model_small.activation()?)?;
            let stats =
                pretrain_classifier(&mut small, train, &opt, cfg.pretrain.epochs, train_seed)?;
            Checkpoint::Classifier(small).save(&small_checkpoint_path(out))?;
            write_ce_stats_csv(&out.join("stats/pretrain_small.csv"), &stats)?;
            artifacts.push(PathBuf::from("checkpoints/small_pretrained.ckpt"));
            artifacts.push(PathBuf::from("stats/pretrain_small.csv"));

            match cfg.model_large.mode {
                LargeModelMode::Bayes => {
                    if blob_spec.is_none() {
                        return Err(Error::Config(
                            "the closed-form oracle needs a synthetic dataset; \
                             use large model mode \"trained\" for file-based data"
                                .into(),
                        ));
                    }
                    manifest.note("large_model", "closed-form blob posterior, no checkpoint");
                }
                LargeModelMode::Trained => {
                    let dims = large_dims(cfg, train.features.cols(), train.class_count);
                    let mut large =
                        init_params(large_init_seed, &dims, cfg.model_large.activation()?)?;
                    let stats = pretrain_classifier(
                        &mut large,
                        train,
                        &opt,
                        epochs_large,
                        large_train_seed,
                    )?;
                    Checkpoint::Classifier(large).save(&large_checkpoint_path(out))?;
                    write_ce_stats_csv(&out.join("stats/pretrain_large.csv"), &stats)?;
                    artifacts.push(PathBuf::from("checkpoints/large.ckpt"));
                    artifacts.push(PathBuf::from("stats/pretrain_large.csv"));
                }
            }
        }
        Prepared::Sequence { train, spec, .. } => {
            let mut small = TokenModelParams::init(
                init_seed,
                spec.vocab_size,
                cfg.model_small.context,
                &cfg.model_small.hidden,
                cfg.model_small.activation()?,
                crate::data::BOS_TOKEN,
            )?;
            let stats = pretrain_token(&mut small, train, &opt, cfg.pretrain.epochs, train_seed)?;
            Checkpoint::TokenModel(small).save(&small_checkpoint_path(out))?;
            write_ce_stats_csv(&out.join("stats/pretrain_small.csv"), &stats)?;
            artifacts.push(PathBuf::from("checkpoints/small_pretrained.ckpt"));
            artifacts.push(PathBuf::from("stats/pretrain_small.csv"));

            match cfg.model_large.mode {
                LargeModelMode::Bayes => {
                    manifest.note("large_model", "rule-following oracle, no checkpoint");
                }
                LargeModelMode::Trained => {
                    let mut large = TokenModelParams::init(
                        large_init_seed,
                        spec.vocab_size,
                        cfg.model_large.context,
                        &cfg.model_large.hidden,
                        cfg.model_large.activation()?,
                        crate::data::BOS_TOKEN,
                    )?;
                    let stats =
                        pretrain_token(&mut large, train, &opt, epochs_large, large_train_seed)?;
                    Checkpoint::TokenModel(large).save(&large_checkpoint_path(out))?;
                    write_ce_stats_csv(&out.join("stats/pretrain_large.csv"), &stats)?;
                    artifacts.push(PathBuf::from("checkpoints/large.ckpt"));
                    artifacts.push(PathBuf::from("stats/pretrain_large.csv"));
                }
            }
        }
    }
    manifest.record_stage("pretrain", artifacts, start.elapsed().as_secs_f64());
    manifest.save(out)?;
    Ok(manifest)
}

fn load_small_checkpoint(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let path = small_checkpoint_path(&cfg.out_dir);
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "missing pretrained checkpoint {}; run the pretrain stage first",
            path.display()
        )));
    }
    Checkpoint::load(&path)
}

/// Fine-tune one checkpoint per (alpha, seed) cell. Cells are independent
/// and may run on a worker pool; artifact bytes do not depend on the
/// worker count.
pub fn cmd_finetune(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let out = cfg.out_dir.clone();
    let mut manifest = RunManifest::load_or_new(&out, &cfg.hash())?;
    manifest.stage("pretrain")?;
    let pretrained = load_small_checkpoint(cfg)?;
    let prepared = prepare_data(cfg)?;
    let opt = OptimizerConfig {
        lr: cfg.finetune_lr(),
        momentum: cfg.finetune.momentum,
        batch_size: cfg.finetune.batch_size,
    };

    let cells: Vec<(usize, f64, usize, u64)> = cfg
        .finetune
        .alphas
        .iter()
        .enumerate()
        .flat_map(|(ai, &alpha)| {
            cfg.finetune
                .seeds
                .iter()
                .enumerate()
                .map(move |(si, &seed)| (ai, alpha, si, seed))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let results: Vec<Result<Vec<PathBuf>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(ai, alpha, si, seed)| {
                let run_seed = seeding::mix(
                    cfg.master_seed,
                    &[ai as u64 + 1, si as u64 + 1, STAGE_FINETUNE],
                );
                let loss_cfg = GatekeeperConfig::new(alpha)?;
                let ckpt_path = cell_checkpoint_path(&out, alpha, seed);
                let stats_path =
                    out.join(format!("stats/finetune_{}.csv", cell_id(alpha, seed)));
                let stats = match (&pretrained, &prepared) {
                    (Checkpoint::Classifier(base), Prepared::Tabular { train, .. }) => {
                        let mut params = base.clone();
                        let stats = finetune_classifier(
                            &mut params,
                            train,
                            &loss_cfg,
                            &opt,
                            cfg.finetune.epochs,
                            run_seed,
                        )?;
                        Checkpoint::Classifier(params).save(&ckpt_path)?;
                        stats
                    }
                    (Checkpoint::TokenModel(base), Prepared::Sequence { train, .. }) => {
                        let mut params = base.clone();
                        let stats = finetune_token(
                            &mut params,
                            train,
                            &loss_cfg,
                            &opt,
                            cfg.finetune.epochs,
                            run_seed,
                        )?;
                        Checkpoint::TokenModel(params).save(&ckpt_path)?;
                        stats
                    }
                    _ => {
                        return Err(Error::Dependency(
                            "checkpoint kind does not match the configured dataset".into(),
                        ))
                    }
                };
                write_stats_csv(&stats_path, &stats)?;
                Ok(vec![
                    PathBuf::from(format!("checkpoints/{}.ckpt", cell_id(alpha, seed))),
                    PathBuf::from(format!("stats/finetune_{}.csv", cell_id(alpha, seed))),
                ])
            })
            .collect()
    });

    let mut artifacts = Vec::new();
    for r in results {
        artifacts.extend(r?);
    }
    manifest.record_stage("finetune", artifacts, start.elapsed().as_secs_f64());
    manifest.save(&out)?;
    Ok(manifest)
}

/// Signals, values and outcomes of one evaluated checkpoint.
struct EvalRun {
    /// `None` marks the baseline control.
    alpha: Option<f64>,
    seed: u64,
    run_id: String,
    dataset: CascadeDataset,
}

fn classifier_outputs(params: &MlpParams, eval: &TabularDataset) -> Result<(Vec<ProbVector>, Vec<usize>)> {
    let trace = forward(params, &eval.features)?;
    let probs = softmax_rows(trace.logits());
    let mut dists = Vec::with_capacity(eval.len());
    let mut preds = Vec::with_capacity(eval.len());
    for r in 0..eval.len() {
        preds.push(predict_argmax(trace.logits().row(r)));
        dists.push(ProbVector::new(normalize_row(probs.row(r)))?);
    }
    Ok((dists, preds))
}

// softmax rows sum to 1 up to rounding; renormalize so ProbVector's strict
// sum check cannot trip on accumulated error
fn normalize_row(row: &[f64]) -> Vec<f64> {
    let sum: f64 = row.iter().sum();
    row.iter().map(|v| v / sum).collect()
}

fn token_outputs(
    params: &TokenModelParams,
    eval: &SequenceDataset,
) -> Result<(Vec<Vec<ProbVector>>, Vec<Vec<usize>>)> {
    let mut dists = Vec::with_capacity(eval.len());
    let mut preds = Vec::with_capacity(eval.len());
    for seq in &eval.sequences {
        let logits = token_forward(params, seq)?;
        let probs = softmax_rows(&logits);
        let mut seq_dists = Vec::with_capacity(seq.len());
        let mut seq_preds = Vec::with_capacity(seq.len());
        for t in 0..seq.len() {
            seq_preds.push(predict_argmax(logits.row(t)));
            seq_dists.push(ProbVector::new(normalize_row(probs.row(t)))?);
        }
        dists.push(seq_dists);
        preds.push(seq_preds);
    }
    Ok((dists, preds))
}

fn oracle_records(dataset: &CascadeDataset) -> Result<CascadeDataset> {
    let records = dataset
        .records()
        .iter()
        .map(|r| crate::cascade::ExampleRecord { signal: r.s_value, ..*r })
        .collect();
    CascadeDataset::from_records(records, dataset.mode(), dataset.gating())
}

/// Evaluate the baseline and every fine-tuned checkpoint on the held-out
/// split: record CSVs plus one metrics row per (run, seed), baseline rows
/// included once per seed.
pub fn cmd_evaluate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(RunManifest, Vec<String>)> {
    let start = Instant::now();
    let out = cfg.out_dir.clone();
    let mut manifest = RunManifest::load_or_new(&out, &cfg.hash())?;
    manifest.stage("pretrain")?;
    manifest.stage("finetune")?;
    std::fs::create_dir_all(out.join("records"))?;
    let prepared = prepare_data(cfg)?;
    if prepared.eval_len() == 0 {
        return Err(Error::Data("evaluation split is empty; adjust the split fractions".into()));
    }
    let gating = cfg.gating_fn()?;
    let kde = cfg.kde_config()?;

    // large-model predictions are shared by every run
    let large_preds_tabular: Option<Vec<usize>> = match &prepared {
        Prepared::Tabular { eval, blob_spec, .. } => Some(match cfg.model_large.mode {
            LargeModelMode::Bayes => {
                let spec = blob_spec.as_ref().ok_or_else(|| {
                    Error::Config("closed-form oracle requires a synthetic dataset".into())
                })?;
                (0..eval.len())
                    .map(|r| crate::data::bayes_predict(spec, eval.features.row(r)))
                    .collect::<Result<Vec<_>>>()?
            }
            LargeModelMode::Trained => {
                let ckpt = Checkpoint::load(&large_checkpoint_path(&out))?;
                let Checkpoint::Classifier(params) = ckpt else {
                    return Err(Error::Dependency("large checkpoint is not a classifier".into()));
                };
                let trace = forward(&params, &eval.features)?;
                (0..eval.len()).map(|r| predict_argmax(trace.logits().row(r))).collect()
            }
        }),
        Prepared::Sequence { .. } => None,
    };
    let large_preds_sequence: Option<Vec<Vec<usize>>> = match &prepared {
        Prepared::Sequence { eval, spec, .. } => Some(match cfg.model_large.mode {
            LargeModelMode::Bayes => eval
                .sequences
                .iter()
                .map(|seq| {
                    (0..seq.len()).map(|t| spec.rule.target(seq, t, spec.vocab_size)).collect()
                })
                .collect(),
            LargeModelMode::Trained => {
                let ckpt = Checkpoint::load(&large_checkpoint_path(&out))?;
                let Checkpoint::TokenModel(params) = ckpt else {
                    return Err(Error::Dependency("large checkpoint is not a token model".into()));
                };
                let (_, preds) = token_outputs(&params, eval)?;
                preds
            }
        }),
        Prepared::Tabular { .. } => None,
    };

    let build_run = |ckpt: &Checkpoint| -> Result<CascadeDataset> {
        match (ckpt, &prepared) {
            (Checkpoint::Classifier(params), Prepared::Tabular { eval, .. }) => {
                let (dists, preds) = classifier_outputs(params, eval)?;
                build_classification_records(
                    &dists,
                    &preds,
                    large_preds_tabular.as_ref().expect("tabular large predictions"),
                    &eval.labels,
                    gating,
                )
            }
            (Checkpoint::TokenModel(params), Prepared::Sequence { eval, .. }) => {
                let (dists, preds) = token_outputs(params, eval)?;
                build_sequence_records(
                    &dists,
                    &preds,
                    large_preds_sequence.as_ref().expect("sequence large predictions"),
                    &eval.sequences,
                    gating,
                )
            }
            _ => Err(Error::Dependency(
                "checkpoint kind does not match the configured dataset".into(),
            )),
        }
    };

    // evaluate the baseline once, then every cell
    let mut runs: Vec<EvalRun> = Vec::new();
    let baseline_records = build_run(&load_small_checkpoint(cfg)?)?;
    runs.push(EvalRun {
        alpha: None,
        seed: 0,
        run_id: "baseline".into(),
        dataset: baseline_records,
    });
    let cell_list: Vec<(f64, u64)> = cfg
        .finetune
        .alphas
        .iter()
        .flat_map(|&a| cfg.finetune.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cell_runs: Vec<Result<EvalRun>> = pool.install(|| {
        cell_list
            .par_iter()
            .map(|&(alpha, seed)| {
                let ckpt = Checkpoint::load(&cell_checkpoint_path(&out, alpha, seed))?;
                Ok(EvalRun {
                    alpha: Some(alpha),
                    seed,
                    run_id: cell_id(alpha, seed),
                    dataset: build_run(&ckpt)?,
                })
            })
            .collect()
    });
    for r in cell_runs {
        runs.push(r?);
    }

    // apply the oracle-signal plumbing check after records are built
    if opts.oracle_signal {
        for run in &mut runs {
            run.dataset = oracle_records(&run.dataset)?;
        }
    }

    let mut artifacts = Vec::new();
    let mut warnings = Vec::new();
    let mut csv = String::from(METRICS_CSV_HEADER);
    csv.push('\n');
    let dataset_name = cfg.name.as_str();
    for run in &runs {
        let rel = PathBuf::from(format!("records/{}.csv", run.run_id));
        write_records_csv(&out.join(&rel), &run.dataset)?;
        artifacts.push(rel);
        let sweep = run.dataset.sweep(&kde)?;
        if let Some(w) = run.dataset.delta_warning()? {
            warnings.push(format!("{}: {w}", run.run_id));
        }
        match run.alpha {
            None => {
                // one baseline row per seed so per-seed aggregation always
                // has its control
                for &seed in &cfg.finetune.seeds {
                    csv.push_str(&metrics_csv_row(
                        dataset_name,
                        None,
                        seed,
                        gating.name(),
                        &sweep.report,
                    ));
                    csv.push('\n');
                }
            }
            Some(alpha) => {
                csv.push_str(&metrics_csv_row(
                    dataset_name,
                    Some(alpha),
                    run.seed,
                    gating.name(),
                    &sweep.report,
                ));
                csv.push('\n');
            }
        }
    }
    std::fs::write(out.join("metrics.csv"), csv)?;
    artifacts.push(PathBuf::from("metrics.csv"));
    manifest.record_stage("evaluate", artifacts, start.elapsed().as_secs_f64());
    manifest.save(&out)?;
    manifest.verify_artifacts(&out)?;
    Ok((manifest, warnings))
}

/// Run all three stages plus the report.
pub fn run_full(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    cmd_pretrain(cfg, opts)?;
    cmd_finetune(cfg, opts)?;
    cmd_evaluate(cfg, opts)?;
    crate::harness::report::cmd_report(cfg)
}
