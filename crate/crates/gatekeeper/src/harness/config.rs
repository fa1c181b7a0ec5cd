//! Experiment configuration: a single TOML document, overridable from the
//! command line. The file fully determines every artifact byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SequenceRule, SequenceTaskSpec, SyntheticBlobSpec};
use crate::error::{Error, Result};
use crate::gating::GatingFunction;
use crate::metrics::{BandwidthRule, KdeConfig, KdeDomain};
use crate::models::Activation;

fn default_split() -> [f64; 3] {
    [0.8, 0.0, 0.2]
}

fn default_stddev() -> f64 {
    1.0
}

fn default_alphas() -> Vec<f64> {
    vec![0.9, 0.7, 0.5, 0.3, 0.1, 0.05]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch_size() -> usize {
    64
}

fn default_grid_points() -> usize {
    512
}

fn default_context() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Blobs {
        classes: usize,
        dims: usize,
        /// Explicit class means; defaults to a ring of radius `separation`.
        #[serde(default)]
        means: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_stddev")]
        stddev: f64,
        #[serde(default)]
        flip_rate: f64,
        samples: usize,
        #[serde(default = "default_split")]
        split: [f64; 3],
        /// Ring radius used when `means` is absent.
        #[serde(default)]
        separation: Option<f64>,
    },
    Sequences {
        vocab: usize,
        length: usize,
        rule: String,
        ambiguous_fraction: f64,
        samples: usize,
        #[serde(default = "default_split")]
        split: [f64; 3],
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_split")]
        split: [f64; 3],
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_split")]
        split: [f64; 3],
    },
}

impl DataConfig {
    pub fn split(&self) -> [f64; 3] {
        match self {
            DataConfig::Blobs { split, .. }
            | DataConfig::Sequences { split, .. }
            | DataConfig::Idx { split, .. }
            | DataConfig::Csv { split, .. } => *split,
        }
    }

    pub fn is_sequence_task(&self) -> bool {
        matches!(self, DataConfig::Sequences { .. })
    }

    /// Blob generator spec, when the dataset is synthetic blobs.
    pub fn blob_spec(&self) -> Result<Option<SyntheticBlobSpec>> {
        match self {
            DataConfig::Blobs { classes, dims, means, stddev, flip_rate, samples, separation, .. } => {
                let mut spec = match means {
                    Some(m) => SyntheticBlobSpec {
                        class_count: *classes,
                        dims: *dims,
                        means: m.clone(),
                        stddev: *stddev,
                        label_flip_rate: *flip_rate,
                        sample_count: *samples,
                    },
                    None => {
                        let mut s =
                            SyntheticBlobSpec::ring(*classes, *dims, separation.unwrap_or(3.0));
                        s.stddev = *stddev;
                        s.label_flip_rate = *flip_rate;
                        s.sample_count = *samples;
                        s
                    }
                };
                spec.sample_count = *samples;
                spec.validate()?;
                Ok(Some(spec))
            }
            _ => Ok(None),
        }
    }

    pub fn sequence_spec(&self) -> Result<Option<SequenceTaskSpec>> {
        match self {
            DataConfig::Sequences { vocab, length, rule, ambiguous_fraction, samples, .. } => {
                let spec = SequenceTaskSpec {
                    vocab_size: *vocab,
                    length: *length,
                    rule: SequenceRule::from_name(rule)?,
                    ambiguous_fraction: *ambiguous_fraction,
                    sample_count: *samples,
                };
                spec.validate()?;
                Ok(Some(spec))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "ModelConfig::default_activation")]
    pub activation: String,
    /// Context window; token models only.
    #[serde(default = "default_context")]
    pub context: usize,
}

impl ModelConfig {
    fn default_activation() -> String {
        "relu".into()
    }

    pub fn activation(&self) -> Result<Activation> {
        Activation::from_name(&self.activation)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LargeModelMode {
    Trained,
    Bayes,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LargeModelConfig {
    pub mode: LargeModelMode,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "ModelConfig::default_activation")]
    pub activation: String,
    #[serde(default = "default_context")]
    pub context: usize,
}

impl LargeModelConfig {
    pub fn activation(&self) -> Result<Activation> {
        Activation::from_name(&self.activation)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Extra budget for the trained large model; defaults to the same
    /// epoch count.
    #[serde(default)]
    pub epochs_large: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    /// Defaults to a tenth of the pretraining rate.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GatingConfig {
    pub kind: String,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self { kind: "max-softmax".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KdeSettings {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Positive value fixes the bandwidth; zero selects Silverman's rule.
    #[serde(default)]
    pub bandwidth: f64,
    /// "auto" picks the domain from the gating kind; "unit" and "span"
    /// force it.
    #[serde(default = "KdeSettings::default_domain")]
    pub domain: String,
}

impl Default for KdeSettings {
    fn default() -> Self {
        Self { grid_points: default_grid_points(), bandwidth: 0.0, domain: "auto".into() }
    }
}

impl KdeSettings {
    fn default_domain() -> String {
        "auto".into()
    }

    pub fn resolve(&self, gating: GatingFunction) -> Result<KdeConfig> {
        let domain = match self.domain.as_str() {
            "unit" => KdeDomain::UnitIntervalReflected,
            "span" => KdeDomain::DataSpanPadded,
            "auto" => match gating {
                GatingFunction::MaxSoftmax => KdeDomain::UnitIntervalReflected,
                GatingFunction::NegPredEntropy => KdeDomain::DataSpanPadded,
            },
            other => return Err(Error::Config(format!("unknown kde domain '{other}'"))),
        };
        let bandwidth_rule = if self.bandwidth > 0.0 {
            BandwidthRule::Fixed(self.bandwidth)
        } else {
            BandwidthRule::Silverman
        };
        let cfg = KdeConfig { grid_points: self.grid_points, bandwidth_rule, domain };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model_small: ModelConfig,
    pub model_large: LargeModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub gating: GatingConfig,
    #[serde(default)]
    pub kde: KdeSettings,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub master_seed: Option<u64>,
    pub alphas: Vec<f64>,
    pub gating: Option<String>,
    pub large_model: Option<LargeModelMode>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("inline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(seed) = overrides.master_seed {
            self.master_seed = seed;
        }
        if !overrides.alphas.is_empty() {
            self.finetune.alphas = overrides.alphas.clone();
        }
        if let Some(g) = &overrides.gating {
            self.gating.kind = g.clone();
        }
        if let Some(mode) = overrides.large_model {
            self.model_large.mode = mode;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.finetune.alphas.is_empty() {
            return Err(Error::Config("alpha list must not be empty".into()));
        }
        if self.finetune.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config(format!(
                "alphas must lie strictly in (0,1): {:?}",
                self.finetune.alphas
            )));
        }
        if self.finetune.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        {
            let mut sorted = self.finetune.seeds.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config("seed list must not repeat".into()));
            }
        }
        let mut sorted_alphas = self.finetune.alphas.clone();
        sorted_alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted_alphas.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("alpha list must not repeat".into()));
        }
        self.gating_fn()?;
        self.model_small.activation()?;
        self.model_large.activation()?;
        self.kde.resolve(self.gating_fn()?)?;
        if self.model_large.mode == LargeModelMode::Trained && self.model_large.hidden.is_empty() {
            return Err(Error::Config(
                "trained large model needs at least one hidden layer width".into(),
            ));
        }
        let split = self.data.split();
        if split.iter().any(|f| *f < 0.0) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {split:?}")));
        }
        // surface generator errors early
        self.data.blob_spec()?;
        self.data.sequence_spec()?;
        if self.data.is_sequence_task() && self.gating_fn()? == GatingFunction::MaxSoftmax {
            return Err(Error::Config(
                "sequence tasks gate on entropy; set gating.kind = \"nent\"".into(),
            ));
        }
        Ok(())
    }

    pub fn gating_fn(&self) -> Result<GatingFunction> {
        GatingFunction::from_name(&self.gating.kind)
    }

    pub fn kde_config(&self) -> Result<KdeConfig> {
        self.kde.resolve(self.gating_fn()?)
    }

    pub fn finetune_lr(&self) -> f64 {
        self.finetune.lr.unwrap_or(self.pretrain.lr * 0.1)
    }

    /// Stable content hash of the canonical serialized form.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = r#"
name = "blobs4"
master_seed = 42
out_dir = "out/blobs4"

[data]
kind = "blobs"
classes = 4
dims = 2
flip_rate = 0.15
samples = 1000

[model_small]
hidden = [16]

[model_large]
mode = "bayes"

[pretrain]
epochs = 4
lr = 0.05

[finetune]
epochs = 6
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        assert_eq!(cfg.finetune.alphas, vec![0.9, 0.7, 0.5, 0.3, 0.1, 0.05]);
        assert_eq!(cfg.finetune.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.data.split(), [0.8, 0.0, 0.2]);
        assert!((cfg.finetune_lr() - 0.005).abs() < 1e-12);
        assert!(cfg.data.blob_spec().unwrap().is_some());
        assert_eq!(cfg.gating_fn().unwrap(), GatingFunction::MaxSoftmax);
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        let hash_before = cfg.hash();
        cfg.apply(&Overrides {
            out_dir: Some(PathBuf::from("elsewhere")),
            master_seed: Some(7),
            alphas: vec![0.2, 0.4],
            gating: Some("nent".into()),
            large_model: Some(LargeModelMode::Trained),
        })
        .unwrap_err(); // trained mode without hidden widths is invalid
        cfg.model_large.hidden = vec![32];
        cfg.apply(&Overrides { alphas: vec![0.2, 0.4], ..Default::default() }).unwrap();
        assert_eq!(cfg.finetune.alphas, vec![0.2, 0.4]);
        assert_ne!(cfg.hash(), hash_before);
    }

    #[test]
    fn rejects_bad_alpha_and_split() {
        let mut cfg = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        cfg.finetune.alphas = vec![0.5, 1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        if let DataConfig::Blobs { ref mut split, .. } = cfg.data {
            *split = [0.5, 0.0, 0.2];
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        let b = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = ExperimentConfig::from_toml_str(BLOBS).unwrap();
        c.master_seed = 43;
        assert_ne!(a.hash(), c.hash());
    }
}
