//! Synthetic token-sequence tasks with a controllable share of
//! irreducibly-random positions, so the token-level loss always has
//! unavoidable errors to work with.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding;

/// Begin-of-sequence padding value used by generators and token models.
pub const BOS_TOKEN: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceRule {
    /// Deterministic positions repeat the previous token.
    CopyWithNoise,
    /// Deterministic positions emit the sum of the two previous tokens mod C.
    Parity,
}

impl SequenceRule {
    pub fn name(self) -> &'static str {
        match self {
            SequenceRule::CopyWithNoise => "copy_with_noise",
            SequenceRule::Parity => "parity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "copy_with_noise" => Ok(SequenceRule::CopyWithNoise),
            "parity" => Ok(SequenceRule::Parity),
            other => Err(Error::Config(format!("unknown sequence rule '{other}'"))),
        }
    }

    /// Target at position `t` given the full prefix, BOS-padded.
    pub fn target(self, prefix: &[usize], t: usize, vocab: usize) -> usize {
        let back = |k: usize| if t >= k { prefix[t - k] } else { BOS_TOKEN };
        match self {
            SequenceRule::CopyWithNoise => back(1),
            SequenceRule::Parity => (back(1) + back(2)) % vocab,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTaskSpec {
    pub vocab_size: usize,
    pub length: usize,
    pub rule: SequenceRule,
    /// Expected fraction of positions whose target is irreducibly random.
    pub ambiguous_fraction: f64,
    pub sample_count: usize,
}

impl SequenceTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab size must be >= 2".into()));
        }
        if self.length == 0 {
            return Err(Error::Config("sequence length must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.ambiguous_fraction) {
            return Err(Error::Config(format!(
                "ambiguous fraction must lie in [0,1), got {}",
                self.ambiguous_fraction
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        Ok(())
    }
}

/// Equal-length token sequences plus the generator's per-position
/// ambiguity mask, kept for diagnostics and oracle computations.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<Vec<usize>>,
    pub vocab_size: usize,
    pub ambiguity: Vec<Vec<bool>>,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn length(&self) -> usize {
        self.sequences.first().map(|s| s.len()).unwrap_or(0)
    }

    /// Mean over positions of the best achievable per-position accuracy:
    /// 1 on deterministic positions, 1/C on ambiguous ones.
    pub fn best_possible_token_accuracy(&self) -> f64 {
        let total: usize = self.ambiguity.iter().map(|m| m.len()).sum();
        let ambiguous: usize =
            self.ambiguity.iter().map(|m| m.iter().filter(|&&a| a).count()).sum();
        let det = (total - ambiguous) as f64;
        (det + ambiguous as f64 / self.vocab_size as f64) / total as f64
    }
}

/// Low-noise tier's share of the per-position redraw mass; the other half
/// of the sequences carries the rest, so difficulty varies by sequence.
const CALM_TIER_SHARE: f64 = 0.25;

/// Generate sequences. Each sequence is assigned to a calm or a turbulent
/// tier (half the dataset each); both follow the rule except that
/// positions after the first redraw to a uniform token at the tier's rate.
/// The rates are chosen so the dataset-level ambiguous fraction matches
/// the configured value in expectation (capped at `(T-1)/T`, since
/// position 0 never redraws). Per-sequence surprise counts therefore vary
/// widely, which is what gives a confidence signal something to rank.
pub fn gen_sequences(spec: &SequenceTaskSpec, seed: u64) -> Result<SequenceDataset> {
    spec.validate()?;
    let mut rng = seeding::rng(seed, &[0x5e9]);
    let t = spec.length;
    let f = spec.ambiguous_fraction;

    // per-position redraw mass m with 0.5*(calm + turbulent) = m
    let (calm_rate, turbulent_rate) = if f == 0.0 || t == 1 {
        (0.0, 0.0)
    } else {
        let mass = f * t as f64 / (t as f64 - 1.0);
        let turbulent = ((2.0 - CALM_TIER_SHARE) * mass).min(1.0);
        let calm = (2.0 * mass - turbulent).min(1.0);
        (calm, turbulent)
    };

    let mut sequences = Vec::with_capacity(spec.sample_count);
    let mut ambiguity = Vec::with_capacity(spec.sample_count);
    for _ in 0..spec.sample_count {
        let rate = if rng.gen::<f64>() < 0.5 { calm_rate } else { turbulent_rate };
        let mut seq = Vec::with_capacity(t);
        let mut mask = Vec::with_capacity(t);
        for pos in 0..t {
            let ambiguous = pos > 0 && rate > 0.0 && rng.gen::<f64>() < rate;
            let token = if ambiguous {
                rng.gen_range(0..spec.vocab_size)
            } else {
                spec.rule.target(&seq, pos, spec.vocab_size)
            };
            seq.push(token);
            mask.push(ambiguous);
        }
        sequences.push(seq);
        ambiguity.push(mask);
    }
    Ok(SequenceDataset { sequences, vocab_size: spec.vocab_size, ambiguity })
}
