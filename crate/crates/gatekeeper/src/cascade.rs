//! Per-example cascade records assembled from two evaluated models, the
//! dominance check, and threshold/ratio sweeps into realized curves and
//! joint accuracies. Records are the interchange unit: externally-trained
//! models enter the toolkit through the record CSV.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gating::{g_cl, g_nent, CascadeChoice, DeferralRule, GatingFunction, TokenDistSeq};
use crate::metrics::{
    auroc, deferral_curve_ideal_binary, deferral_curve_ideal_graded, deferral_curve_realized,
    deferral_performance, kde_overlap, pearson, DeferralCurve, KdeConfig, MetricsReport,
};
use crate::numerics::ProbVector;

/// Above this dominance violation rate, deferral can no longer be assumed
/// accuracy-neutral in expectation.
pub const DELTA_WARN_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    /// `s_value`/`l_value` are 0/1 correctness bits.
    Binary,
    /// `s_value`/`l_value` are quality scores in `[0, 1]`.
    Graded,
}

impl RecordMode {
    pub fn name(self) -> &'static str {
        match self {
            RecordMode::Binary => "binary",
            RecordMode::Graded => "graded",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "binary" => Ok(RecordMode::Binary),
            "graded" => Ok(RecordMode::Graded),
            other => Err(Error::Parse(format!("unknown record mode '{other}'"))),
        }
    }
}

/// One evaluation example: the small model's deferral signal and both
/// models' outcomes on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleRecord {
    pub index: usize,
    pub signal: f64,
    pub s_value: f64,
    pub l_value: f64,
}

impl ExampleRecord {
    pub fn s_correct(&self) -> bool {
        self.s_value != 0.0
    }

    pub fn l_correct(&self) -> bool {
        self.l_value != 0.0
    }
}

/// An immutable set of records with its summary accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeDataset {
    records: Vec<ExampleRecord>,
    mode: RecordMode,
    /// The signal family the records carry, when known; picks the KDE
    /// domain during sweeps.
    gating: Option<GatingFunction>,
    acc_s: f64,
    acc_l: f64,
}

/// Everything a threshold sweep produces for one evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub realized: DeferralCurve,
    pub ideal: DeferralCurve,
    pub random: DeferralCurve,
    pub report: MetricsReport,
}

impl CascadeDataset {
    pub fn from_records(
        records: Vec<ExampleRecord>,
        mode: RecordMode,
        gating: Option<GatingFunction>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("cascade dataset needs at least one record".into()));
        }
        let mut seen: Vec<usize> = records.iter().map(|r| r.index).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("record indices must be unique".into()));
        }
        for r in &records {
            if !r.signal.is_finite() {
                return Err(Error::Numeric(format!("record {}: non-finite signal", r.index)));
            }
            let valid = match mode {
                RecordMode::Binary => {
                    (r.s_value == 0.0 || r.s_value == 1.0) && (r.l_value == 0.0 || r.l_value == 1.0)
                }
                RecordMode::Graded => {
                    (0.0..=1.0).contains(&r.s_value) && (0.0..=1.0).contains(&r.l_value)
                }
            };
            if !valid {
                return Err(Error::Data(format!(
                    "record {}: values ({}, {}) invalid for {} mode",
                    r.index,
                    r.s_value,
                    r.l_value,
                    mode.name()
                )));
            }
        }
        let n = records.len() as f64;
        let acc_s = records.iter().map(|r| r.s_value).sum::<f64>() / n;
        let acc_l = records.iter().map(|r| r.l_value).sum::<f64>() / n;
        Ok(Self { records, mode, gating, acc_s, acc_l })
    }

    pub fn records(&self) -> &[ExampleRecord] {
        &self.records
    }

    pub fn mode(&self) -> RecordMode {
        self.mode
    }

    pub fn gating(&self) -> Option<GatingFunction> {
        self.gating
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn acc_s(&self) -> f64 {
        self.acc_s
    }

    pub fn acc_l(&self) -> f64 {
        self.acc_l
    }

    pub fn signals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.signal).collect()
    }

    /// Empirical probability that the large model is wrong where the small
    /// model is right. Binary mode only.
    pub fn dominance_delta(&self) -> Result<f64> {
        if self.mode != RecordMode::Binary {
            return Err(Error::Mode("dominance is defined on binary correctness only".into()));
        }
        let violations =
            self.records.iter().filter(|r| !r.l_correct() && r.s_correct()).count();
        Ok(violations as f64 / self.records.len() as f64)
    }

    /// A human-readable warning when the dominance assumption is too weak
    /// for deferral to be accuracy-neutral.
    pub fn delta_warning(&self) -> Result<Option<String>> {
        let delta = self.dominance_delta()?;
        Ok((delta > DELTA_WARN_THRESHOLD).then(|| {
            format!(
                "dominance violation rate {delta:.4} exceeds {DELTA_WARN_THRESHOLD}: \
                 deferring can now hurt joint accuracy"
            )
        }))
    }

    /// Apply one deferral rule to every record: accepted records score as
    /// the small model, deferred ones as the large model. Returns the
    /// deferred fraction and the resulting joint value.
    pub fn joint_accuracy_at(&self, rule: &DeferralRule) -> (f64, f64) {
        let mut deferred = 0usize;
        let mut value = 0.0;
        for r in &self.records {
            match crate::gating::cascade_decide(r.signal, rule) {
                CascadeChoice::Accept => value += r.s_value,
                CascadeChoice::Defer => {
                    deferred += 1;
                    value += r.l_value;
                }
            }
        }
        let n = self.records.len() as f64;
        (deferred as f64 / n, value / n)
    }

    /// Realized, ideal, and random curves over all `n+1` cut points plus
    /// the assembled metric report.
    pub fn sweep(&self, kde: &KdeConfig) -> Result<SweepResult> {
        let signals = self.signals();
        let s_values: Vec<f64> = self.records.iter().map(|r| r.s_value).collect();
        let l_values: Vec<f64> = self.records.iter().map(|r| r.l_value).collect();

        let realized = deferral_curve_realized(&signals, &s_values, &l_values)?;
        let ideal = match self.mode {
            RecordMode::Binary => {
                let s: Vec<bool> = self.records.iter().map(|r| r.s_correct()).collect();
                let l: Vec<bool> = self.records.iter().map(|r| r.l_correct()).collect();
                deferral_curve_ideal_binary(&s, &l)?
            }
            RecordMode::Graded => deferral_curve_ideal_graded(&s_values, &l_values)?,
        };
        // expectation line of random deferral on the same grid; built
        // directly so it also covers the (diagnostic) acc_s > acc_l case
        let random_acc: Vec<f64> =
            realized.ratios().iter().map(|&r| (1.0 - r) * self.acc_s + r * self.acc_l).collect();
        let random = DeferralCurve::new(realized.ratios().to_vec(), random_acc)?;

        let s_d = deferral_performance(&realized, &random, &ideal)?;

        let report = match self.mode {
            RecordMode::Binary => {
                let correct: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.s_correct())
                    .map(|r| r.signal)
                    .collect();
                let incorrect: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| !r.s_correct())
                    .map(|r| r.signal)
                    .collect();
                MetricsReport {
                    acc_s: self.acc_s,
                    acc_l: self.acc_l,
                    delta: Some(self.dominance_delta()?),
                    s_o: kde_overlap(&correct, &incorrect, kde).ok(),
                    s_auroc: auroc(&correct, &incorrect).ok(),
                    s_d,
                    pearson_rho: None,
                }
            }
            RecordMode::Graded => MetricsReport {
                acc_s: self.acc_s,
                acc_l: self.acc_l,
                delta: None,
                s_o: None,
                s_auroc: None,
                s_d,
                pearson_rho: pearson(&signals, &s_values).ok(),
            },
        };
        Ok(SweepResult { realized, ideal, random, report })
    }
}

/// Assemble binary records for a classification task. The deferral signal
/// comes from the small model's distributions only.
pub fn build_classification_records(
    small_dists: &[ProbVector],
    small_preds: &[usize],
    large_preds: &[usize],
    labels: &[usize],
    gating: GatingFunction,
) -> Result<CascadeDataset> {
    let n = labels.len();
    if small_dists.len() != n || small_preds.len() != n || large_preds.len() != n {
        return Err(Error::Shape(format!(
            "misaligned outputs: {} distributions, {} small predictions, {} large predictions, {} labels",
            small_dists.len(),
            small_preds.len(),
            large_preds.len(),
            n
        )));
    }
    let records = small_dists
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let signal = match gating {
                GatingFunction::MaxSoftmax => g_cl(p),
                GatingFunction::NegPredEntropy => g_nent(std::slice::from_ref(p))?,
            };
            Ok(ExampleRecord {
                index: i,
                signal,
                s_value: (small_preds[i] == labels[i]) as u8 as f64,
                l_value: (large_preds[i] == labels[i]) as u8 as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CascadeDataset::from_records(records, RecordMode::Binary, Some(gating))
}

/// Assemble binary records for a sequence task: a record is correct when
/// every position is predicted correctly. Only the entropy signal applies
/// to multi-position outputs.
pub fn build_sequence_records(
    small_dists: &[TokenDistSeq],
    small_preds: &[Vec<usize>],
    large_preds: &[Vec<usize>],
    targets: &[Vec<usize>],
    gating: GatingFunction,
) -> Result<CascadeDataset> {
    let n = targets.len();
    if small_dists.len() != n || small_preds.len() != n || large_preds.len() != n {
        return Err(Error::Shape(format!(
            "misaligned outputs: {} distributions, {} small predictions, {} large predictions, {} targets",
            small_dists.len(),
            small_preds.len(),
            large_preds.len(),
            n
        )));
    }
    if gating == GatingFunction::MaxSoftmax
        && small_dists.iter().any(|d| d.len() > 1)
    {
        return Err(Error::Mode(
            "max-softmax gating applies to single-distribution outputs; use the entropy signal"
                .into(),
        ));
    }
    let records = (0..n)
        .map(|i| {
            Ok(ExampleRecord {
                index: i,
                signal: match gating {
                    GatingFunction::NegPredEntropy => g_nent(&small_dists[i])?,
                    GatingFunction::MaxSoftmax => g_cl(&small_dists[i][0]),
                },
                s_value: (small_preds[i] == targets[i]) as u8 as f64,
                l_value: (large_preds[i] == targets[i]) as u8 as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CascadeDataset::from_records(records, RecordMode::Binary, Some(gating))
}

/// Assemble graded records from precomputed signals and quality scores.
pub fn build_graded_records(
    signals: &[f64],
    s_scores: &[f64],
    l_scores: &[f64],
    gating: Option<GatingFunction>,
) -> Result<CascadeDataset> {
    if signals.len() != s_scores.len() || signals.len() != l_scores.len() {
        return Err(Error::Shape(format!(
            "misaligned arrays: {} signals, {} small scores, {} large scores",
            signals.len(),
            s_scores.len(),
            l_scores.len()
        )));
    }
    let records = (0..signals.len())
        .map(|i| ExampleRecord {
            index: i,
            signal: signals[i],
            s_value: s_scores[i],
            l_value: l_scores[i],
        })
        .collect();
    CascadeDataset::from_records(records, RecordMode::Graded, gating)
}

/// Write the record interchange CSV: `index,signal,s_value,l_value,mode`.
pub fn write_records_csv(path: &Path, dataset: &CascadeDataset) -> Result<()> {
    let mut out = String::from("index,signal,s_value,l_value,mode\n");
    for r in dataset.records() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.index,
            r.signal,
            r.s_value,
            r.l_value,
            dataset.mode().name()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a record interchange CSV. All rows must agree on the mode.
pub fn read_records_csv(path: &Path) -> Result<CascadeDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    if header.trim() != "index,signal,s_value,l_value,mode" {
        return Err(Error::Parse(format!(
            "{}: unexpected header '{}'",
            path.display(),
            header.trim()
        )));
    }
    let mut records = Vec::new();
    let mut mode: Option<RecordMode> = None;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 {
            return Err(Error::Parse(format!(
                "{}: row {} has {} cells, expected 5",
                path.display(),
                line_no + 1,
                cells.len()
            )));
        }
        let parse_f64 = |cell: &str, col: usize| -> Result<f64> {
            cell.parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {} column {}: '{}' is not numeric",
                    path.display(),
                    line_no + 1,
                    col,
                    cell
                ))
            })
        };
        let index: usize = cells[0].parse().map_err(|_| {
            Error::Parse(format!(
                "{}: row {} column 1: '{}' is not an index",
                path.display(),
                line_no + 1,
                cells[0]
            ))
        })?;
        let row_mode = RecordMode::from_name(cells[4])?;
        match mode {
            None => mode = Some(row_mode),
            Some(m) if m != row_mode => {
                return Err(Error::Parse(format!(
                    "{}: row {} mixes record modes",
                    path.display(),
                    line_no + 1
                )))
            }
            _ => {}
        }
        records.push(ExampleRecord {
            index,
            signal: parse_f64(cells[1], 2)?,
            s_value: parse_f64(cells[2], 3)?,
            l_value: parse_f64(cells[3], 4)?,
        });
    }
    let mode = mode.ok_or_else(|| Error::Parse(format!("{}: no data rows", path.display())))?;
    CascadeDataset::from_records(records, mode, None)
}
