//! Report stage: aggregate the metrics CSV across seeds, emit a summary
//! table, the three metric-vs-alpha panels, and deferral-curve plots for
//! selected runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cascade::read_records_csv;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::manifest::RunManifest;
use crate::harness::pipeline::cell_id;
use crate::harness::svg::{Band, Chart, HLine, Series};

/// One parsed metrics row; `alpha = None` is the baseline control.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub gating: String,
    pub acc_s: f64,
    pub acc_l: f64,
    pub delta: Option<f64>,
    pub s_o: Option<f64>,
    pub s_auroc: Option<f64>,
    pub s_d: Option<f64>,
    pub pearson_rho: Option<f64>,
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    if header.trim() != crate::metrics::METRICS_CSV_HEADER {
        return Err(Error::Parse(format!(
            "{}: unexpected header '{}'",
            path.display(),
            header.trim()
        )));
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(Error::Parse(format!(
                "{}: row {} has {} cells, expected 11",
                path.display(),
                line_no + 1,
                cells.len()
            )));
        }
        let req = |idx: usize| -> Result<f64> {
            cells[idx].trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {} column {}: '{}' is not numeric",
                    path.display(),
                    line_no + 1,
                    idx + 1,
                    cells[idx]
                ))
            })
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            let cell = cells[idx].trim();
            if cell.is_empty() {
                Ok(None)
            } else {
                req(idx).map(Some)
            }
        };
        rows.push(MetricsRow {
            dataset: cells[0].trim().to_string(),
            alpha: opt(1)?,
            seed: req(2)? as u64,
            gating: cells[3].trim().to_string(),
            acc_s: req(4)?,
            acc_l: req(5)?,
            delta: opt(6)?,
            s_o: opt(7)?,
            s_auroc: opt(8)?,
            s_d: opt(9)?,
            pearson_rho: opt(10)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median/min/max of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(MetricSummary {
        median: median(&sorted),
        min: sorted[0],
        max: *sorted.last().unwrap(),
        count: sorted.len(),
    })
}

/// Per-alpha aggregation (`None` key holds the baseline rows).
pub type GroupedMetrics = BTreeMap<Option<u64>, Vec<MetricsRow>>;

/// Group rows by alpha; the key is the alpha's bit pattern so the map
/// stays ordered and hash-free (`None` sorts first as the baseline).
pub fn group_by_alpha(rows: &[MetricsRow]) -> GroupedMetrics {
    let mut grouped: GroupedMetrics = BTreeMap::new();
    for row in rows {
        grouped.entry(row.alpha.map(f64::to_bits)).or_default().push(row.clone());
    }
    grouped
}

fn metric_values(rows: &[MetricsRow], metric: &str) -> Vec<f64> {
    rows.iter()
        .filter_map(|r| match metric {
            "acc_s" => Some(r.acc_s),
            "acc_l" => Some(r.acc_l),
            "delta" => r.delta,
            "s_o" => r.s_o,
            "s_auroc" => r.s_auroc,
            "s_d" => r.s_d,
            "pearson_rho" => r.pearson_rho,
            _ => None,
        })
        .collect()
}

const SUMMARY_METRICS: [&str; 7] =
    ["acc_s", "acc_l", "delta", "s_o", "s_auroc", "s_d", "pearson_rho"];

fn write_summary_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let grouped = group_by_alpha(rows);
    let mut out = String::from("dataset,gating,alpha,metric,median,min,max,runs\n");
    for (alpha_bits, group) in &grouped {
        let alpha_label =
            alpha_bits.map(|bits| f64::from_bits(bits).to_string()).unwrap_or_default();
        for metric in SUMMARY_METRICS {
            if let Some(s) = summarize(&metric_values(group, metric)) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    group[0].dataset,
                    group[0].gating,
                    alpha_label,
                    metric,
                    s.median,
                    s.min,
                    s.max,
                    s.count
                ));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct PanelSpec {
    metric: &'static str,
    title: &'static str,
    y_label: &'static str,
    file: &'static str,
    /// Clamp the y-range to `[min(0, data), 1]`.
    clamp_unit: bool,
}

const PANELS: [PanelSpec; 3] = [
    PanelSpec {
        metric: "s_o",
        title: "Confidence overlap vs alpha",
        y_label: "distributional overlap",
        file: "overlap_vs_alpha.svg",
        clamp_unit: false,
    },
    PanelSpec {
        metric: "s_d",
        title: "Deferral performance vs alpha",
        y_label: "deferral performance",
        file: "deferral_performance_vs_alpha.svg",
        clamp_unit: true,
    },
    PanelSpec {
        metric: "acc_s",
        title: "Small-model accuracy vs alpha",
        y_label: "accuracy",
        file: "small_model_accuracy_vs_alpha.svg",
        clamp_unit: false,
    },
];

fn panel_chart(rows: &[MetricsRow], spec: &PanelSpec) -> Option<Chart> {
    let grouped = group_by_alpha(rows);
    let mut xs = Vec::new();
    let mut medians = Vec::new();
    let mut lows = Vec::new();
    let mut highs = Vec::new();
    for (alpha_bits, group) in &grouped {
        let Some(bits) = alpha_bits else { continue };
        if let Some(s) = summarize(&metric_values(group, spec.metric)) {
            xs.push(f64::from_bits(*bits));
            medians.push(s.median);
            lows.push(s.min);
            highs.push(s.max);
        }
    }
    if xs.is_empty() {
        return None;
    }
    let mut chart = Chart::new(spec.title, "alpha", spec.y_label);
    chart.bands.push(Band {
        xs: xs.clone(),
        low: lows,
        high: highs,
        color: "#1f77b4".into(),
        opacity: 0.18,
    });
    chart.series.push(Series {
        label: "tuned (median)".into(),
        points: xs.iter().cloned().zip(medians.iter().cloned()).collect(),
        color: "#1f77b4".into(),
        dash: String::new(),
        width: 2.0,
    });
    if let Some(baseline) = grouped.get(&None) {
        if let Some(s) = summarize(&metric_values(baseline, spec.metric)) {
            chart.hlines.push(HLine {
                y: s.median,
                label: "baseline".into(),
                color: "#d62728".into(),
            });
        }
    }
    chart.auto_ranges();
    if spec.clamp_unit {
        let data_min = chart
            .bands
            .iter()
            .flat_map(|b| b.low.iter())
            .chain(chart.hlines.iter().map(|h| &h.y))
            .cloned()
            .fold(0.0f64, f64::min);
        chart.y_range = (data_min, 1.0);
    }
    Some(chart)
}

fn curve_chart(cfg: &ExperimentConfig, run_id: &str) -> Result<Option<Chart>> {
    let records_path = cfg.out_dir.join(format!("records/{run_id}.csv"));
    if !records_path.exists() {
        return Ok(None);
    }
    let dataset = read_records_csv(&records_path)?;
    let sweep = dataset.sweep(&cfg.kde_config()?)?;
    let mut chart = Chart::new(
        &format!("Deferral curves ({run_id})"),
        "deferral ratio",
        "joint accuracy",
    );
    let to_points = |curve: &crate::metrics::DeferralCurve| -> Vec<(f64, f64)> {
        curve.ratios().iter().cloned().zip(curve.accuracies().iter().cloned()).collect()
    };
    chart.series.push(Series {
        label: "random".into(),
        points: to_points(&sweep.random),
        color: "#d62728".into(),
        dash: "2,4".into(),
        width: 1.5,
    });
    chart.series.push(Series {
        label: "ideal".into(),
        points: to_points(&sweep.ideal),
        color: "#2ca02c".into(),
        dash: "7,4".into(),
        width: 1.5,
    });
    chart.series.push(Series {
        label: "realized".into(),
        points: to_points(&sweep.realized),
        color: "#222222".into(),
        dash: String::new(),
        width: 2.0,
    });
    // curve plots get sparse markers only; drop per-point circles by
    // thinning to the polyline alone
    for s in &mut chart.series {
        if s.points.len() > 64 {
            let step = s.points.len() / 64 + 1;
            let mut thin: Vec<(f64, f64)> =
                s.points.iter().step_by(step).cloned().collect();
            if *thin.last().unwrap() != *s.points.last().unwrap() {
                thin.push(*s.points.last().unwrap());
            }
            s.points = thin;
        }
    }
    chart.auto_ranges();
    chart.x_range = (0.0, 1.0);
    Ok(Some(chart))
}

/// Render summary table and plots from the metrics CSV. Deterministic
/// output; plot files are byte-identical across reruns on the same input.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let out = &cfg.out_dir;
    let mut manifest = RunManifest::load_or_new(out, &cfg.hash())?;
    let metrics_path = out.join("metrics.csv");
    if !metrics_path.exists() {
        return Err(Error::Dependency(format!(
            "missing {}; run the evaluate stage first",
            metrics_path.display()
        )));
    }
    let rows = read_metrics_csv(&metrics_path)?;
    std::fs::create_dir_all(out.join("plots"))?;

    let mut artifacts = Vec::new();
    write_summary_csv(&out.join("summary.csv"), &rows)?;
    artifacts.push(PathBuf::from("summary.csv"));

    for spec in &PANELS {
        if let Some(chart) = panel_chart(&rows, spec) {
            let rel = PathBuf::from(format!("plots/{}", spec.file));
            std::fs::write(out.join(&rel), chart.render())?;
            artifacts.push(rel);
        }
    }

    // deferral curves for the baseline and the most aggressive alpha at
    // the first seed
    let mut selected = vec!["baseline".to_string()];
    if let Some(min_alpha) = cfg
        .finetune
        .alphas
        .iter()
        .cloned()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        selected.push(cell_id(min_alpha, cfg.finetune.seeds[0]));
    }
    for run_id in selected {
        if let Some(chart) = curve_chart(cfg, &run_id)? {
            let rel = PathBuf::from(format!("plots/curve_{run_id}.svg"));
            std::fs::write(out.join(&rel), chart.render())?;
            artifacts.push(rel);
        }
    }

    manifest.record_stage("report", artifacts, start.elapsed().as_secs_f64());
    manifest.save(out)?;
    manifest.verify_artifacts(out)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut text = String::from(crate::metrics::METRICS_CSV_HEADER);
        text.push('\n');
        text.push_str("blobs,,0,max-softmax,0.8,0.9,0.01,0.5,0.7,0.2,\n");
        text.push_str("blobs,0.05,0,max-softmax,0.75,0.9,0.01,0.3,0.85,0.6,\n");
        std::fs::write(&path, text).unwrap();
        let rows = read_metrics_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].alpha, None);
        assert_eq!(rows[1].alpha, Some(0.05));
        assert_eq!(rows[1].s_d, Some(0.6));
        assert_eq!(rows[1].pearson_rho, None);
    }

    #[test]
    fn malformed_metrics_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut text = String::from(crate::metrics::METRICS_CSV_HEADER);
        text.push('\n');
        text.push_str("blobs,0.05,0,max-softmax,bad,0.9,,,,,\n");
        std::fs::write(&path, text).unwrap();
        let err = read_metrics_csv(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn summaries_have_degenerate_bands_for_single_runs() {
        let row = MetricsRow {
            dataset: "d".into(),
            alpha: Some(0.1),
            seed: 0,
            gating: "max-softmax".into(),
            acc_s: 0.8,
            acc_l: 0.9,
            delta: Some(0.0),
            s_o: Some(0.4),
            s_auroc: Some(0.8),
            s_d: Some(0.5),
            pearson_rho: None,
        };
        let s = summarize(&metric_values(&[row], "s_d")).unwrap();
        assert_eq!(s.median, 0.5);
        assert_eq!(s.min, s.max);
        assert_eq!(s.count, 1);
    }

    #[test]
    fn panel_chart_clamps_deferral_axis() {
        let rows = vec![
            MetricsRow {
                dataset: "d".into(),
                alpha: Some(0.1),
                seed: 0,
                gating: "g".into(),
                acc_s: 0.8,
                acc_l: 0.9,
                delta: None,
                s_o: Some(0.5),
                s_auroc: None,
                s_d: Some(-0.2),
                pearson_rho: None,
            },
            MetricsRow {
                dataset: "d".into(),
                alpha: Some(0.5),
                seed: 0,
                gating: "g".into(),
                acc_s: 0.85,
                acc_l: 0.9,
                delta: None,
                s_o: Some(0.6),
                s_auroc: None,
                s_d: Some(0.4),
                pearson_rho: None,
            },
        ];
        let chart = panel_chart(&rows, &PANELS[1]).unwrap();
        assert_eq!(chart.y_range.1, 1.0);
        assert!(chart.y_range.0 <= -0.2);
    }
}
