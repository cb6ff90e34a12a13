use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DatasetMode, EstimateRecord};
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, VideoScore};

/// Aggregates must be recomputable from the rows to this tolerance.
const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigMode {
    Segmented,
    Gapped,
    /// The run covered videos of both protocols.
    Mixed,
}

impl From<DatasetMode> for ConfigMode {
    fn from(m: DatasetMode) -> Self {
        match m {
            DatasetMode::Segmented => ConfigMode::Segmented,
            DatasetMode::Gapped => ConfigMode::Gapped,
        }
    }
}

impl ConfigMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfigMode::Segmented => "segmented",
            ConfigMode::Gapped => "gapped",
            ConfigMode::Mixed => "mixed",
        }
    }
}

/// Settings echoed into every results document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsConfig {
    pub tau: f64,
    pub alpha: f64,
    pub strides: Vec<usize>,
    pub window: usize,
    pub mode: ConfigMode,
    pub tie_tolerance: f64,
    pub round_predictions: bool,
}

impl ResultsConfig {
    /// Collects the counting settings recorded in `estimates`, which must
    /// agree on everything but the dataset mode.
    pub fn from_estimates(
        estimates: &[EstimateRecord],
        alpha: f64,
        round_predictions: bool,
    ) -> Result<Self> {
        let first = estimates.first().ok_or(Error::EmptyEvaluationSet)?;
        let mut mode = ConfigMode::from(first.mode);
        for e in estimates {
            let mismatch = |what: &str| {
                Error::invalid(
                    "estimates",
                    format!(
                        "'{}' and '{}' were counted with different {what}",
                        first.video_id, e.video_id
                    ),
                )
            };
            if e.window_size != first.window_size {
                return Err(mismatch("window sizes"));
            }
            if e.tau.to_bits() != first.tau.to_bits() {
                return Err(mismatch("tau"));
            }
            if e.tie_tolerance.to_bits() != first.tie_tolerance.to_bits() {
                return Err(mismatch("tie tolerances"));
            }
            if e.strides() != first.strides() {
                return Err(mismatch("strides"));
            }
            if ConfigMode::from(e.mode) != mode {
                mode = ConfigMode::Mixed;
            }
        }
        Ok(Self {
            tau: first.tau,
            alpha,
            strides: first.strides(),
            window: first.window_size,
            mode,
            tie_tolerance: first.tie_tolerance,
            round_predictions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsMetrics {
    pub oboa: f64,
    pub oboe: f64,
    pub mae: f64,
    pub alpha: f64,
    pub n_videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsRow {
    pub video_id: String,
    pub gt: f64,
    pub pred: f64,
    pub abs_err: f64,
    pub within_one: bool,
    pub speed_chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsDocument {
    pub config: ResultsConfig,
    pub metrics: ResultsMetrics,
    pub per_video: Vec<ResultsRow>,
}

impl ResultsDocument {
    pub fn to_report(&self) -> MetricReport {
        MetricReport {
            n_videos: self.metrics.n_videos,
            oboa: self.metrics.oboa,
            oboe: self.metrics.oboe,
            mae: self.metrics.mae,
            alpha_used: self.metrics.alpha,
            per_video: self
                .per_video
                .iter()
                .map(|r| VideoScore {
                    video_id: r.video_id.clone(),
                    gt: r.gt,
                    pred: r.pred,
                    abs_err: r.abs_err,
                    within_one: r.within_one,
                })
                .collect(),
        }
    }

    /// Checks that the metrics block follows from the rows and that the
    /// echoed α matches the one used.
    pub fn validate(&self) -> Result<()> {
        if self.metrics.alpha.to_bits() != self.config.alpha.to_bits() {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "metrics α {} differs from config α {}",
                    self.metrics.alpha, self.config.alpha
                ),
            ));
        }
        self.to_report().check_consistency(CONSISTENCY_TOL)
    }
}

/// Assembles a results document from a report and the estimates behind it.
pub fn write_results(
    report: &MetricReport,
    estimates: &[EstimateRecord],
    config: &ResultsConfig,
) -> Result<ResultsDocument> {
    report.check_consistency(CONSISTENCY_TOL)?;
    let speeds: HashMap<&str, usize> = estimates
        .iter()
        .map(|e| (e.video_id.as_str(), e.speed_chosen))
        .collect();
    let per_video = report
        .per_video
        .iter()
        .map(|row| {
            let speed_chosen = *speeds.get(row.video_id.as_str()).ok_or_else(|| {
                Error::invalid(
                    "estimates",
                    format!("no estimate for video '{}'", row.video_id),
                )
            })?;
            Ok(ResultsRow {
                video_id: row.video_id.clone(),
                gt: row.gt,
                pred: row.pred,
                abs_err: row.abs_err,
                within_one: row.within_one,
                speed_chosen,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = ResultsDocument {
        config: config.clone(),
        metrics: ResultsMetrics {
            oboa: report.oboa,
            oboe: report.oboe,
            mae: report.mae,
            alpha: report.alpha_used,
            n_videos: report.n_videos,
        },
        per_video,
    };
    doc.validate()?;
    Ok(doc)
}

pub fn write_results_json(mut writer: impl Write, doc: &ResultsDocument) -> Result<()> {
    doc.validate()?;
    serde_json::to_writer_pretty(&mut writer, doc).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_results(mut reader: impl Read) -> Result<ResultsDocument> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let doc: ResultsDocument =
        serde_json::from_str(&text).map_err(|e| Error::parse(e.line() as u64, e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

/// α with at least one decimal so that `0` reads as `0.0`.
pub fn format_alpha(alpha: f64) -> String {
    let s = alpha.to_string();
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Markdown table with one row per run. Runs that disagree on window size
/// or mode are still listed, with a note under the table.
pub fn render_table(docs: &[ResultsDocument], labels: &[impl AsRef<str>]) -> Result<String> {
    if docs.is_empty() {
        return Err(Error::invalid(
            "results",
            "need at least one results document",
        ));
    }
    if labels.len() != docs.len() {
        return Err(Error::invalid(
            "labels",
            format!(
                "{} labels for {} results documents",
                labels.len(),
                docs.len()
            ),
        ));
    }
    let header = ["Model", "MAE α", "MAE", "OBOA", "OBOE"];
    let rows: Vec<[String; 5]> = docs
        .iter()
        .zip(labels)
        .map(|(d, label)| {
            [
                label.as_ref().to_string(),
                format_alpha(d.metrics.alpha),
                format!("{:.4}", d.metrics.mae),
                format!("{:.4}", d.metrics.oboa),
                format!("{:.4}", d.metrics.oboe),
            ]
        })
        .collect();

    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let pad = |cell: &str, col: usize| {
        let fill = " ".repeat(widths[col] - cell.chars().count());
        if col == 0 {
            format!("{cell}{fill}")
        } else {
            format!("{fill}{cell}")
        }
    };

    let mut out = String::new();
    let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
    out += &line(header.iter().enumerate().map(|(i, h)| pad(h, i)).collect());
    out += &line(
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                if i == 0 {
                    "-".repeat(w)
                } else {
                    format!("{}:", "-".repeat(w - 1))
                }
            })
            .collect(),
    );
    for row in &rows {
        out += &line(row.iter().enumerate().map(|(i, c)| pad(c, i)).collect());
    }

    let first = &docs[0].config;
    if docs
        .iter()
        .any(|d| d.config.window != first.window || d.config.mode != first.mode)
    {
        let runs: Vec<String> = docs
            .iter()
            .zip(labels)
            .map(|(d, l)| {
                format!(
                    "{} (window {}, {})",
                    l.as_ref(),
                    d.config.window,
                    d.config.mode.as_str()
                )
            })
            .collect();
        out += &format!(
            "\nNote: runs differ in window size or mode and are not directly comparable: {}.\n",
            runs.join("; ")
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{build_report, CountPair, MetricConfig};

    fn config(alpha: f64) -> ResultsConfig {
        ResultsConfig {
            tau: 0.5,
            alpha,
            strides: vec![1, 2, 3, 4, 5],
            window: 64,
            mode: ConfigMode::Segmented,
            tie_tolerance: 0.02,
            round_predictions: false,
        }
    }

    fn doc_with(oboa: f64, mae: f64, alpha: f64) -> ResultsDocument {
        ResultsDocument {
            config: config(alpha),
            metrics: ResultsMetrics {
                oboa,
                oboe: 1.0 - oboa,
                mae,
                alpha,
                n_videos: 1,
            },
            per_video: vec![],
        }
    }

    fn estimate(id: &str, speed: usize) -> EstimateRecord {
        EstimateRecord {
            video_id: id.into(),
            count: 0.0,
            speed_chosen: speed,
            period_score_mean: 0.5,
            window_size: 64,
            mode: DatasetMode::Segmented,
            tau: 0.5,
            tie_tolerance: 0.02,
            speed_scores: vec![crate::multispeed::SpeedScore {
                stride: speed,
                period_score_mean: 0.5,
                count: 0.0,
            }],
            per_frame_counts: None,
        }
    }

    #[test]
    fn table_row_layout() {
        let table = render_table(&[doc_with(0.7047, 0.3083, 0.0)], &["baseline"]).unwrap();
        assert!(
            table.contains("0.0 | 0.3083 | 0.7047 | 0.2953 |"),
            "{table}"
        );
        assert!(table.starts_with("| Model "));
        assert!(!table.contains("Note"));
    }

    #[test]
    fn alpha_column_distinguishes_runs() {
        let docs = [doc_with(0.5, 0.4, 0.0), doc_with(0.5, 0.38, 0.1)];
        let table = render_table(&docs, &["a", "b"]).unwrap();
        let rows: Vec<&str> = table.lines().skip(2).collect();
        assert!(
            rows[0].contains(" 0.0 |") && rows[1].contains(" 0.1 |"),
            "{table}"
        );
    }

    #[test]
    fn mixed_configs_get_a_note() {
        let mut other = doc_with(0.5, 0.4, 0.0);
        other.config.window = 32;
        let table = render_table(&[doc_with(0.5, 0.4, 0.0), other], &["a", "b"]).unwrap();
        assert!(
            table.contains("Note:") && table.contains("window 32"),
            "{table}"
        );
    }

    #[test]
    fn table_errors() {
        assert!(render_table(&[], &[] as &[&str]).is_err());
        assert!(render_table(&[doc_with(0.5, 0.4, 0.0)], &["a", "b"]).is_err());
    }

    #[test]
    fn alpha_formatting() {
        assert_eq!(format_alpha(0.0), "0.0");
        assert_eq!(format_alpha(0.1), "0.1");
        assert_eq!(format_alpha(2.0), "2.0");
        assert_eq!(format_alpha(0.05), "0.05");
    }

    #[test]
    fn document_is_self_consistent() {
        let pairs = vec![
            CountPair::new("a", 2.0, 3.0),
            CountPair::new("b", 4.0, 2.0),
            CountPair::new("c", 7.0, 7.4),
        ];
        let report = build_report(&pairs, &MetricConfig::with_alpha(0.1)).unwrap();
        let est: Vec<_> = [("a", 1), ("b", 3), ("c", 2)]
            .iter()
            .map(|&(id, s)| estimate(id, s))
            .collect();
        let doc = write_results(&report, &est, &config(0.1)).unwrap();
        assert_eq!(doc.per_video[1].speed_chosen, 3);

        let recomputed =
            build_report(&doc.to_report().pairs(), &MetricConfig::with_alpha(0.1)).unwrap();
        assert!((recomputed.mae - doc.metrics.mae).abs() <= 1e-9);
        assert!((recomputed.oboa - doc.metrics.oboa).abs() <= 1e-9);

        let mut buf = Vec::new();
        write_results_json(&mut buf, &doc).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), doc);

        let mut tampered = doc.clone();
        tampered.metrics.mae += 1e-6;
        assert!(tampered.validate().is_err());
        let mut tampered = doc;
        tampered.config.alpha = 0.0;
        assert!(tampered.validate().is_err());
    }

    #[test]
    fn results_errors() {
        let report =
            build_report(&[CountPair::new("a", 2.0, 3.0)], &MetricConfig::default()).unwrap();
        assert!(write_results(&report, &[], &config(0.0)).is_err());

        let mut empty = report.clone();
        empty.per_video.clear();
        empty.n_videos = 0;
        assert!(write_results(&empty, &[estimate("a", 1)], &config(0.0)).is_err());
    }

    #[test]
    fn config_from_estimates() {
        let mut b = estimate("b", 1);
        b.mode = DatasetMode::Gapped;
        let cfg =
            ResultsConfig::from_estimates(&[estimate("a", 1), b.clone()], 0.1, false).unwrap();
        assert_eq!(cfg.mode, ConfigMode::Mixed);
        assert_eq!(cfg.alpha, 0.1);

        b.window_size = 32;
        assert!(ResultsConfig::from_estimates(&[estimate("a", 1), b], 0.0, false).is_err());
        assert!(ResultsConfig::from_estimates(&[], 0.0, false).is_err());
    }
}
