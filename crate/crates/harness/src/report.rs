//! Experiment reports and their csv / markdown / json-lines renderings.
//!
//! Accuracies and deltas are stored as fractions and rendered in percent with
//! two decimals. Compression ratios `d / k` render as `"12×"` (or
//! `$12\times$` in markdown), with up to two decimals for non-integer ratios.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use subspace_core::ProjectionMethod;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Sweep,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowMethod {
    Baseline,
    Jl,
    Pca,
    Learned,
}

impl From<ProjectionMethod> for RowMethod {
    fn from(m: ProjectionMethod) -> Self {
        match m {
            ProjectionMethod::Jl => Self::Jl,
            ProjectionMethod::Pca => Self::Pca,
            ProjectionMethod::Learned => Self::Learned,
        }
    }
}

impl RowMethod {
    pub fn key(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Jl => "jl",
            Self::Pca => "pca",
            Self::Learned => "learned",
        }
    }

    fn display_name(self) -> &'static str {
        match self {
            Self::Baseline => "Fine-tuned Baseline",
            Self::Jl => "JL Projection",
            Self::Pca => "PCA Projection",
            Self::Learned => "Learned Projection",
        }
    }

    fn short_name(self) -> &'static str {
        match self {
            Self::Baseline => "Baseline",
            Self::Jl => "JL",
            Self::Pca => "PCA",
            Self::Learned => "Learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: RowMethod,
    pub k: usize,
    pub accuracy: f64,
    /// `accuracy - baseline_accuracy`.
    pub delta: f64,
    pub mean_loss: f64,
    /// Projected loss within `epsilon` of the baseline loss.
    pub valid: bool,
    /// Seed of the Gaussian map (JL rows and learned initializations).
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ReportKind,
    pub name: String,
    pub ambient_dim: usize,
    pub epsilon: f64,
    pub baseline_accuracy: f64,
    pub baseline_loss: f64,
    /// Baseline first, then projected rows in descending `k`.
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            other => Err(HarnessError::Config(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

/// `d / k` with trailing zeros trimmed: 768/512 -> "1.5", 2048/128 -> "16".
pub fn ratio_value(d: usize, k: usize) -> String {
    let s = format!("{:.2}", d as f64 / k as f64);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn ratio_label(d: usize, k: usize) -> String {
    format!("{}×", ratio_value(d, k))
}

fn ratio_latex(d: usize, k: usize) -> String {
    format!("${}\\times$", ratio_value(d, k))
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn signed_pct(v: f64) -> String {
    let s = pct(v);
    if s == "-0.00" {
        "+0.00".into()
    } else if s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum JsonLine {
    Header {
        kind: ReportKind,
        name: String,
        ambient_dim: usize,
        epsilon: f64,
        baseline_accuracy: f64,
        baseline_loss: f64,
    },
    Row {
        #[serde(flatten)]
        row: ReportRow,
        ratio: String,
    },
}

impl ExperimentReport {
    pub fn new(
        kind: ReportKind,
        name: impl Into<String>,
        ambient_dim: usize,
        epsilon: f64,
        baseline_accuracy: f64,
        baseline_loss: f64,
    ) -> Self {
        Self {
            kind,
            name: name.into(),
            ambient_dim,
            epsilon,
            baseline_accuracy,
            baseline_loss,
            rows: vec![ReportRow {
                method: RowMethod::Baseline,
                k: ambient_dim,
                accuracy: baseline_accuracy,
                delta: 0.0,
                mean_loss: baseline_loss,
                valid: true,
                seed: None,
            }],
        }
    }

    pub fn push(
        &mut self,
        method: RowMethod,
        k: usize,
        accuracy: f64,
        mean_loss: f64,
        seed: Option<u64>,
    ) {
        self.rows.push(ReportRow {
            method,
            k,
            accuracy,
            delta: accuracy - self.baseline_accuracy,
            mean_loss,
            valid: mean_loss <= self.baseline_loss + self.epsilon,
            seed,
        });
    }

    pub fn row(&self, method: RowMethod, k: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.k == k)
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        if self.rows.is_empty() {
            return Err(HarnessError::Report("report has no rows".into()));
        }
        Ok(match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::JsonLines => self.to_jsonl()?,
            ReportFormat::Markdown => match self.kind {
                ReportKind::Sweep => self.to_markdown_sweep(),
                ReportKind::Ablation => self.to_markdown_ablation(),
            },
        })
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("method,k,ratio,accuracy_pct,delta_pct,mean_loss,valid\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{}",
                r.method.key(),
                r.k,
                ratio_label(self.ambient_dim, r.k),
                pct(r.accuracy),
                signed_pct(r.delta),
                r.mean_loss,
                r.valid
            );
        }
        out
    }

    fn to_markdown_sweep(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(out, "### {}\n", self.name);
        }
        out.push_str("| Method | Dim ($k$) | Ratio | Acc. | $\\Delta$ Base |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let delta = match r.method {
                RowMethod::Baseline => "--".to_string(),
                _ => format!("{}%", signed_pct(r.delta)),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {}% | {} |",
                r.method.display_name(),
                r.k,
                ratio_latex(self.ambient_dim, r.k),
                pct(r.accuracy),
                delta
            );
        }
        out
    }

    fn to_markdown_ablation(&self) -> String {
        let methods: Vec<RowMethod> = [RowMethod::Jl, RowMethod::Pca, RowMethod::Learned]
            .into_iter()
            .filter(|m| self.rows.iter().any(|r| r.method == *m))
            .collect();
        let mut dims: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.method != RowMethod::Baseline)
            .map(|r| r.k)
            .collect();
        dims.dedup();

        let mut out = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(out, "### {}\n", self.name);
        }
        let _ = writeln!(
            out,
            "Baseline ($d = {}$): {}%\n",
            self.ambient_dim,
            pct(self.baseline_accuracy)
        );
        out.push_str("| Dim ($k$) |");
        for m in &methods {
            let _ = write!(out, " {} |", m.short_name());
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(methods.len()));
        out.push('\n');
        for k in dims {
            let _ = write!(out, "| {k} ({}) |", ratio_latex(self.ambient_dim, k));
            for m in &methods {
                match self.row(*m, k) {
                    Some(r) => {
                        let _ = write!(out, " {}% |", pct(r.accuracy));
                    }
                    None => out.push_str(" -- |"),
                }
            }
            out.push('\n');
        }
        out
    }

    fn to_jsonl(&self) -> Result<String> {
        let header = JsonLine::Header {
            kind: self.kind,
            name: self.name.clone(),
            ambient_dim: self.ambient_dim,
            epsilon: self.epsilon,
            baseline_accuracy: self.baseline_accuracy,
            baseline_loss: self.baseline_loss,
        };
        let mut out =
            serde_json::to_string(&header).map_err(|e| HarnessError::Report(e.to_string()))?;
        out.push('\n');
        for r in &self.rows {
            let line = JsonLine::Row {
                row: r.clone(),
                ratio: ratio_label(self.ambient_dim, r.k),
            };
            out.push_str(
                &serde_json::to_string(&line).map_err(|e| HarnessError::Report(e.to_string()))?,
            );
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the json-lines rendering back into a report.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report: Option<ExperimentReport> = None;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let parsed: JsonLine = serde_json::from_str(line)
                .map_err(|e| HarnessError::Report(format!("line {}: {e}", i + 1)))?;
            match (parsed, report.as_mut()) {
                (
                    JsonLine::Header {
                        kind,
                        name,
                        ambient_dim,
                        epsilon,
                        baseline_accuracy,
                        baseline_loss,
                    },
                    None,
                ) => {
                    report = Some(ExperimentReport {
                        kind,
                        name,
                        ambient_dim,
                        epsilon,
                        baseline_accuracy,
                        baseline_loss,
                        rows: Vec::new(),
                    })
                }
                (JsonLine::Row { row, .. }, Some(r)) => r.rows.push(row),
                (JsonLine::Header { .. }, Some(_)) => {
                    return Err(HarnessError::Report(format!(
                        "line {}: duplicate header",
                        i + 1
                    )))
                }
                (JsonLine::Row { .. }, None) => {
                    return Err(HarnessError::Report(format!(
                        "line {}: row before header",
                        i + 1
                    )))
                }
            }
        }
        report.ok_or_else(|| HarnessError::Report("missing header line".into()))
    }
}

/// Writes the rendered report to `path`.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = report.render(format)?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sweep report from fixed reference accuracies (percent).
    fn reference_sweep(
        name: &str,
        d: usize,
        baseline: f64,
        rows: &[(usize, f64)],
    ) -> ExperimentReport {
        let mut r = ExperimentReport::new(ReportKind::Sweep, name, d, 0.05, baseline / 100.0, 0.5);
        for &(k, acc) in rows {
            r.push(RowMethod::Jl, k, acc / 100.0, 0.5, Some(42));
        }
        r
    }

    #[test]
    fn ratio_formatting() {
        assert_eq!(ratio_label(768, 512), "1.5×");
        assert_eq!(ratio_label(768, 256), "3×");
        assert_eq!(ratio_label(768, 64), "12×");
        assert_eq!(ratio_label(2048, 128), "16×");
        assert_eq!(ratio_label(2048, 1024), "2×");
        assert_eq!(ratio_label(256, 256), "1×");
        assert_eq!(ratio_label(100, 30), "3.33×");
    }

    #[test]
    fn text_encoder_shaped_sweep() {
        let r = reference_sweep(
            "BERT-base (MNLI)",
            768,
            83.74,
            &[(512, 83.93), (256, 83.79), (128, 83.79), (64, 83.64)],
        );
        let ratios: Vec<(usize, String)> = r.rows[1..]
            .iter()
            .map(|row| (row.k, ratio_label(768, row.k)))
            .collect();
        assert_eq!(
            ratios,
            vec![
                (512, "1.5×".to_string()),
                (256, "3×".to_string()),
                (128, "6×".to_string()),
                (64, "12×".to_string())
            ]
        );
        let md = r.render(ReportFormat::Markdown).unwrap();
        assert!(md.contains("| Fine-tuned Baseline | 768 | $1\\times$ | 83.74% | -- |"));
        assert!(md.contains("| JL Projection | 512 | $1.5\\times$ | 83.93% | +0.19% |"));
        assert!(md.contains("| JL Projection | 64 | $12\\times$ | 83.64% | -0.10% |"));
    }

    #[test]
    fn vision_transformer_sweep_markdown() {
        let r = reference_sweep(
            "ViT-B/16 (ImageNet-100)",
            768,
            94.02,
            &[(512, 93.52), (256, 93.98), (128, 93.90), (64, 93.28)],
        );
        let md = r.render(ReportFormat::Markdown).unwrap();
        assert!(
            md.contains("| JL Projection | 64 | $12\\times$ | 93.28% | -0.74% |"),
            "{md}"
        );
        assert!(md.contains("| JL Projection | 256 | $3\\times$ | 93.98% | -0.04% |"));
        let header = md.lines().find(|l| l.starts_with("| Method")).unwrap();
        assert_eq!(
            header,
            "| Method | Dim ($k$) | Ratio | Acc. | $\\Delta$ Base |"
        );
    }

    #[test]
    fn delta_is_exact_difference() {
        let r = reference_sweep("x", 2048, 82.40, &[(1024, 81.32), (128, 80.19)]);
        for row in &r.rows {
            assert_eq!(row.delta, row.accuracy - r.baseline_accuracy);
        }
        let csv = r.render(ReportFormat::Csv).unwrap();
        assert!(csv.contains("jl,1024,2×,81.32,-1.08,"));
        assert!(csv.contains("jl,128,16×,80.19,-2.21,"));
    }

    #[test]
    fn reference_deltas_are_recomputed_exactly() {
        // (d, baseline, k, accuracy, printed delta), all in percent.
        let rows = [
            (2048, 82.40, 1024, 81.32, "-1.08"),
            (2048, 82.40, 512, 81.20, "-1.20"),
            (2048, 82.40, 256, 80.89, "-1.51"),
            (2048, 82.40, 128, 80.19, "-2.21"),
            (768, 94.02, 512, 93.52, "-0.50"),
            (768, 94.02, 256, 93.98, "-0.04"),
            (768, 94.02, 128, 93.90, "-0.12"),
            (768, 94.02, 64, 93.28, "-0.74"),
            (768, 83.74, 512, 83.93, "+0.19"),
            (768, 83.74, 256, 83.79, "+0.05"),
            (768, 83.74, 128, 83.79, "+0.05"),
            (768, 83.74, 64, 83.64, "-0.10"),
        ];
        for (d, base, k, acc, printed) in rows {
            let r = reference_sweep("", d, base, &[(k, acc)]);
            let csv = r.render(ReportFormat::Csv).unwrap();
            let line = csv.lines().nth(2).unwrap();
            assert_eq!(line.split(',').nth(4).unwrap(), printed, "{line}");
        }
    }

    #[test]
    fn ablation_markdown_pivot() {
        let mut r = ExperimentReport::new(
            ReportKind::Ablation,
            "ResNet-50 (CIFAR-100)",
            2048,
            0.05,
            0.8240,
            0.6,
        );
        for (k, jl, pca, learned) in [(1024, 81.32, 81.42, 81.31), (512, 81.20, 81.30, 80.56)] {
            r.push(RowMethod::Jl, k, jl / 100.0, 0.6, Some(1));
            r.push(RowMethod::Pca, k, pca / 100.0, 0.6, None);
            r.push(RowMethod::Learned, k, learned / 100.0, 0.6, Some(1));
        }
        let md = r.render(ReportFormat::Markdown).unwrap();
        assert!(md.contains("| Dim ($k$) | JL | PCA | Learned |"));
        assert!(
            md.contains("| 512 ($4\\times$) | 81.20% | 81.30% | 80.56% |"),
            "{md}"
        );
        assert!(md.contains("| 1024 ($2\\times$) | 81.32% | 81.42% | 81.31% |"));
    }

    #[test]
    fn baseline_only_csv_has_one_data_line() {
        let r = ExperimentReport::new(ReportKind::Sweep, "", 16, 0.05, 0.9, 0.3);
        let csv = r.render(ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "baseline,16,1×,90.00,+0.00,0.300000,true");
    }

    #[test]
    fn rounded_zero_delta_is_positive() {
        let mut r = ExperimentReport::new(ReportKind::Sweep, "", 16, 0.05, 0.9, 0.3);
        r.push(RowMethod::Jl, 8, 0.9 - 1e-9, 0.3, None);
        assert!(r
            .render(ReportFormat::Csv)
            .unwrap()
            .contains("jl,8,2×,90.00,+0.00,"));
    }

    #[test]
    fn empty_report_is_rejected() {
        let mut r = ExperimentReport::new(ReportKind::Sweep, "", 16, 0.05, 0.9, 0.3);
        r.rows.clear();
        assert!(r.render(ReportFormat::Csv).is_err());
    }

    #[test]
    fn validity_flag_uses_epsilon() {
        let mut r = ExperimentReport::new(ReportKind::Sweep, "", 16, 0.05, 0.9, 1.0);
        r.push(RowMethod::Jl, 8, 0.9, 1.10, None);
        r.push(RowMethod::Jl, 4, 0.9, 1.04, None);
        assert!(!r.rows[1].valid);
        assert!(r.rows[2].valid);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut r = reference_sweep("rt", 768, 83.74, &[(512, 83.93), (64, 83.64)]);
        r.rows[1].mean_loss = 0.1 + 0.2;
        let text = r.render(ReportFormat::JsonLines).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(ExperimentReport::from_jsonl(&text).unwrap(), r);
    }

    #[test]
    fn jsonl_rejects_malformed() {
        assert!(ExperimentReport::from_jsonl("").is_err());
        assert!(ExperimentReport::from_jsonl("{\"type\":\"row\"}").is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!(
            "jsonl".parse::<ReportFormat>().unwrap(),
            ReportFormat::JsonLines
        );
        assert_eq!(
            "markdown".parse::<ReportFormat>().unwrap(),
            ReportFormat::Markdown
        );
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
