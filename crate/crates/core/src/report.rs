//! Report bundles: a machine-readable `report.json` plus the text summary,
//! weight tables and SVG figures rendered from it.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluate::{ConfusionMatrix, CvResult, RateMatrix, WeightReport};

pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_index: usize,
    pub test_machines: Vec<u32>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub counts: ConfusionMatrix,
    pub normalized: RateMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of one cross-validation run on one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub features: Vec<String>,
    pub folds: Vec<FoldSummary>,
    pub average: RateMatrix,
    pub weights: WeightReport,
}

impl CvSummary {
    pub fn new(result: &CvResult, folds: &[crate::evaluate::FoldSplit]) -> Self {
        let features = result
            .folds
            .first()
            .map(|f| f.model.encoding.feature_names())
            .unwrap_or_default();
        let folds = result
            .folds
            .iter()
            .zip(folds)
            .map(|(o, split)| FoldSummary {
                fold_index: o.fold_index,
                test_machines: split.test_machines.iter().map(|m| m.0).collect(),
                train_rows: split.train_rows.len(),
                test_rows: split.test_rows.len(),
                counts: o.confusion,
                normalized: o.confusion.normalized(),
                iterations: o.model.fit_meta.iterations,
                converged: o.model.fit_meta.converged,
            })
            .collect();
        Self {
            features,
            folds,
            average: result.average,
            weights: result.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weight_positive: f64,
    pub average: RateMatrix,
}

/// Everything needed to re-render a report and re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub software_version: String,
    pub dataset_digest: String,
    /// Fully resolved run configuration as TOML.
    pub config: String,
    pub label_mode: String,
    pub full: CvSummary,
    pub reduced: Option<CvSummary>,
    pub prune_rule: Option<String>,
    #[serde(default)]
    pub weight_sweep: Vec<SweepPoint>,
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(REPORT_JSON))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Writes `report.json`, `config.toml` and every rendered artifact.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_JSON), self.to_json())?;
        fs::write(dir.join("config.toml"), &self.config)?;
        self.render(dir)
    }

    /// Renders the derived artifacts from the bundle alone.
    pub fn render(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        fs::write(dir.join("weights_full.csv"), self.full.weights.to_csv())?;
        fs::write(
            dir.join("confusion_full.svg"),
            confusion_svg(&self.full.average, "Full feature set"),
        )?;
        fs::write(
            dir.join("weights_full.svg"),
            weights_svg(&self.full.weights, "Average feature weights (full)"),
        )?;
        if let Some(reduced) = &self.reduced {
            fs::write(dir.join("weights_reduced.csv"), reduced.weights.to_csv())?;
            fs::write(
                dir.join("confusion_reduced.svg"),
                confusion_svg(&reduced.average, "Reduced feature set"),
            )?;
            fs::write(
                dir.join("weights_reduced.svg"),
                weights_svg(&reduced.weights, "Average feature weights (reduced)"),
            )?;
        }
        if !self.weight_sweep.is_empty() {
            let mut csv =
                String::from("weight_positive,recall,false_negative_rate,false_positive_rate\n");
            for p in &self.weight_sweep {
                let _ = writeln!(
                    csv,
                    "{:?},{:?},{:?},{:?}",
                    p.weight_positive,
                    p.average.recall(),
                    p.average.false_negative_rate(),
                    p.average.false_positive_rate()
                );
            }
            fs::write(dir.join("weight_sweep.csv"), csv)?;
        }
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "software_version = {}", self.software_version);
        let _ = writeln!(s, "dataset_digest = {}", self.dataset_digest);
        let _ = writeln!(s, "label_mode = {}", self.label_mode);
        if let Some(rule) = &self.prune_rule {
            let _ = writeln!(s, "prune_rule = {rule}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[config]");
        s.push_str(&self.config);
        if !self.config.ends_with('\n') {
            s.push('\n');
        }
        write_cv(&mut s, "full", &self.full);
        if let Some(reduced) = &self.reduced {
            write_cv(&mut s, "reduced", reduced);
        }
        if !self.weight_sweep.is_empty() {
            let _ = writeln!(s, "\n[weight_sweep]");
            for p in &self.weight_sweep {
                let _ = writeln!(
                    s,
                    "weight {:>8}: recall {:.4}  fnr {:.4}  fpr {:.4}",
                    p.weight_positive,
                    p.average.recall(),
                    p.average.false_negative_rate(),
                    p.average.false_positive_rate()
                );
            }
        }
        s
    }
}

fn write_matrix(s: &mut String, m: &RateMatrix) {
    let _ = writeln!(s, "                 pred_ok   pred_fail");
    let _ = writeln!(
        s,
        "  true_ok      {:>9.6} {:>9.6}",
        m.rates[0][0], m.rates[0][1]
    );
    let _ = writeln!(
        s,
        "  true_fail    {:>9.6} {:>9.6}",
        m.rates[1][0], m.rates[1][1]
    );
}

fn write_cv(s: &mut String, name: &str, cv: &CvSummary) {
    let _ = writeln!(s, "\n[{name}]");
    let _ = writeln!(
        s,
        "features ({}) = {}",
        cv.features.len(),
        cv.features.join(",")
    );
    for f in &cv.folds {
        let c = &f.counts.counts;
        let _ = writeln!(
            s,
            "\nfold {}: test machines {:?}, train rows {}, test rows {}, newton iterations {}, converged {}",
            f.fold_index, f.test_machines, f.train_rows, f.test_rows, f.iterations, f.converged
        );
        let _ = writeln!(
            s,
            "  counts: tn {} fp {} fn {} tp {}",
            c[0][0], c[0][1], c[1][0], c[1][1]
        );
        write_matrix(s, &f.normalized);
    }
    let _ = writeln!(s, "\naverage normalized confusion matrix:");
    write_matrix(s, &cv.average);
    let _ = writeln!(
        s,
        "failure recall {:.6}, false negative rate {:.6}, false positive rate {:.6}",
        cv.average.recall(),
        cv.average.false_negative_rate(),
        cv.average.false_positive_rate()
    );
    let _ = writeln!(s, "\nweights by |mean|:");
    for r in &cv.weights.rows {
        let _ = writeln!(
            s,
            "  {:>3} {:<12} {:>12.6} +/- {:.6}",
            r.abs_rank, r.feature, r.mean, r.std
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// 2x2 heatmap with cell shading proportional to the rate.
pub fn confusion_svg(m: &RateMatrix, title: &str) -> String {
    let cell = 120.0;
    let (x0, y0) = (110.0, 50.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="360" height="330" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="180" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        escape(title)
    );
    let labels = ["no failure", "failure"];
    for i in 0..2 {
        for j in 0..2 {
            let v = m.rates[i][j];
            let shade = (255.0 * (1.0 - v)).round().clamp(0.0, 255.0) as u8;
            let x = x0 + j as f64 * cell;
            let y = y0 + i as f64 * cell;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="black"/>"#
            );
            let text = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{text}">{v:.4}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 5.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            y0 + i as f64 * cell + cell / 2.0 + 5.0,
            labels[i]
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + i as f64 * cell + cell / 2.0,
            y0 + 2.0 * cell + 20.0,
            labels[i]
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#,
        x0 + cell,
        y0 + 2.0 * cell + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">true</text>"#,
        y0 + cell,
        y0 + cell
    );
    s.push_str("</svg>\n");
    s
}

/// Horizontal bar chart of mean weights in rank order, with +/- std whiskers.
pub fn weights_svg(report: &WeightReport, title: &str) -> String {
    let bar_h = 18.0;
    let (left, top, plot_w) = (120.0, 40.0, 480.0);
    let height = top + bar_h * report.rows.len() as f64 + 30.0;
    let extent = report
        .rows
        .iter()
        .map(|r| r.mean.abs() + r.std)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let scale = plot_w / 2.0 / extent;
    let zero = left + plot_w / 2.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + plot_w + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + plot_w / 2.0,
        escape(title)
    );
    for (i, r) in report.rows.iter().enumerate() {
        let y = top + i as f64 * bar_h;
        let w = r.mean.abs() * scale;
        let x = if r.mean >= 0.0 { zero } else { zero - w };
        let fill = if r.mean >= 0.0 { "#c0504d" } else { "#4f81bd" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"/>"#,
            y + 2.0,
            bar_h - 4.0
        );
        let end = zero + r.mean * scale;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
            end - r.std * scale,
            end + r.std * scale,
            y + bar_h / 2.0,
            y + bar_h / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + bar_h / 2.0 + 4.0,
            escape(&r.feature)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{zero}" x2="{zero}" y1="{top}" y2="{}" stroke="gray"/>"#,
        top + bar_h * report.rows.len() as f64
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::WeightRow;

    #[test]
    fn svgs_are_well_formed_enough() {
        let m = RateMatrix {
            rates: [[0.98, 0.02], [0.03, 0.97]],
        };
        let svg = confusion_svg(&m, "a <b>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("a &lt;b&gt;"));

        let report = WeightReport {
            rows: vec![
                WeightRow {
                    feature: "error_1".into(),
                    mean: 5.0,
                    std: 0.5,
                    abs_rank: 1,
                },
                WeightRow {
                    feature: "constant".into(),
                    mean: -4.0,
                    std: 0.1,
                    abs_rank: 2,
                },
            ],
        };
        let svg = weights_svg(&report, "w");
        assert_eq!(svg.matches("<rect").count(), 2);
    }
}
