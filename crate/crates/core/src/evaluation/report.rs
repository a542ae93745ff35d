use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{compute_auc, Confusion, ScoredSet, SweepResult};
use crate::data::Label;
use crate::{Error, Result};

pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "metrics.json";
pub const PLOT_FILE: &str = "auc_vs_k.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_id: String,
    pub patient_id: u32,
    pub label: Label,
    pub score: f64,
}

pub fn scored_set(scores: &[FrameScore]) -> ScoredSet {
    ScoredSet::new(scores.iter().map(|s| (s.score, s.label)).collect())
}

/// Test-set summary. Confusion counts use Normal as the positive class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub auc: Option<f64>,
    pub n_frames: usize,
    pub n_normal: usize,
    pub n_abnormal: usize,
    pub threshold: Option<f64>,
    pub confusion: Option<Confusion>,
    pub balanced_accuracy: Option<f64>,
    pub k_abnormal: Option<usize>,
    pub seed: Option<u64>,
    pub sweep: Option<SweepResult>,
}

impl MetricsSummary {
    pub fn from_scores(scores: &[FrameScore], threshold: Option<f64>) -> Result<Self> {
        let set = scored_set(scores);
        let confusion = threshold.map(|t| super::confusion_at_threshold(&set, t));
        Ok(Self {
            auc: Some(compute_auc(&set)?),
            n_frames: set.len(),
            n_normal: set.count(Label::Normal),
            n_abnormal: set.count(Label::Abnormal),
            threshold,
            balanced_accuracy: confusion.map(|c| c.balanced_accuracy()),
            confusion,
            ..Self::default()
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub scores: Option<PathBuf>,
    pub summary: PathBuf,
    pub plot: Option<PathBuf>,
}

impl ReportFiles {
    pub fn all(&self) -> Vec<PathBuf> {
        self.scores.iter().chain(std::iter::once(&self.summary)).chain(self.plot.iter()).cloned().collect()
    }
}

pub fn write_scores_csv(scores: &[FrameScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in scores {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<FrameScore>> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Write per-frame scores (when any), the JSON summary, and the AUC-vs-k
/// plot (when the sweep has entries) into `dir`.
pub fn emit_report(
    scores: &[FrameScore],
    summary: &MetricsSummary,
    sweep: Option<&SweepResult>,
    dir: &Path,
) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = ReportFiles { summary: dir.join(SUMMARY_FILE), ..Default::default() };
    if !scores.is_empty() {
        let p = dir.join(SCORES_FILE);
        write_scores_csv(scores, &p)?;
        files.scores = Some(p);
    }
    let mut summary = summary.clone();
    if let Some(s) = sweep {
        summary.sweep = Some(s.clone());
    }
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(&files.summary, json).map_err(|e| Error::io(&files.summary, e))?;
    if let Some(s) = sweep.filter(|s| !s.is_empty()) {
        let p = dir.join(PLOT_FILE);
        fs::write(&p, sweep_svg(s)).map_err(|e| Error::io(&p, e))?;
        files.plot = Some(p);
    }
    Ok(files)
}

/// AUC against the number of abnormal training images: mean line with a
/// shaded band of one standard deviation.
pub fn sweep_svg(sweep: &SweepResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 60.0;
    let ks: Vec<f64> = sweep.entries.iter().map(|e| e.k as f64).collect();
    let (kmin, kmax) = ks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(k), b.max(k)));
    let (kmin, kmax) = if kmax > kmin { (kmin, kmax) } else { (kmin - 1.0, kmax + 1.0) };
    let lo = sweep.entries.iter().map(|e| e.mean_auc - e.std_auc).fold(1.0f64, f64::min);
    let hi = sweep.entries.iter().map(|e| e.mean_auc + e.std_auc).fold(0.0f64, f64::max);
    let ymin = ((lo - 0.02) * 20.0).floor().max(0.0) / 20.0;
    let ymax = ((hi + 0.02) * 20.0).ceil().min(20.0) / 20.0;
    let ymax = if ymax > ymin { ymax } else { ymin + 0.05 };
    let x = |k: f64| LEFT + (k - kmin) / (kmax - kmin) * (W - LEFT - RIGHT);
    let y = |a: f64| TOP + (ymax - a) / (ymax - ymin) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for e in &sweep.entries {
        let px = x(e.k as f64);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 20.0, e.k);
    }
    let steps = ((ymax - ymin) / 0.05).round() as usize;
    for i in 0..=steps {
        let a = ymin + i as f64 * 0.05;
        let py = y(a);
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{a:.2}</text>"#, x0 - 8.0, py + 4.0);
    }
    let upper: Vec<String> = sweep.entries.iter().map(|e| format!("{:.2},{:.2}", x(e.k as f64), y(e.mean_auc + e.std_auc))).collect();
    let lower: Vec<String> =
        sweep.entries.iter().rev().map(|e| format!("{:.2},{:.2}", x(e.k as f64), y(e.mean_auc - e.std_auc))).collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{} {}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
        upper.join(" "),
        lower.join(" ")
    );
    let line: Vec<String> = sweep.entries.iter().map(|e| format!("{:.2},{:.2}", x(e.k as f64), y(e.mean_auc))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, line.join(" "));
    for e in &sweep.entries {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, x(e.k as f64), y(e.mean_auc));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Number of abnormal training images</text>"#,
        (x0 + x1) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">AUC</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s.push_str("</svg>\n");
    s
}
