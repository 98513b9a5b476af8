//! ROC, EER and TPR at fixed FPR for liveness scores.
//!
//! Scores are oriented so that higher means more genuine; genuine is the
//! positive class and a sample is accepted at threshold `t` iff `score ≥ t`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operating points reported alongside the EER.
pub const FPR_TARGETS: [f64; 2] = [1e-2, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub sample_id: String,
    pub genuine: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Self {
        Self { entries }
    }

    /// Builds a set from parallel label/score slices with index ids.
    pub fn from_scores(genuine: &[bool], scores: &[f64]) -> Self {
        Self::new(
            genuine
                .iter()
                .zip(scores)
                .enumerate()
                .map(|(i, (&g, &s))| ScoreEntry {
                    sample_id: i.to_string(),
                    genuine: g,
                    score: s,
                })
                .collect(),
        )
    }

    pub fn counts(&self) -> (usize, usize) {
        let g = self.entries.iter().filter(|e| e.genuine).count();
        (g, self.entries.len() - g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Threshold producing each point; the first is `+∞`.
    pub thresholds: Vec<f64>,
}

/// Exact empirical ROC from a descending sweep over distinct scores.
pub fn roc(scores: &ScoreSet) -> Result<RocCurve> {
    let (n_pos, n_neg) = scores.counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data(format!(
            "ROC needs both classes, got {n_pos} genuine and {n_neg} attack scores"
        )));
    }
    if let Some(e) = scores.entries.iter().find(|e| !e.score.is_finite()) {
        return Err(Error::Data(format!("non-finite score for {}", e.sample_id)));
    }
    let mut sorted: Vec<(f64, bool)> = scores
        .entries
        .iter()
        .map(|e| (e.score, e.genuine))
        .collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        thresholds.push(t);
    }
    Ok(RocCurve { points, thresholds })
}

/// Rate where FPR equals FNR, interpolated linearly on the bracketing segment.
pub fn eer(curve: &RocCurve) -> f64 {
    let gap = |(f, t): (f64, f64)| f - (1.0 - t);
    let pts = &curve.points;
    for i in 0..pts.len() {
        let g = gap(pts[i]);
        if g >= 0.0 {
            if g == 0.0 || i == 0 {
                return pts[i].0;
            }
            let g0 = gap(pts[i - 1]);
            let a = -g0 / (g - g0);
            return pts[i - 1].0 + a * (pts[i].0 - pts[i - 1].0);
        }
    }
    1.0
}

/// TPR at the largest achieved FPR not exceeding `target`, interpolated
/// towards the next point when the curve straddles the target.
pub fn tpr_at_fpr(curve: &RocCurve, target: f64) -> f64 {
    let pts = &curve.points;
    let i = pts.iter().rposition(|p| p.0 <= target).unwrap_or(0);
    let (f0, t0) = pts[i];
    if f0 == target || i + 1 == pts.len() {
        return t0;
    }
    let (f1, t1) = pts[i + 1];
    t0 + (target - f0) / (f1 - f0) * (t1 - t0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub eer: f64,
    pub tpr_at_1e2: f64,
    pub tpr_at_1e3: f64,
}

pub fn metrics(scores: &ScoreSet) -> Result<(Metrics, RocCurve)> {
    let curve = roc(scores)?;
    let m = Metrics {
        eer: eer(&curve),
        tpr_at_1e2: tpr_at_fpr(&curve, FPR_TARGETS[0]),
        tpr_at_1e3: tpr_at_fpr(&curve, FPR_TARGETS[1]),
    };
    Ok((m, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub channel: String,
    pub method: String,
    pub metrics: Metrics,
}

pub const REPORT_HEADER: &str = "channel,method,eer,tpr_at_1e2,tpr_at_1e3";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in rows {
        let m = &r.metrics;
        writeln!(
            s,
            "{},{},{},{},{}",
            r.channel, r.method, m.eer, m.tpr_at_1e2, m.tpr_at_1e3
        )
        .unwrap();
    }
    s
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("fpr,tpr,threshold\n");
    for (&(f, t), th) in curve.points.iter().zip(&curve.thresholds) {
        writeln!(s, "{f},{t},{th}").unwrap();
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
