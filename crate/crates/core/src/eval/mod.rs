//! Metrics: x-pixel accuracy, error at 95% recall, and homography
//! back-projection error.

pub mod reference;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 2.0, 3.0];
pub const DEFAULT_INLIER_THRESHOLD: f64 = 5.0;
pub const TARGET_RECALL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pred: (f64, f64),
    pub gt: (f64, f64),
}

impl PredictionRecord {
    pub fn error(&self) -> f64 {
        (self.pred.0 - self.gt.0).hypot(self.pred.1 - self.gt.1)
    }
}

/// Fraction of records with `‖pred − gt‖ ≤ t`, for each threshold `t`.
pub fn pixel_accuracy(records: &[PredictionRecord], thresholds: &[f64]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::rejected("no prediction records"));
    }
    if records.iter().any(|r| !r.error().is_finite()) {
        return Err(Error::rejected("prediction records must be finite"));
    }
    Ok(thresholds
        .iter()
        .map(|&t| records.iter().filter(|r| r.error() <= t).count() as f64 / records.len() as f64)
        .collect())
}

/// False-positive rate (percent) at the strictest score threshold that
/// still accepts at least 95% of the matches. A pair is accepted when its
/// score is at least the threshold.
pub fn error_at_95_recall(scores: &[f64], labels: &[bool]) -> Result<f64> {
    error_at_recall(scores, labels, TARGET_RECALL)
}

pub fn error_at_recall(scores: &[f64], labels: &[bool], recall: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::rejected(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::rejected("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::rejected(format!(
            "both classes required ({pos} matches, {neg} non-matches)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Admit every pair tied at this score together.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if tp as f64 >= recall * pos as f64 {
            return Ok(100.0 * fp as f64 / neg as f64);
        }
    }
    unreachable!("the lowest threshold admits every match")
}

/// Invertible 3×3 projective transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let h = Homography { m };
        let det = h.det();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(Error::rejected(format!("homography is singular (det {det:e})")));
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::rejected(format!("homography needs 9 values, got {}", v.len())));
        }
        Homography::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Adjugate over the determinant.
    pub fn inverse(&self) -> Homography {
        let m = &self.m;
        let d = self.det();
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        Homography {
            m: [
                [c(1, 2, 1, 2) / d, -c(0, 2, 1, 2) / d, c(0, 1, 1, 2) / d],
                [-c(1, 2, 0, 2) / d, c(0, 2, 0, 2) / d, -c(0, 1, 0, 2) / d],
                [c(1, 2, 0, 1) / d, -c(0, 2, 0, 1) / d, c(0, 1, 0, 1) / d],
            ],
        }
    }
}

pub fn apply_homography(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    let m = &h.m;
    let x = m[0][0] * p.0 + m[0][1] * p.1 + m[0][2];
    let y = m[1][0] * p.0 + m[1][1] * p.1 + m[1][2];
    let w = m[2][0] * p.0 + m[2][1] * p.1 + m[2][2];
    if w.abs() < 1e-12 {
        return Err(Error::rejected(format!(
            "point ({}, {}) lies on the vanishing line",
            p.0, p.1
        )));
    }
    Ok((x / w, y / w))
}

/// A point seen in the previous and current frame, on planar patch `patch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub prev: (f64, f64),
    pub curr: (f64, f64),
    pub patch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackprojectionReport {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub inlier_percent: f64,
    pub threshold: f64,
    /// Pairs left out: unknown or singular patch, or vanishing point.
    pub skipped: usize,
    pub rejected_patches: Vec<String>,
}

/// Maps each current point back with the inverse of its patch homography
/// (which maps previous to current) and measures the distance to the
/// previous point. Inliers have error strictly below `threshold`.
pub fn backprojection_report(
    pairs: &[Correspondence],
    homographies: &BTreeMap<String, [[f64; 3]; 3]>,
    threshold: f64,
) -> Result<BackprojectionReport> {
    if !(threshold > 0.0) {
        return Err(Error::rejected(format!("inlier threshold {threshold} must be positive")));
    }
    let mut rejected_patches = Vec::new();
    let mut inverses = BTreeMap::new();
    for (id, m) in homographies {
        match Homography::new(*m) {
            Ok(h) => {
                inverses.insert(id.as_str(), h.inverse());
            }
            Err(e) => {
                log::warn!("patch {id}: {e}");
                rejected_patches.push(id.clone());
            }
        }
    }
    let mut errors = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for c in pairs {
        let Some(inv) = inverses.get(c.patch.as_str()) else {
            skipped += 1;
            continue;
        };
        match apply_homography(inv, c.curr) {
            Ok(b) => errors.push((b.0 - c.prev.0).hypot(b.1 - c.prev.1)),
            Err(_) => skipped += 1,
        }
    }
    if errors.is_empty() {
        return Err(Error::rejected("no correspondence could be back-projected"));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let inliers = errors.iter().filter(|&&e| e < threshold).count();
    Ok(BackprojectionReport {
        count: errors.len(),
        mean,
        std: var.sqrt(),
        inlier_percent: 100.0 * inliers as f64 / n,
        threshold,
        skipped,
        rejected_patches,
    })
}

fn parse_reals(line: &str, what: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::rejected(format!("{what} line {lineno}: {line:?}")))
}

/// `x_prev y_prev x_curr y_curr patch_id` per line; `#` starts a comment.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::rejected(format!(
                "correspondence line {} has {} fields, expected 5",
                i + 1,
                fields.len()
            )));
        }
        let v = parse_reals(&fields[..4].join(" "), "correspondence", i + 1)?;
        out.push(Correspondence {
            prev: (v[0], v[1]),
            curr: (v[2], v[3]),
            patch: fields[4].to_string(),
        });
    }
    Ok(out)
}

/// Nine reals, row-major, any whitespace layout.
pub fn parse_homography(text: &str) -> Result<[[f64; 3]; 3]> {
    let v = parse_reals(&text.replace('\n', " "), "homography", 1)?;
    if v.len() != 9 {
        return Err(Error::rejected(format!("homography needs 9 values, got {}", v.len())));
    }
    Ok([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
}

/// Every regular file in `dir` is one homography; its stem is the patch id.
pub fn load_homographies(dir: &Path) -> Result<BTreeMap<String, [[f64; 3]; 3]>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.insert(stem.to_string(), parse_homography(&text)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub count: usize,
    /// Percent, one per threshold.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub thresholds: Vec<f64>,
    pub rows: Vec<AccuracyRow>,
    pub reference: Vec<reference::AccuracyReference>,
}

impl AccuracyReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("method");
        for t in &self.thresholds {
            let _ = write!(out, " | {t}-px");
        }
        out.push_str(" | points\n");
        for r in &self.rows {
            out.push_str(&r.method);
            for a in &r.accuracy {
                let _ = write!(out, " | {a:.2}%");
            }
            let _ = writeln!(out, " | {}", r.count);
        }
        for r in &self.reference {
            let _ = write!(out, "{} [reference, not reproduced]", r.method);
            for a in r.percent {
                let _ = write!(out, " | {a:.2}%");
            }
            out.push_str(" | at 1/2/3 px\n");
        }
        out
    }
}

impl BackprojectionReport {
    pub fn to_text(&self, method: &str) -> String {
        let mut out = String::from("method | average error | inliers\n");
        let _ = writeln!(
            out,
            "{method} | {:.2} ± {:.2} | {:.1}% (threshold {} px, {} pairs, {} skipped)",
            self.mean, self.std, self.inlier_percent, self.threshold, self.count, self.skipped
        );
        for r in reference::BACKPROJECTION {
            let _ = writeln!(
                out,
                "{} [reference, not reproduced] | {:.2} ± {:.2} | {:.0}%",
                r.method, r.mean, r.std, r.inlier_percent
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingReport {
    pub train_set: String,
    pub test_set: String,
    pub pairs: usize,
    pub error_at_95_recall: f64,
    pub reference: Vec<reference::MatchingReference>,
}

impl MatchingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("method | train Notre Dame, test Liberty | train Liberty, test Notre Dame\n");
        let _ = writeln!(
            out,
            "measured (train {}, test {}, {} pairs) | {:.2}%",
            self.train_set, self.test_set, self.pairs, self.error_at_95_recall
        );
        let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
        for r in &self.reference {
            let _ = writeln!(
                out,
                "{} [reference, not reproduced] | {} | {}",
                r.method,
                cell(r.train_notredame_test_liberty),
                cell(r.train_liberty_test_notredame)
            );
        }
        out
    }
}
