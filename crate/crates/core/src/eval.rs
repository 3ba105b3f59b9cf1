//! Image-level anomaly score and rank-based AUROC.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::MaskBuffer;
use crate::ndtensor::{mean_all, Tensor};
use crate::scalar::Real;

/// A scored example; `label` is true for anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample<T> {
    pub score: T,
    pub label: bool,
}

impl<T> ScoredSample<T> {
    pub fn new(score: T, label: bool) -> Self {
        ScoredSample { score, label }
    }
}

/// Mean of the predicted anomaly map.
pub fn image_score<T: Real>(pred: &Tensor<T>) -> Result<T> {
    mean_all(pred)
}

/// Area under the ROC curve, i.e. the Mann-Whitney statistic
/// `(wins + ties / 2) / (P * N)` over positive-negative pairs.
///
/// Computed from midranks after one sort. Rank sums are kept doubled in
/// integers so the only rounding is the final division.
pub fn auroc<T: Real>(samples: &[ScoredSample<T>]) -> Result<f64> {
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    if let Some(bad) = samples.iter().position(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument(format!("score at index {bad} is not finite")));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_unstable_by(|&a, &b| samples[a].score.partial_cmp(&samples[b].score).unwrap_or(Ordering::Equal));

    // Twice the sum of 1-based midranks over the positives.
    let mut rank2_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let score = samples[order[start]].score;
        let mut end = start;
        while end + 1 < order.len() && samples[order[end + 1]].score == score {
            end += 1;
        }
        let pos_in_group = order[start..=end].iter().filter(|&&i| samples[i].label).count() as u128;
        rank2_sum += pos_in_group * (start as u128 + end as u128 + 2);
        start = end + 1;
    }
    let p = positives as u128;
    let twice_u = rank2_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * negatives as u128) as f64)
}

/// AUROC over every pixel of a set of predicted maps against their masks.
/// Each prediction is `[1,H,W]` or `[H,W]`.
pub fn pixel_auroc<T: Real>(preds: &[Tensor<T>], gts: &[MaskBuffer]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} masks", preds.len(), gts.len())));
    }
    let mut samples = Vec::new();
    for (pred, gt) in preds.iter().zip(gts) {
        let (w, h) = (gt.width(), gt.height());
        let ok = matches!(pred.shape(), [1, ph, pw] | [ph, pw] if *ph == h && *pw == w);
        if !ok {
            return Err(Error::ShapeMismatch { expected: vec![1, h, w], found: pred.shape().to_vec() });
        }
        samples.extend(pred.data().iter().zip(gt.data()).map(|(&s, &m)| ScoredSample::new(s, m != 0)));
    }
    auroc(&samples)
}

/// One row of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub path: String,
    pub score: f64,
    pub label: u8,
}

/// Reads `path,score,label` rows. A leading header row is skipped when its
/// score column is not numeric. Labels must be 0 or 1.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotFound(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let parse_err = |line: u64, reason: String| Error::Parse { path: path.to_path_buf(), line, reason };
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let score = match rec[1].parse::<f64>() {
            Ok(s) => s,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(parse_err(line, format!("score {:?}: {e}", &rec[1]))),
        };
        if !score.is_finite() {
            return Err(parse_err(line, format!("score {score} is not finite")));
        }
        let label = match &rec[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("label {other:?} must be 0 or 1"))),
        };
        out.push(ScoreRecord { path: rec[0].to_string(), score, label });
    }
    Ok(out)
}

/// Image-level metrics over a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub source: PathBuf,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub image_auroc: f64,
}

impl MetricReport {
    pub fn from_records(source: &Path, records: &[ScoreRecord]) -> Result<Self> {
        let samples: Vec<ScoredSample<f64>> = records.iter().map(|r| ScoredSample::new(r.score, r.label == 1)).collect();
        let positives = samples.iter().filter(|s| s.label).count();
        Ok(MetricReport {
            source: source.to_path_buf(),
            samples: samples.len(),
            positives,
            negatives: samples.len() - positives,
            image_auroc: auroc(&samples)?,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serialises");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}
