//! Pixel-wise binary segmentation scores.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with prediction and ground truth exchanged.
    pub fn transposed(&self) -> Self {
        Self::new(self.tp, self.fn_, self.fp, self.tn)
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_, self.tn + rhs.tn)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Tallies every pixel once.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    confusion_in_region(pred, gt, None)
}

/// Like [`confusion`], restricted to the pixels set in `region`.
pub fn confusion_in_region(pred: &BinaryMask, gt: &BinaryMask, region: Option<&BinaryMask>) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.dims(), gt.dims())));
    }
    if let Some(r) = region {
        if r.dims() != gt.dims() {
            return Err(Error::Shape(format!("region {:?} vs ground truth {:?}", r.dims(), gt.dims())));
        }
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &g)) in pred.values().iter().zip(gt.values()).enumerate() {
        if region.is_some_and(|r| !r.values()[i]) {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// A score plus whether its denominator was zero (value then reported as 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub undefined: bool,
}

impl Score {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Self {
                value: 0.0,
                undefined: true,
            }
        } else {
            Self {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub accuracy: Score,
    pub precision: Score,
    pub recall: Score,
    pub fscore: Score,
    pub iou: Score,
}

/// Accuracy, precision, recall, F1 and IoU.
pub fn segmentation_metrics(counts: &ConfusionCounts) -> Result<SegmentationMetrics> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyRegion);
    }
    let ConfusionCounts { tp, fp, fn_, tn } = *counts;
    let precision = Score::ratio(tp, tp + fp);
    let recall = Score::ratio(tp, tp + fn_);
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn) and stays exact in integers.
    let fscore = Score::ratio(2 * tp, 2 * tp + fp + fn_);
    Ok(SegmentationMetrics {
        accuracy: Score::ratio(tp + tn, total),
        precision,
        recall,
        fscore,
        iou: Score::ratio(tp, tp + fp + fn_),
    })
}

impl SegmentationMetrics {
    pub fn values(&self) -> [f64; 5] {
        [
            self.accuracy.value,
            self.precision.value,
            self.recall.value,
            self.fscore.value,
            self.iou.value,
        ]
    }
}

/// Plain-text table in the column order accuracy, precision, recall,
/// F-score, IoU, values in percent.
pub fn format_table(rows: &[(String, SegmentationMetrics)]) -> String {
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Name".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
        "Name", "Accuracy", "Precision", "Recall", "F-Score", "IoU"
    );
    for (name, m) in rows {
        let cells: Vec<String> = [m.accuracy, m.precision, m.recall, m.fscore, m.iou]
            .iter()
            .map(|s| {
                if s.undefined {
                    format!("{:>9}", "n/a")
                } else {
                    format!("{:>9.2}", 100.0 * s.value)
                }
            })
            .collect();
        let _ = writeln!(out, "{:<name_width$}  {}", name, cells.join("  "));
    }
    out
}
