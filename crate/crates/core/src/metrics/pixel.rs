use serde::{Deserialize, Serialize};

use crate::datacube::BinaryMask;
use crate::error::bail;
use crate::error::Result;

/// Confusion counts over valid pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask, valid: &BinaryMask) -> Result<Counts> {
    if !pred.same_extent(truth) || !pred.same_extent(valid) {
        bail!(
            Shape,
            "prediction {}x{}, truth {}x{}, valid {}x{}",
            pred.height,
            pred.width,
            truth.height,
            truth.width,
            valid.height,
            valid.width
        );
    }
    let mut c = Counts::default();
    for ((&p, &t), &v) in pred.data.iter().zip(&truth.data).zip(&valid.data) {
        if !v {
            continue;
        }
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Precision, recall, F1 and IoU for one set of counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Zero-denominator cases score 0, except a tile with no truth and no
/// prediction, which scores 1 everywhere.
pub fn prf_iou(c: &Counts) -> Scores {
    if c.tp + c.fp + c.fn_ == 0 {
        return Scores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            iou: 1.0,
        };
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}

/// `Σ f1_c·n_c / Σ n_c`.
pub fn support_weighted(values: &[f64], supports: &[u64]) -> Result<f64> {
    if values.len() != supports.len() {
        bail!(
            Shape,
            "{} values for {} supports",
            values.len(),
            supports.len()
        );
    }
    let total: u64 = supports.iter().sum();
    if total == 0 {
        bail!(
            InvalidArgument,
            "support-weighted mean needs a positive total support"
        );
    }
    Ok(values
        .iter()
        .zip(supports)
        .map(|(&v, &n)| v * (n as f64 / total as f64))
        .sum())
}
