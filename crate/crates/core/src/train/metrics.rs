use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Artifact = positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// Thresholds `probs` at `threshold` (inclusive) against 0/1 targets.
    pub fn from_probs(probs: &[f64], targets: &[f64], threshold: f64) -> Result<Self> {
        if probs.len() != targets.len() {
            return Err(Error::Shape {
                op: "confusion",
                lhs: vec![probs.len()],
                rhs: vec![targets.len()],
            });
        }
        let mut c = Confusion::default();
        for (&p, &t) in probs.iter().zip(targets) {
            match (p >= threshold, t == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Accuracy, precision, recall and F1. A zero denominator yields 0 and
/// sets the matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn metrics(c: &Confusion) -> Result<Metrics> {
    let n = c.total();
    if n == 0 {
        return Err(Error::InsufficientData("metrics need at least one counted prediction".into()));
    }
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let acc = (c.tp + c.tn) as f64 / n as f64;
    let (pre, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (rec, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f1_undefined) = if pre + rec > 0.0 {
        (2.0 * pre * rec / (pre + rec), false)
    } else {
        (0.0, true)
    };
    Ok(Metrics {
        acc,
        pre,
        rec,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

/// Mean absolute change of `losses` between consecutive epochs, counting
/// the changes into epochs 5 and later (1-based). `None` with fewer than
/// five epochs.
pub fn smoothness(losses: &[f64]) -> Option<f64> {
    if losses.len() < 5 {
        return None;
    }
    let diffs: Vec<f64> = losses[3..].windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Some(diffs.iter().sum::<f64>() / diffs.len() as f64)
}
