//! Confusion-matrix accounting and the precision/recall/F1 triple for the
//! positive (initial-compromise) class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction length {predicted} does not match truth length {actual}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("non-binary entry {value} at position {index}")]
    NonBinaryEntry { index: usize, value: u8 },
    #[error("cannot evaluate empty label vectors")]
    Empty,
}

/// Standard binary confusion counts with class 1 positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Precision, recall and F1. A metric whose denominator is zero is
/// `None` rather than a silent zero; F1 is `None` if either input is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricTriple {
    /// F1 treating an undefined value as 0, for ordering and stopping rules.
    pub fn f1_or_zero(&self) -> f64 {
        self.f1.unwrap_or(0.0)
    }

    /// Human-readable summary with integer-percent rounding.
    pub fn render(&self) -> String {
        format!(
            "precision {} recall {} f1 {}",
            render_percent(self.precision),
            render_percent(self.recall),
            render_percent(self.f1)
        )
    }
}

/// Count confusion entries; `y_true` and `y_pred` must be equal-length
/// 0/1 vectors.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { actual: y_true.len(), predicted: y_pred.len() });
    }
    let mut cm = ConfusionMatrix { true_pos: 0, false_pos: 0, false_neg: 0, true_neg: 0 };
    for (i, (&t, &p)) in y_true.iter().zip(y_pred.iter()).enumerate() {
        if t > 1 {
            return Err(MetricsError::NonBinaryEntry { index: i, value: t });
        }
        if p > 1 {
            return Err(MetricsError::NonBinaryEntry { index: i, value: p });
        }
        match (t, p) {
            (1, 1) => cm.true_pos += 1,
            (0, 1) => cm.false_pos += 1,
            (1, 0) => cm.false_neg += 1,
            (0, 0) => cm.true_neg += 1,
            _ => unreachable!(),
        }
    }
    Ok(cm)
}

/// precision = TP/(TP+FP), recall = TP/(TP+FN),
/// f1 = 2*precision*recall/(precision+recall).
pub fn metric_triple(cm: &ConfusionMatrix) -> MetricTriple {
    let precision = ratio(cm.true_pos, cm.true_pos + cm.false_pos);
    let recall = ratio(cm.true_pos, cm.true_pos + cm.false_neg);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(harmonic_f1(p, r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    MetricTriple { precision, recall, f1 }
}

/// Harmonic mean of precision and recall.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    2.0 * (precision * recall) / (precision + recall)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Integer-percent rendering for reports, rounding half up
/// (0.98477 -> "98%"). Machine-readable outputs keep full precision.
pub fn percent(value: f64) -> String {
    format!("{}%", (value * 100.0).round() as i64)
}

fn render_percent(value: Option<f64>) -> String {
    match value {
        Some(v) => percent(v),
        None => "undefined".to_string(),
    }
}
