use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts at a threshold plus the derived ratios. A ratio whose
/// denominator is zero is reported as 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64, threshold: f64) -> Result<Self> {
        let n = tp + fp + tn + fn_;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut undefined = Vec::new();
        let precision = ratio(tp, tp + fp, "precision", &mut undefined);
        let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
        if precision + recall == 0.0 {
            undefined.push("f1".into());
        }
        Ok(EvalReport {
            threshold,
            tp,
            fp,
            tn,
            fn_,
            accuracy: (tp + tn) as f64 / n as f64,
            precision,
            recall,
            f1: f1_score(precision, recall),
            undefined,
        })
    }

    /// Tallies `(probability, label)` pairs at `threshold`.
    pub fn from_scores(scores: &[(f64, u8)], threshold: f64) -> Result<Self> {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for &(p, label) in scores {
            match (super::decide(p, threshold), label) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_, threshold)
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_reproduces_published_cell() {
        assert!((f1_score(0.9750, 0.9832) - 0.9791).abs() < 1e-4);
    }

    #[test]
    fn perfect_classifier() {
        let r = EvalReport::from_counts(5, 0, 5, 0, 0.5).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn all_negative_predictions() {
        let scores: Vec<(f64, u8)> = (0..10).map(|i| (0.1, (i % 2) as u8)).collect();
        let r = EvalReport::from_scores(&scores, 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (0, 0, 5, 5));
        assert_eq!(r.accuracy, 0.5);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.undefined, vec!["precision".to_string(), "f1".to_string()]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(EvalReport::from_scores(&[], 0.5), Err(Error::EmptyDataset)));
    }

    #[test]
    fn serializes_fn_field() {
        let r = EvalReport::from_counts(1, 2, 3, 4, 0.5).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["fn"], 4);
        let back: EvalReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
