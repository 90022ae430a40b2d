use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    /// Counts paired decisions; `true` means artifact.
    pub fn from_decisions(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(CoreError::InvalidArgument(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            cm.add(p, a);
        }
        Ok(cm)
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

/// se = TP / (TP + FN), sp = TN / (TN + FP).
pub fn sensitivity_specificity(cm: &ConfusionMatrix) -> Result<(f64, f64)> {
    if cm.positives() == 0 {
        return Err(CoreError::Undefined("no positive units, sensitivity undefined".into()));
    }
    if cm.negatives() == 0 {
        return Err(CoreError::Undefined("no negative units, specificity undefined".into()));
    }
    Ok((
        cm.tp as f64 / cm.positives() as f64,
        cm.tn as f64 / cm.negatives() as f64,
    ))
}

pub fn geometric_mean(se: f64, sp: f64) -> f64 {
    (se * sp).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_operating_point() {
        let cm = ConfusionMatrix { tp: 81, fp: 14, tn: 86, fn_: 19 };
        let (se, sp) = sensitivity_specificity(&cm).unwrap();
        assert_eq!(se, 0.81);
        assert_eq!(sp, 0.86);
    }

    #[test]
    fn empty_class_is_an_error() {
        let cm = ConfusionMatrix { tp: 0, fp: 3, tn: 4, fn_: 0 };
        assert!(sensitivity_specificity(&cm).is_err());
        let cm = ConfusionMatrix { tp: 2, fp: 0, tn: 0, fn_: 1 };
        assert!(sensitivity_specificity(&cm).is_err());
    }

    #[test]
    fn serializes_fn_field() {
        let cm = ConfusionMatrix { tp: 1, fp: 2, tn: 3, fn_: 4 };
        let s = serde_json::to_string(&cm).unwrap();
        assert_eq!(s, r#"{"tp":1,"fp":2,"tn":3,"fn":4}"#);
    }
}
