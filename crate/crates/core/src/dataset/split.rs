use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{Epoch, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Self {
            train: 0.58,
            val: 0.17,
            test: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub split: Split,
    pub epochs: Vec<Epoch>,
    pub subject_ids: Vec<String>,
}

impl LabeledSet {
    pub fn new(split: Split) -> Self {
        Self {
            split,
            epochs: Vec::new(),
            subject_ids: Vec::new(),
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.epochs.iter().filter(|e| e.label == label).count()
    }

    pub fn artifact_fraction(&self) -> f64 {
        let labeled = self.count(Label::Artifact) + self.count(Label::Clean);
        if labeled == 0 {
            0.0
        } else {
            self.count(Label::Artifact) as f64 / labeled as f64
        }
    }

    /// Distinct subjects in first-seen order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.subject_ids {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out
    }
}

/// Subject counts per split by largest remainder, each split non-empty.
pub fn split_counts(n: usize, f: Fractions) -> Result<[usize; 3]> {
    if n < 3 {
        return invalid(format!("need at least 3 subjects, got {n}"));
    }
    let fr = [f.train, f.val, f.test];
    if fr.iter().any(|v| !(*v >= 0.0)) || ((fr.iter().sum::<f64>()) - 1.0).abs() > 1e-6 {
        return invalid(format!("fractions {fr:?} must be non-negative and sum to 1"));
    }
    let exact: Vec<f64> = fr.iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    Ok([counts[0], counts[1], counts[2]])
}

/// Assigns whole subjects to train, validation and test in input order.
pub fn split_by_subject(sets: Vec<(String, Vec<Epoch>)>, fractions: Fractions) -> Result<[LabeledSet; 3]> {
    let mut seen = std::collections::HashSet::new();
    for (s, _) in &sets {
        if !seen.insert(s.clone()) {
            return invalid(format!("subject `{s}` listed twice"));
        }
    }
    let [n_train, n_val, _] = split_counts(sets.len(), fractions)?;
    let mut out = [
        LabeledSet::new(Split::Train),
        LabeledSet::new(Split::Validation),
        LabeledSet::new(Split::Test),
    ];
    for (i, (subject, epochs)) in sets.into_iter().enumerate() {
        let k = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        out[k].subject_ids.extend(std::iter::repeat_n(subject, epochs.len()));
        out[k].epochs.extend(epochs);
    }
    Ok(out)
}
