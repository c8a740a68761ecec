use crate::fingerprint::trace::InterruptClass;
use serde::{Deserialize, Serialize};

/// Rows are true classes, columns are predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: InterruptClass,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn class(&self, c: InterruptClass) -> &ClassMetrics {
        &self.per_class[c.index()]
    }
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: InterruptClass, pred: InterruptClass) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (InterruptClass, InterruptClass)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Precision and recall are 0 when their denominator is 0; F1 is 0 when both are.
    pub fn report(&self) -> EvalReport {
        let per_class = InterruptClass::ALL
            .iter()
            .map(|&c| {
                let k = c.index();
                let tp = self.counts[k][k];
                let support: u64 = self.counts[k].iter().sum();
                let predicted: u64 = (0..3).map(|r| self.counts[r][k]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    class: c,
                    support,
                    predicted,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        let correct: u64 = (0..3).map(|k| self.counts[k][k]).sum();
        EvalReport {
            confusion: self.clone(),
            per_class,
            accuracy: ratio(correct, self.total()),
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
