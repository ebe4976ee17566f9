use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::scenario_sim::ContextClass;

const K: usize = 5;

/// `counts[predicted][actual]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Each predicted-class row scaled to sum to one (empty rows stay zero).
    pub fn row_normalized(&self) -> [[f64; K]; K] {
        let mut out = [[0.0; K]; K];
        for (r, row) in self.counts.iter().enumerate() {
            let s = self.row_sum(r);
            if s > 0 {
                for (o, &c) in out[r].iter_mut().zip(row) {
                    *o = c as f64 / s as f64;
                }
            }
        }
        out
    }
}

pub fn confusion(
    preds: &[ContextClass],
    labels: &[ContextClass],
) -> Result<ConfusionMatrix, DatasetError> {
    if preds.len() != labels.len() {
        return Err(DatasetError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, a) in preds.iter().zip(labels) {
        cm.counts[p.index()][a.index()] += 1;
    }
    Ok(cm)
}

/// Accuracy plus macro-averaged recall, precision and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

/// Per-class recall is `tp / (actual count)` and precision
/// `tp / (predicted count)`; a class with an empty denominator contributes
/// zero to the macro average and a warning is logged.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let total = cm.total();
    let accuracy = if total > 0 {
        cm.trace() as f64 / total as f64
    } else {
        0.0
    };
    let mut recall = 0.0;
    let mut precision = 0.0;
    for c in 0..K {
        let tp = cm.counts[c][c] as f64;
        match cm.col_sum(c) {
            0 => log::warn!("class {} absent from labels; recall counted as 0", ContextClass::ALL[c]),
            n => recall += tp / n as f64,
        }
        match cm.row_sum(c) {
            0 => log::warn!("class {} never predicted; precision counted as 0", ContextClass::ALL[c]),
            n => precision += tp / n as f64,
        }
    }
    recall /= K as f64;
    precision /= K as f64;
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        accuracy,
        recall,
        precision,
        f_measure,
    }
}
