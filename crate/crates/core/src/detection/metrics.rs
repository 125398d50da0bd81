use crate::forge::RepoRef;

use super::{ClassificationInput, Detector, DetectorError, Verdict};

/// Counts with `TD` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: Verdict, gold: Verdict) {
        match (predicted, gold) {
            (Verdict::Td, Verdict::Td) => self.tp += 1,
            (Verdict::Td, Verdict::NonTd) => self.fp += 1,
            (Verdict::NonTd, Verdict::Td) => self.fn_ += 1,
            (Verdict::NonTd, Verdict::NonTd) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision, recall and F1; any 0/0 is taken as 0.
    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            precision,
            recall,
            f1,
            confusion: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
}

/// Runs `detector` over a labelled corpus and scores the `TD` class.
pub fn evaluate_detector<S: AsRef<str>>(
    detector: &dyn Detector,
    corpus: &[(S, Verdict)],
) -> Result<Metrics, DetectorError> {
    let repo = RepoRef::new("evaluation", "corpus").expect("static repo ref");
    let mut cm = ConfusionMatrix::default();
    for (i, (text, gold)) in corpus.iter().enumerate() {
        let input = ClassificationInput {
            text: text.as_ref().to_string(),
            repo: repo.clone(),
            issue_number: i as u64 + 1,
        };
        cm.record(detector.classify(&input)?.label, *gold);
    }
    Ok(cm.metrics())
}
