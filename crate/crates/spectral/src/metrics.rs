//! Confusion-matrix accumulation and the four reported aggregates: overall
//! accuracy (sample-averaged), average accuracy (mean of per-class recalls),
//! macro F1 and mean IoU.
//!
//! Classes that are entirely absent (empty row and column) are excluded from
//! the class means: limited-data shares can drop minority classes from the
//! training set, and counting them as zero would conflate sampling with
//! model quality. A class with a zero denominator in F1 or recall
//! contributes 0.

use crate::error::{Result, SpectralError};

/// C×C counts; `counts[i][j]` = samples of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    classes: usize,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![0; classes * classes], classes }
    }

    /// Exact counts from aligned prediction/label sequences.
    pub fn from_pairs(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(SpectralError::Shape(format!(
                "{} predictions vs {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&p, &l) in preds.iter().zip(labels) {
            cm.record(l, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        if true_class >= self.classes || predicted >= self.classes {
            return Err(SpectralError::Shape(format!(
                "class ({true_class}, {predicted}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[true_class * self.classes + predicted] += 1;
        Ok(())
    }

    /// Element-wise addition; matrices shard and merge.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class * self.classes..(class + 1) * self.classes].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.count(i, class)).sum()
    }

    fn diag(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    /// A class is present when its row or column holds any count.
    pub fn present(&self, class: usize) -> bool {
        self.row_sum(class) > 0 || self.col_sum(class) > 0
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(SpectralError::EmptyInput("metrics over an empty confusion matrix".into()));
        }
        Ok(())
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        self.check_nonempty()?;
        let trace: u64 = (0..self.classes).map(|i| self.diag(i)).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    /// Recall per class; `None` for absent classes.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| {
                if !self.present(i) {
                    None
                } else if self.row_sum(i) == 0 {
                    Some(0.0)
                } else {
                    Some(self.diag(i) as f64 / self.row_sum(i) as f64)
                }
            })
            .collect()
    }

    pub fn per_class_f1(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| {
                if !self.present(i) {
                    return None;
                }
                let denom = (self.row_sum(i) + self.col_sum(i)) as f64;
                if denom == 0.0 {
                    Some(0.0)
                } else {
                    Some(2.0 * self.diag(i) as f64 / denom)
                }
            })
            .collect()
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|i| {
                if !self.present(i) {
                    return None;
                }
                let union = self.row_sum(i) + self.col_sum(i) - self.diag(i);
                Some(self.diag(i) as f64 / union as f64)
            })
            .collect()
    }

    pub fn average_accuracy(&self) -> Result<f64> {
        self.check_nonempty()?;
        Ok(mean_present(&self.per_class_recall()))
    }

    pub fn macro_f1(&self) -> Result<f64> {
        self.check_nonempty()?;
        Ok(mean_present(&self.per_class_f1()))
    }

    pub fn mean_iou(&self) -> Result<f64> {
        self.check_nonempty()?;
        Ok(mean_present(&self.per_class_iou()))
    }

    pub fn summary(&self) -> Result<MetricSummary> {
        Ok(MetricSummary {
            oa: self.overall_accuracy()?,
            aa: self.average_accuracy()?,
            f1: self.macro_f1()?,
            miou: self.mean_iou()?,
            per_class_acc: self.per_class_recall(),
        })
    }
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}

/// The four aggregates plus per-class accuracies for the difference reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub oa: f64,
    pub aa: f64,
    pub f1: f64,
    pub miou: f64,
    pub per_class_acc: Vec<Option<f64>>,
}
