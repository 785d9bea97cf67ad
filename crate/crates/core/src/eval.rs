//! Confusion matrices, per-class precision/recall/F1 and macro F1.

use alloc::format;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2, ArrayView4};

use crate::data::{stack_batch, Image};
use crate::error::{Error, Result};
use crate::label::{EmotionLabel, NUM_CLASSES};
use crate::nn::TransferModel;
use crate::real::Real;

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, truth: EmotionLabel, pred: EmotionLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    /// Shards merge by elementwise addition.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..NUM_CLASSES).filter(|&t| t != class).map(|t| self.counts[t][class]).sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..NUM_CLASSES).filter(|&p| p != class).map(|p| self.counts[class][p]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }
}

pub fn confusion(preds: &[EmotionLabel], truths: &[EmotionLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Precision, recall and F1 per class; any zero denominator yields 0.
pub fn f1_scores(cm: &ConfusionMatrix) -> ClassScores {
    let mut s = ClassScores { precision: [0.0; NUM_CLASSES], recall: [0.0; NUM_CLASSES], f1: [0.0; NUM_CLASSES] };
    for c in 0..NUM_CLASSES {
        let tp = cm.true_positives(c) as f64;
        let p = ratio(tp, tp + cm.false_positives(c) as f64);
        let r = ratio(tp, tp + cm.false_negatives(c) as f64);
        s.precision[c] = p;
        s.recall[c] = r;
        s.f1[c] = ratio(2.0 * p * r, p + r);
    }
    s
}

pub fn macro_f1(per_class_f1: &[f64]) -> Result<f64> {
    if per_class_f1.len() != NUM_CLASSES {
        return Err(Error::Shape(format!("{} per-class scores, expected {NUM_CLASSES}", per_class_f1.len())));
    }
    Ok(per_class_f1.iter().sum::<f64>() / NUM_CLASSES as f64)
}

/// How classes absent from the ground truth enter the macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsentClassPolicy {
    /// Score them with the zero rule, always averaging over all six classes.
    #[default]
    Zero,
    /// Average only over classes with at least one true example.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class_precision: [f64; NUM_CLASSES],
    pub per_class_recall: [f64; NUM_CLASSES],
    pub per_class_f1: [f64; NUM_CLASSES],
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix, policy: AbsentClassPolicy) -> Self {
        let s = f1_scores(&cm);
        let macro_f1 = match policy {
            AbsentClassPolicy::Zero => macro_f1(&s.f1).expect("six classes"),
            AbsentClassPolicy::Skip => {
                let present: Vec<f64> =
                    (0..NUM_CLASSES).filter(|&c| cm.support(c) > 0).map(|c| s.f1[c]).collect();
                if present.is_empty() {
                    0.0
                } else {
                    present.iter().sum::<f64>() / present.len() as f64
                }
            }
        };
        Self {
            per_class_precision: s.precision,
            per_class_recall: s.recall,
            per_class_f1: s.f1,
            macro_f1,
            confusion: cm,
        }
    }
}

/// Anything that maps an image batch to per-class logits.
pub trait LogitModel<T: Real> {
    fn logits(&self, batch: ArrayView4<T>) -> Result<Array2<T>>;
}

impl<T: Real> LogitModel<T> for TransferModel<T> {
    fn logits(&self, batch: ArrayView4<T>) -> Result<Array2<T>> {
        TransferModel::logits(self, batch)
    }
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_predictions<T: Real>(logits: ArrayView2<T>) -> Result<Vec<EmotionLabel>> {
    if logits.ncols() != NUM_CLASSES {
        return Err(Error::Shape(format!("{} logits per row, expected {NUM_CLASSES}", logits.ncols())));
    }
    logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            EmotionLabel::try_from(best)
        })
        .collect()
}

pub fn predict<T: Real, M: LogitModel<T> + ?Sized>(
    model: &M,
    images: &[Image],
    batch_size: usize,
) -> Result<Vec<EmotionLabel>> {
    if images.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut preds = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let refs: Vec<&Image> = chunk.iter().collect();
        let batch = stack_batch::<T>(&refs)?;
        preds.extend(argmax_predictions(model.logits(batch.view())?.view())?);
    }
    Ok(preds)
}

/// Predict every image and score against `labels`.
pub fn evaluate<T: Real, M: LogitModel<T> + ?Sized>(
    model: &M,
    images: &[Image],
    labels: &[EmotionLabel],
    batch_size: usize,
    policy: AbsentClassPolicy,
) -> Result<(MetricsReport, Vec<EmotionLabel>)> {
    let preds = predict(model, images, batch_size)?;
    let cm = confusion(&preds, labels)?;
    Ok((MetricsReport::from_confusion(cm, policy), preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(k: usize) -> EmotionLabel {
        EmotionLabel::try_from(k).unwrap()
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let t: Vec<_> = (0..12).map(|i| l(i % 6)).collect();
        let cm = confusion(&t, &t).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(cm.counts[i][j], if i == j { 2 } else { 0 });
            }
        }
        let r = MetricsReport::from_confusion(cm, AbsentClassPolicy::Zero);
        assert_eq!(r.per_class_f1, [1.0; 6]);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn single_off_diagonal_pair() {
        let cm = confusion(&[l(5)], &[l(0)]).unwrap();
        assert_eq!(cm.counts[0][5], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn absent_class_scores_zero() {
        let t = [l(0), l(1), l(2), l(3), l(4)];
        let cm = confusion(&t, &t).unwrap();
        let s = f1_scores(&cm);
        assert_eq!(s.f1[5], 0.0);
        let zero = MetricsReport::from_confusion(cm, AbsentClassPolicy::Zero);
        assert!((zero.macro_f1 - 5.0 / 6.0).abs() < 1e-12);
        let skip = MetricsReport::from_confusion(cm, AbsentClassPolicy::Skip);
        assert_eq!(skip.macro_f1, 1.0);
    }

    #[test]
    fn macro_examples() {
        assert_eq!(macro_f1(&[1.0; 6]).unwrap(), 1.0);
        assert!((macro_f1(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(macro_f1(&[1.0; 5]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let logits = Array2::<f64>::zeros((3, 6));
        assert_eq!(argmax_predictions(logits.view()).unwrap(), alloc::vec![l(0); 3]);
        let mut logits = Array2::<f64>::zeros((1, 6));
        logits[[0, 2]] = 1.0;
        logits[[0, 4]] = 1.0;
        assert_eq!(argmax_predictions(logits.view()).unwrap(), alloc::vec![l(2)]);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(confusion(&[l(0)], &[l(0), l(1)]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }
}
