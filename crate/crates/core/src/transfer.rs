//! Phase 2: supervised training of `f = c . h` with cross-entropy and Adam,
//! with model selection by validation macro F1.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{augment_pair, stack_batch, AugmentConfig, Image};
use crate::error::{Error, Result};
use crate::eval::{evaluate, AbsentClassPolicy, MetricsReport};
use crate::label::{EmotionLabel, NUM_CLASSES};
use crate::losses::classify_loss_with_grad;
use crate::nn::{Encoder, Linear, Parameters, TransferModel};
use crate::optim::{adam_step, OptimizerConfig, OptimizerState};
use crate::real::Real;
use crate::rng::{rng_for, tag, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub finetune_encoder: bool,
    pub adam: OptimizerConfig,
    /// Optional single-view augmentation of training images.
    pub augment: Option<AugmentConfig>,
    pub absent_class_policy: AbsentClassPolicy,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            finetune_encoder: true,
            adam: OptimizerConfig::adam(),
            augment: None,
            absent_class_policy: AbsentClassPolicy::Zero,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("transfer epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("transfer batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("transfer learning_rate must be positive".into()));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// Linear map `F -> 6`, weights uniform in `[-1/sqrt(F), 1/sqrt(F)]`, zero bias.
pub fn init_classifier<T: Real>(feature_width: usize, seed: u64) -> Result<Linear<T>> {
    if feature_width == 0 {
        return Err(Error::Config("feature width must be positive".into()));
    }
    let mut rng = rng_for(seed, &[tag::CLASSIFIER_INIT]);
    let bound = 1.0 / num_traits::Float::sqrt(feature_width as f64);
    Ok(Linear::uniform(feature_width, NUM_CLASSES, bound, &mut rng))
}

pub fn new_transfer_model<T: Real>(encoder: Encoder<T>, seed: u64) -> Result<TransferModel<T>> {
    let classifier = init_classifier(encoder.feature_dim(), seed)?;
    Ok(TransferModel { encoder, classifier })
}

/// One Adam step on the classifier (and the encoder when fine-tuning).
/// Returns the batch loss before the update.
pub fn transfer_step<T: Real>(
    model: &mut TransferModel<T>,
    opt: &mut OptimizerState<T>,
    cfg: &TransferConfig,
    batch: ndarray::ArrayView4<T>,
    labels: &[EmotionLabel],
) -> Result<f64> {
    let (features, cache) = model.encoder.forward(batch)?;
    let logits = model.classifier.forward(features.view())?;
    let (loss, dlogits) = classify_loss_with_grad(logits.view(), labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("transfer loss"));
    }
    let mut grads = model.zeros_like();
    let dfeatures = model.classifier.backward(features.view(), dlogits.view(), &mut grads.classifier);
    if cfg.finetune_encoder {
        model.encoder.backward(&cache, dfeatures.view(), &mut grads.encoder);
        adam_step(opt, model.params_mut(""), &grads.params(""), cfg.learning_rate, &cfg.adam)?;
    } else {
        let params = model.classifier.params_mut("classifier");
        adam_step(opt, params, &grads.classifier.params("classifier"), cfg.learning_rate, &cfg.adam)?;
    }
    Ok(loss.as_f64())
}

/// 1-based epoch of the maximal score; earlier epochs win ties and NaN never wins.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TransferOutcome<T> {
    pub best_model: TransferModel<T>,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub history: Vec<EpochReport>,
}

fn batch_views<T: Real>(
    images: &[&Image],
    augment: Option<&AugmentConfig>,
    rng: &mut Rng,
) -> Result<ndarray::Array4<T>> {
    match augment {
        None => stack_batch(images),
        Some(cfg) => {
            let mut views = Vec::with_capacity(images.len());
            for img in images {
                views.push(augment_pair(img, rng, cfg)?.0);
            }
            stack_batch(&views.iter().collect::<Vec<_>>())
        }
    }
}

/// Train on `train` and keep the epoch with the best validation macro F1.
/// `on_epoch` sees every epoch's report and the model after that epoch.
pub fn run_transfer<T: Real, F>(
    cfg: &TransferConfig,
    pretrained: Encoder<T>,
    train: (&[Image], &[EmotionLabel]),
    validation: (&[Image], &[EmotionLabel]),
    mut on_epoch: F,
) -> Result<TransferOutcome<T>>
where
    F: FnMut(&EpochReport, &TransferModel<T>) -> Result<()>,
{
    cfg.validate()?;
    let (train_images, train_labels) = train;
    if train_images.is_empty() || train_images.len() != train_labels.len() {
        return Err(Error::Shape("training images and labels must be non-empty and aligned".into()));
    }
    if validation.0.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut model = new_transfer_model(pretrained, cfg.seed)?;
    let mut opt = OptimizerState::new();
    let mut best: Option<(usize, f64, TransferModel<T>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = rng_for(cfg.seed, &[tag::TRANSFER_EPOCH, epoch as u64]);
        let mut order: Vec<usize> = (0..train_images.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let imgs: Vec<&Image> = chunk.iter().map(|&i| &train_images[i]).collect();
            let labels: Vec<EmotionLabel> = chunk.iter().map(|&i| train_labels[i]).collect();
            let batch = batch_views::<T>(&imgs, cfg.augment.as_ref(), &mut rng)?;
            loss_sum += transfer_step(&mut model, &mut opt, cfg, batch.view(), &labels)?;
            batches += 1;
        }
        let (report, _) = evaluate(&model, validation.0, validation.1, 256, cfg.absent_class_policy)?;
        let rep = EpochReport { epoch, train_loss: loss_sum / batches as f64, validation: report };
        on_epoch(&rep, &model)?;
        let score = rep.validation.macro_f1;
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            best = Some((epoch, score, model.clone()));
        }
        history.push(rep);
    }
    let (best_epoch, best_macro_f1, best_model) = best.expect("at least one epoch");
    Ok(TransferOutcome { best_model, best_epoch, best_macro_f1, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_prefers_earliest_max() {
        assert_eq!(select_best(&[0.3, 0.5, 0.5, 0.4]), Some(2));
        assert_eq!(select_best(&[0.7]), Some(1));
        assert_eq!(select_best(&[f64::NAN, 0.1]), Some(2));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn classifier_init_contract() {
        let a = init_classifier::<f64>(64, 9).unwrap();
        let b = init_classifier::<f64>(64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.bias.iter().all(|&v| v == 0.0));
        let bound = 1.0 / 8.0;
        assert!(a.weight.iter().all(|v| v.abs() <= bound));
        assert_eq!(a.weight.dim(), (64, 6));
        assert!(init_classifier::<f64>(0, 1).is_err());
    }
}
