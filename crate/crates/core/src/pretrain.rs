//! Phase 1: two augmented views, online and target forwards, emotion-vector
//! subtraction, symmetrized loss, one optimizer step on the online branch and
//! the emotion matrix, then one EMA update of the target branch.
//!
//! Pre-training consumes labels (for the emotion vectors and the
//! classification loss), so it is supervised on the source domain.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{augment_pair, stack_batch, AugmentConfig, Image};
use crate::error::{Error, Result};
use crate::label::EmotionLabel;
use crate::losses::{byel_forward_backward, ByelInputs, ByelOptions, LossBreakdown};
use crate::nn::{ema_update, tau_for_step, NetworkState, OnlineNetwork, Parameters, TauMode, TauSchedule};
use crate::optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::real::Real;
use crate::rng::{rng_for, tag, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub tau_base: f64,
    pub tau_mode: TauMode,
    pub optimizer: OptimizerKind,
    /// LARS trust-ratio multiplier.
    pub trust_coefficient: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub objective: ByelOptions,
    pub augment: AugmentConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.005,
            weight_decay: 1.5e-6,
            tau_base: 0.996,
            tau_mode: TauMode::Cosine,
            optimizer: OptimizerKind::Lars,
            trust_coefficient: 1.0,
            seed: 0,
            checkpoint_every: 5,
            objective: ByelOptions::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs < 1 {
            return bad("pretrain epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("pretrain batch_size must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("pretrain learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau_base) {
            return bad("tau_base must lie in [0, 1]");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if self.checkpoint_every < 1 {
            return bad("checkpoint_every must be at least 1");
        }
        if self.optimizer == OptimizerKind::Adam {
            return bad("pre-training uses lars or momentum_sgd");
        }
        self.augment.validate()
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut cfg = match self.optimizer {
            OptimizerKind::MomentumSgd => OptimizerConfig::momentum_sgd(self.weight_decay),
            _ => OptimizerConfig::lars(self.weight_decay),
        };
        cfg.trust_coefficient = self.trust_coefficient;
        cfg
    }

    pub fn tau_schedule(&self, total_steps: u64) -> TauSchedule {
        TauSchedule { tau_base: self.tau_base, total_steps, mode: self.tau_mode }
    }
}

pub fn steps_per_epoch(dataset_len: usize, batch_size: usize) -> usize {
    dataset_len.div_ceil(batch_size)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: LossBreakdown,
    /// Decay used for this step's target update.
    pub tau: f64,
}

/// Gradients of the trainable phase-1 tensors.
pub struct PretrainGrads<T> {
    pub online: OnlineNetwork<T>,
    pub emotion: crate::nn::EmotionMatrix<T>,
}

/// Loss and gradients for fixed view batches, without touching any state.
pub fn pretrain_loss_and_grads<T: Real>(
    state: &NetworkState<T>,
    view1: ndarray::ArrayView4<T>,
    view2: ndarray::ArrayView4<T>,
    labels: &[EmotionLabel],
    objective: &ByelOptions,
) -> Result<(LossBreakdown, PretrainGrads<T>)> {
    let (out1, cache1) = state.online.forward(view1)?;
    let (out2, cache2) = state.online.forward(view2)?;
    let target1 = state.target.project(view1)?;
    let target2 = state.target.project(view2)?;
    let inputs = ByelInputs {
        online_v1: out1.prediction.view(),
        online_v2: out2.prediction.view(),
        target_v1: target1.view(),
        target_v2: target2.view(),
    };
    let (loss, g) = byel_forward_backward(&inputs, labels, &state.emotion, objective)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("pre-training loss"));
    }
    let mut online = state.online.zeros_like();
    state.online.backward(&cache1, g.d_prediction_v1.view(), &mut online);
    state.online.backward(&cache2, g.d_prediction_v2.view(), &mut online);
    let emotion = crate::nn::EmotionMatrix { weights: g.d_emotion };
    Ok((loss, PretrainGrads { online, emotion }))
}

/// One full phase-1 update on `images`.
pub fn pretrain_step<T: Real>(
    state: &mut NetworkState<T>,
    opt: &mut OptimizerState<T>,
    cfg: &PretrainConfig,
    schedule: &TauSchedule,
    images: &[&Image],
    labels: &[EmotionLabel],
    rng: &mut Rng,
) -> Result<StepOutcome> {
    if images.len() != labels.len() {
        return Err(Error::Shape(alloc::format!("{} images for {} labels", images.len(), labels.len())));
    }
    let mut v1 = Vec::with_capacity(images.len());
    let mut v2 = Vec::with_capacity(images.len());
    for img in images {
        let (a, b) = augment_pair(img, rng, &cfg.augment)?;
        v1.push(a);
        v2.push(b);
    }
    let view1 = stack_batch::<T>(&v1.iter().collect::<Vec<_>>())?;
    let view2 = stack_batch::<T>(&v2.iter().collect::<Vec<_>>())?;
    apply_pretrain_update(state, opt, cfg, schedule, view1.view(), view2.view(), labels)
}

/// Gradient step and EMA update for already augmented views.
pub fn apply_pretrain_update<T: Real>(
    state: &mut NetworkState<T>,
    opt: &mut OptimizerState<T>,
    cfg: &PretrainConfig,
    schedule: &TauSchedule,
    view1: ndarray::ArrayView4<T>,
    view2: ndarray::ArrayView4<T>,
    labels: &[EmotionLabel],
) -> Result<StepOutcome> {
    let tau = tau_for_step(schedule, state.step + 1)?;
    let (loss, grads) = pretrain_loss_and_grads(state, view1, view2, labels, &cfg.objective)?;

    let mut params = state.online.params_mut("online");
    params.extend(state.emotion.params_mut("emotion"));
    let mut grad_views = grads.online.params("online");
    grad_views.extend(grads.emotion.params("emotion"));
    optimizer_step(opt, params, &grad_views, cfg.learning_rate, &cfg.optimizer_config())?;

    ema_update(&mut state.target.encoder, &state.online.encoder, tau)?;
    ema_update(&mut state.target.projector, &state.online.projector, tau)?;
    state.step += 1;
    Ok(StepOutcome { loss, tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// 1-based.
    pub epoch: usize,
    pub tau: f64,
    pub loss: LossBreakdown,
}

/// Drives epochs over a fixed labelled dataset. Each epoch draws its shuffle
/// and augmentations from a stream derived from `(seed, epoch)`, so a run
/// restored at an epoch boundary continues exactly like an uninterrupted one.
pub struct Pretrainer<'d> {
    pub config: PretrainConfig,
    images: &'d [Image],
    labels: &'d [EmotionLabel],
    schedule: TauSchedule,
}

impl<'d> Pretrainer<'d> {
    pub fn new(config: PretrainConfig, images: &'d [Image], labels: &'d [EmotionLabel]) -> Result<Self> {
        config.validate()?;
        if images.len() != labels.len() {
            return Err(Error::Shape(alloc::format!("{} images for {} labels", images.len(), labels.len())));
        }
        if images.len() < config.batch_size {
            return Err(Error::Config(alloc::format!(
                "dataset of {} images is smaller than batch_size {}",
                images.len(),
                config.batch_size
            )));
        }
        let total = (config.epochs * steps_per_epoch(images.len(), config.batch_size)) as u64;
        let schedule = config.tau_schedule(total);
        Ok(Self { config, images, labels, schedule })
    }

    pub fn total_steps(&self) -> u64 {
        self.schedule.total_steps
    }

    pub fn schedule(&self) -> &TauSchedule {
        &self.schedule
    }

    pub fn run_epoch<T: Real>(
        &self,
        state: &mut NetworkState<T>,
        opt: &mut OptimizerState<T>,
        epoch: usize,
    ) -> Result<Vec<StepRecord>> {
        let mut rng = rng_for(self.config.seed, &[tag::PRETRAIN_EPOCH, epoch as u64]);
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.shuffle(&mut rng);
        let mut records = Vec::with_capacity(steps_per_epoch(order.len(), self.config.batch_size));
        for chunk in order.chunks(self.config.batch_size) {
            let imgs: Vec<&Image> = chunk.iter().map(|&i| &self.images[i]).collect();
            let labels: Vec<EmotionLabel> = chunk.iter().map(|&i| self.labels[i]).collect();
            let out = pretrain_step(state, opt, &self.config, &self.schedule, &imgs, &labels, &mut rng)?;
            records.push(StepRecord { step: state.step, epoch, tau: out.tau, loss: out.loss });
        }
        Ok(records)
    }

    /// Runs epochs `start_epoch..=epochs`, calling `on_epoch` after each with
    /// the epoch's step records.
    pub fn run<T: Real, F>(
        &self,
        state: &mut NetworkState<T>,
        opt: &mut OptimizerState<T>,
        start_epoch: usize,
        mut on_epoch: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &NetworkState<T>, &OptimizerState<T>, &[StepRecord]) -> Result<()>,
    {
        for epoch in start_epoch.max(1)..=self.config.epochs {
            let records = self.run_epoch(state, opt, epoch)?;
            on_epoch(epoch, state, opt, &records)?;
        }
        Ok(())
    }

    pub fn is_checkpoint_epoch(&self, epoch: usize) -> bool {
        epoch.is_multiple_of(self.config.checkpoint_every) || epoch == self.config.epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy_benchmark, ToySpec};
    use crate::nn::{ArchConfig, EncoderConfig};

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig { image_size: 16, in_channels: 1, channels: alloc::vec![4, 4, 6] },
            head_hidden: 8,
            projection_dim: 6,
        }
    }

    fn tiny_data() -> (Vec<Image>, Vec<EmotionLabel>) {
        let spec = ToySpec { image_size: 16, per_class_count_source: 2, per_class_count_target: 1, ..ToySpec::default() };
        let b = generate_toy_benchmark(&spec).unwrap();
        let labels = b.source.manifest.labels();
        (b.source.images, labels)
    }

    #[test]
    fn step_counting() {
        assert_eq!(steps_per_epoch(64, 64), 1);
        assert_eq!(steps_per_epoch(600, 64), 10);
        assert_eq!(steps_per_epoch(65, 64), 2);
    }

    #[test]
    fn zero_learning_rate_moves_only_the_target() {
        let (images, labels) = tiny_data();
        let mut state = NetworkState::<f64>::new(&tiny_arch(), 1).unwrap();
        // Make online and target differ so the EMA has something to do.
        state.target.encoder.blocks[0].weight.mapv_inplace(|v| v + 0.5);
        let online_before = state.online.clone();
        let target_before = state.target.clone();
        let cfg = PretrainConfig { learning_rate: 0.0, ..PretrainConfig::default() };
        let sched = TauSchedule::cosine(0.9, 10);
        let refs: Vec<&Image> = images.iter().take(4).collect();
        let mut opt = OptimizerState::new();
        pretrain_step(&mut state, &mut opt, &cfg, &sched, &refs, &labels[..4], &mut rng_for(0, &[])).unwrap();
        assert_eq!(state.online, online_before);
        assert_ne!(state.target, target_before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn final_step_freezes_target() {
        let (images, labels) = tiny_data();
        let mut state = NetworkState::<f64>::new(&tiny_arch(), 2).unwrap();
        state.step = 9;
        let target_before = state.target.clone();
        let cfg = PretrainConfig::default();
        let sched = TauSchedule::cosine(0.996, 10);
        let refs: Vec<&Image> = images.iter().take(4).collect();
        let out = pretrain_step(&mut state, &mut OptimizerState::new(), &cfg, &sched, &refs, &labels[..4], &mut rng_for(0, &[]))
            .unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(state.target, target_before);
    }

    #[test]
    fn one_epoch_one_step() {
        let (images, labels) = tiny_data();
        let cfg = PretrainConfig { epochs: 1, batch_size: 12, checkpoint_every: 1, ..PretrainConfig::default() };
        let trainer = Pretrainer::new(cfg, &images, &labels).unwrap();
        let mut state = NetworkState::<f32>::new(&tiny_arch(), 3).unwrap();
        let mut calls = 0;
        trainer
            .run(&mut state, &mut OptimizerState::new(), 1, |_, _, _, recs| {
                calls += 1;
                assert_eq!(recs.len(), 1);
                Ok(())
            })
            .unwrap();
        assert_eq!((calls, state.step), (1, 1));
    }

    #[test]
    fn checkpoint_grid() {
        let (images, labels) = tiny_data();
        let cfg = PretrainConfig { epochs: 30, batch_size: 4, checkpoint_every: 10, ..PretrainConfig::default() };
        let trainer = Pretrainer::new(cfg, &images, &labels).unwrap();
        let grid: Vec<usize> = (1..=30).filter(|&e| trainer.is_checkpoint_epoch(e)).collect();
        assert_eq!(grid, alloc::vec![10, 20, 30]);
    }

    #[test]
    fn config_validation() {
        let (images, labels) = tiny_data();
        for cfg in [
            PretrainConfig { epochs: 0, ..PretrainConfig::default() },
            PretrainConfig { batch_size: 1, ..PretrainConfig::default() },
            PretrainConfig { learning_rate: 0.0, ..PretrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        let big = PretrainConfig { batch_size: 64, ..PretrainConfig::default() };
        assert!(Pretrainer::new(big, &images, &labels).is_err());
    }
}
