use alloc::format;

use ndarray::{Array2, ArrayView2, ArrayView4};

use super::emotion::EmotionMatrix;
use super::encoder::{Encoder, EncoderCache, EncoderConfig};
use super::layers::Linear;
use super::mlp::{Mlp, MlpCache};
use super::params::{child, ParamView, ParamViewMut, Parameters};
use crate::error::{Error, Result};
use crate::label::NUM_CLASSES;
use crate::real::Real;
use crate::rng::{rng_for, tag};

/// Network widths. `projection_dim` is D, shared by projector and predictor
/// outputs and by the rows of the emotion matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    pub projection_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), head_hidden: 128, projection_dim: 32 }
    }
}

impl ArchConfig {
    pub fn feature_dim(&self) -> usize {
        self.encoder.channels.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.projection_dim < NUM_CLASSES {
            return Err(Error::Config(format!(
                "projection_dim {} must be at least {NUM_CLASSES} for orthonormal emotion vectors",
                self.projection_dim
            )));
        }
        if self.head_hidden == 0 || self.feature_dim() == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.encoder.image_size < 2 {
            return Err(Error::Config("image_size too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Transfer,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Transfer => "transfer",
        }
    }
}

/// Gradient-trained branch: encoder h, projector g, predictor q.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineNetwork<T> {
    pub encoder: Encoder<T>,
    pub projector: Mlp<T>,
    pub predictor: Mlp<T>,
}

pub struct OnlineCache<T> {
    encoder: EncoderCache<T>,
    projector: MlpCache<T>,
    predictor: MlpCache<T>,
}

pub struct OnlineOutput<T> {
    pub features: Array2<T>,
    pub projection: Array2<T>,
    pub prediction: Array2<T>,
}

impl<T: Real> OnlineNetwork<T> {
    pub fn forward(&self, batch: ArrayView4<T>) -> Result<(OnlineOutput<T>, OnlineCache<T>)> {
        let (features, encoder) = self.encoder.forward(batch)?;
        let (projection, projector) = self.projector.forward(features.view())?;
        let (prediction, predictor) = self.predictor.forward(projection.view())?;
        Ok((
            OnlineOutput { features, projection, prediction },
            OnlineCache { encoder, projector, predictor },
        ))
    }

    /// Backpropagate a gradient on the predictor output.
    pub fn backward(&self, cache: &OnlineCache<T>, d_prediction: ArrayView2<T>, grad: &mut Self) {
        let dz = self.predictor.backward(&cache.predictor, d_prediction, &mut grad.predictor);
        let dy = self.projector.backward(&cache.projector, dz.view(), &mut grad.projector);
        self.encoder.backward(&cache.encoder, dy.view(), &mut grad.encoder);
    }
}

impl<T: Real> Parameters<T> for OnlineNetwork<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        self.encoder.visit(&child(prefix, "encoder"), f);
        self.projector.visit(&child(prefix, "projector"), f);
        self.predictor.visit(&child(prefix, "predictor"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        self.encoder.visit_mut(&child(prefix, "encoder"), f);
        self.projector.visit_mut(&child(prefix, "projector"), f);
        self.predictor.visit_mut(&child(prefix, "predictor"), f);
    }
}

/// EMA-maintained branch: encoder h' and projector g'. No predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork<T> {
    pub encoder: Encoder<T>,
    pub projector: Mlp<T>,
}

impl<T: Real> TargetNetwork<T> {
    pub fn of(online: &OnlineNetwork<T>) -> Self {
        Self { encoder: online.encoder.clone(), projector: online.projector.clone() }
    }

    pub fn project(&self, batch: ArrayView4<T>) -> Result<Array2<T>> {
        let y = self.encoder.features(batch)?;
        projector_forward(&self.projector, y.view())
    }
}

impl<T: Real> Parameters<T> for TargetNetwork<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        self.encoder.visit(&child(prefix, "encoder"), f);
        self.projector.visit(&child(prefix, "projector"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        self.encoder.visit_mut(&child(prefix, "encoder"), f);
        self.projector.visit_mut(&child(prefix, "projector"), f);
    }
}

/// `f = c . h`: pre-trained encoder plus a single linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferModel<T> {
    pub encoder: Encoder<T>,
    pub classifier: Linear<T>,
}

impl<T: Real> TransferModel<T> {
    pub fn logits(&self, batch: ArrayView4<T>) -> Result<Array2<T>> {
        let y = self.encoder.features(batch)?;
        classifier_forward(&self.classifier, y.view())
    }
}

impl<T: Real> Parameters<T> for TransferModel<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        self.encoder.visit(&child(prefix, "encoder"), f);
        self.classifier.visit(&child(prefix, "classifier"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        self.encoder.visit_mut(&child(prefix, "encoder"), f);
        self.classifier.visit_mut(&child(prefix, "classifier"), f);
    }
}

/// Everything phase 1 trains or maintains.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T> {
    pub online: OnlineNetwork<T>,
    pub target: TargetNetwork<T>,
    pub emotion: EmotionMatrix<T>,
    pub step: u64,
}

impl<T: Real> NetworkState<T> {
    /// Fresh online weights; the target starts as an exact copy.
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_for(seed, &[tag::INIT]);
        let encoder = Encoder::new(&arch.encoder, &mut rng)?;
        let f = encoder.feature_dim();
        let projector = Mlp::new(f, arch.head_hidden, arch.projection_dim, &mut rng);
        let predictor = Mlp::new(arch.projection_dim, arch.head_hidden, arch.projection_dim, &mut rng);
        let online = OnlineNetwork { encoder, projector, predictor };
        let emotion = EmotionMatrix::random(arch.projection_dim, &mut rng);
        Ok(Self { target: TargetNetwork::of(&online), online, emotion, step: 0 })
    }

    pub fn projection_dim(&self) -> usize {
        self.online.projector.output_dim()
    }
}

impl<T: Real> Parameters<T> for NetworkState<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a, T>)) {
        self.online.visit(&child(prefix, "online"), f);
        self.target.visit(&child(prefix, "target"), f);
        self.emotion.visit(&child(prefix, "emotion"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a, T>)) {
        self.online.visit_mut(&child(prefix, "online"), f);
        self.target.visit_mut(&child(prefix, "target"), f);
        self.emotion.visit_mut(&child(prefix, "emotion"), f);
    }
}

pub fn encoder_forward<T: Real>(h: &Encoder<T>, batch: ArrayView4<T>) -> Result<Array2<T>> {
    h.features(batch)
}

pub fn projector_forward<T: Real>(g: &Mlp<T>, y: ArrayView2<T>) -> Result<Array2<T>> {
    g.forward(y).map(|(z, _)| z)
}

pub fn predictor_forward<T: Real>(q: &Mlp<T>, z: ArrayView2<T>) -> Result<Array2<T>> {
    q.forward(z).map(|(p, _)| p)
}

pub fn classifier_forward<T: Real>(c: &Linear<T>, y: ArrayView2<T>) -> Result<Array2<T>> {
    c.forward(y)
}
