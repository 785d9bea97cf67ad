//! Encoder h, projector g, predictor q, emotion matrix W_E, transfer classifier
//! c, EMA target maintenance and emotion-vector subtraction.
//!
//! Every layer exposes an explicit `forward` returning a cache and a `backward`
//! that accumulates parameter gradients into a same-typed gradient module.

mod ema;
mod emotion;
mod encoder;
mod layers;
mod mlp;
mod network;
mod params;

pub use ema::{ema_update, tau_for_step, TauMode, TauSchedule};
pub use emotion::{emotion_logits, subtract_emotion_vector, EmotionMatrix};
pub use encoder::{Encoder, EncoderCache, EncoderConfig};
pub use layers::{relu, Conv2d, ConvCache, LayerNorm, LayerNormCache, Linear, SampleNorm, SampleNormCache};
pub use mlp::{Mlp, MlpCache};
pub use network::{
    classifier_forward, encoder_forward, predictor_forward, projector_forward, ArchConfig,
    NetworkState, OnlineCache, OnlineNetwork, OnlineOutput, Phase, TargetNetwork, TransferModel,
};
pub use params::{ParamKind, Parameters, ParamView, ParamViewMut};
