//! Flat run configuration. Values resolve in three layers: profile defaults,
//! then keys from a JSON file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use byel_core::data::{AugmentConfig, ColorJitter, Corruption, ToySpec};
use byel_core::eval::AbsentClassPolicy;
use byel_core::losses::{ByelOptions, ClassifyBackprop, LossWeights};
use byel_core::nn::{ArchConfig, EncoderConfig, TauMode};
use byel_core::optim::{OptimizerConfig, OptimizerKind};
use byel_core::pretrain::PretrainConfig;
use byel_core::transfer::TransferConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{IoContext, Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(RunError::Config(format!("unknown profile {other:?}; expected desk or paper"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Byel,
    Byol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub data_root: PathBuf,
    pub run_dir: PathBuf,

    pub image_size: usize,
    pub per_class_count_source: usize,
    pub per_class_count_target: usize,
    pub noise_sigma: f32,
    pub brightness_shift: f32,
    pub max_translate: usize,

    pub encoder_channels: Vec<usize>,
    pub head_hidden: usize,
    pub projection_dim: usize,

    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub weight_decay: f64,
    pub pretrain_optimizer: String,
    pub momentum: f64,
    pub lars_eps: f64,
    pub trust_coefficient: f64,
    pub tau_base: f64,
    pub tau_mode: String,
    pub checkpoint_every: usize,
    pub objective: Objective,
    pub stop_grad_emotion_vector: bool,
    pub classify_backprop: String,
    pub loss_weight_byol: f64,
    pub loss_weight_classify: f64,
    pub loss_weight_orthogonal: f64,

    pub crop_scale_min: f32,
    pub crop_scale_max: f32,
    pub crop_ratio_min: f32,
    pub crop_ratio_max: f32,
    pub flip_prob: f32,
    pub jitter_prob: f32,
    pub jitter_brightness: f32,
    pub jitter_contrast: f32,
    pub jitter_saturation: f32,
    pub jitter_hue: f32,
    pub grayscale_prob: f32,
    pub blur_prob_view1: f32,
    pub blur_prob_view2: f32,
    pub blur_sigma_min: f32,
    pub blur_sigma_max: f32,
    pub solarize_prob_view1: f32,
    pub solarize_prob_view2: f32,

    pub transfer_epochs: usize,
    pub transfer_batch_size: usize,
    pub transfer_lr: f64,
    pub finetune_encoder: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub transfer_augment: bool,
    pub absent_class_policy: String,

    pub compare_seeds: usize,
    pub ablation_fractions: Vec<f64>,
}

impl RunConfig {
    pub fn desk() -> Self {
        let toy = ToySpec::default();
        let arch = ArchConfig::default();
        let pre = PretrainConfig::default();
        let aug = AugmentConfig::default();
        let tr = TransferConfig::default();
        Self {
            profile: Profile::Desk,
            seed: 0,
            data_root: PathBuf::from("data"),
            run_dir: PathBuf::from("runs/default"),
            image_size: toy.image_size,
            per_class_count_source: toy.per_class_count_source,
            per_class_count_target: toy.per_class_count_target,
            noise_sigma: toy.corruption.noise_sigma,
            brightness_shift: toy.corruption.brightness_shift,
            max_translate: toy.corruption.max_translate,
            encoder_channels: arch.encoder.channels.clone(),
            head_hidden: arch.head_hidden,
            projection_dim: arch.projection_dim,
            pretrain_epochs: pre.epochs,
            pretrain_batch_size: pre.batch_size,
            pretrain_lr: pre.learning_rate,
            weight_decay: pre.weight_decay,
            pretrain_optimizer: pre.optimizer.as_str().into(),
            momentum: 0.9,
            lars_eps: 1e-9,
            trust_coefficient: pre.trust_coefficient,
            tau_base: pre.tau_base,
            tau_mode: "cosine".into(),
            checkpoint_every: pre.checkpoint_every,
            objective: Objective::Byel,
            stop_grad_emotion_vector: true,
            classify_backprop: "full".into(),
            loss_weight_byol: 1.0,
            loss_weight_classify: 1.0,
            loss_weight_orthogonal: 1.0,
            crop_scale_min: aug.crop_scale_range.0,
            crop_scale_max: aug.crop_scale_range.1,
            crop_ratio_min: aug.crop_ratio_range.0,
            crop_ratio_max: aug.crop_ratio_range.1,
            flip_prob: aug.flip_prob,
            jitter_prob: aug.color_jitter.prob,
            jitter_brightness: aug.color_jitter.brightness,
            jitter_contrast: aug.color_jitter.contrast,
            jitter_saturation: aug.color_jitter.saturation,
            jitter_hue: aug.color_jitter.hue,
            grayscale_prob: aug.grayscale_prob,
            blur_prob_view1: aug.blur_prob_view1,
            blur_prob_view2: aug.blur_prob_view2,
            blur_sigma_min: aug.blur_sigma_range.0,
            blur_sigma_max: aug.blur_sigma_range.1,
            solarize_prob_view1: aug.solarize_prob_view1,
            solarize_prob_view2: aug.solarize_prob_view2,
            transfer_epochs: tr.epochs,
            transfer_batch_size: tr.batch_size,
            transfer_lr: tr.learning_rate,
            finetune_encoder: tr.finetune_encoder,
            adam_beta1: tr.adam.beta1,
            adam_beta2: tr.adam.beta2,
            adam_eps: tr.adam.adam_eps,
            transfer_augment: false,
            absent_class_policy: "zero".into(),
            compare_seeds: 3,
            ablation_fractions: vec![0.45, 0.9, 1.0],
        }
    }

    /// Full-scale settings: 100 epochs, batch 256, 128 px images, LARS at
    /// 0.2 with trust coefficient 1e-3, Adam at 1e-4.
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            image_size: 128,
            blur_sigma_min: 0.1,
            blur_sigma_max: 2.0,
            pretrain_epochs: 100,
            pretrain_batch_size: 256,
            pretrain_lr: 0.2,
            weight_decay: 1.5e-6,
            trust_coefficient: 1e-3,
            checkpoint_every: 5,
            transfer_epochs: 100,
            transfer_batch_size: 256,
            transfer_lr: 1e-4,
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Layers `file` and then `overrides` on top of the profile defaults. The
    /// profile is taken from `overrides`, else `file`, else desk.
    pub fn resolve(file: Option<&Map<String, Value>>, overrides: &Map<String, Value>) -> Result<Self> {
        let profile_key = |m: &Map<String, Value>| -> Result<Option<Profile>> {
            match m.get("profile") {
                None => Ok(None),
                Some(Value::String(s)) => s.parse().map(Some),
                Some(v) => Err(RunError::Config(format!("profile must be a string, got {v}"))),
            }
        };
        let profile = match profile_key(overrides)? {
            Some(p) => p,
            None => file.map(profile_key).transpose()?.flatten().unwrap_or(Profile::Desk),
        };
        let mut merged = match serde_json::to_value(Self::for_profile(profile)).expect("plain struct") {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        for layer in file.into_iter().chain(Some(overrides)) {
            for (k, v) in layer {
                if !merged.contains_key(k) {
                    return Err(RunError::Config(format!("unknown config key {k:?}")));
                }
                merged.insert(k.clone(), v.clone());
            }
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged))
            .map_err(|e| RunError::Config(format!("invalid config value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_file(path: &Path) -> Result<Map<String, Value>> {
        if !path.exists() {
            return Err(RunError::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(RunError::Config(format!("{} must hold a JSON object", path.display()))),
            Err(e) => Err(RunError::Config(format!("{}: {e}", path.display()))),
        }
    }

    /// Checks every derived core config.
    pub fn validate(&self) -> Result<()> {
        self.toy_spec().validate()?;
        self.arch().validate()?;
        if self.arch().encoder.image_size != self.image_size {
            return Err(RunError::Config("encoder and data image sizes differ".into()));
        }
        self.pretrain_config()?.validate()?;
        self.transfer_config()?.validate()?;
        if self.compare_seeds < 1 {
            return Err(RunError::Config("compare_seeds must be at least 1".into()));
        }
        if self.ablation_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(RunError::Config("ablation_fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn toy_spec(&self) -> ToySpec {
        ToySpec {
            image_size: self.image_size,
            per_class_count_source: self.per_class_count_source,
            per_class_count_target: self.per_class_count_target,
            corruption: Corruption {
                noise_sigma: self.noise_sigma,
                brightness_shift: self.brightness_shift,
                max_translate: self.max_translate,
            },
            seed: self.seed,
        }
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig {
                image_size: self.image_size,
                in_channels: 1,
                channels: self.encoder_channels.clone(),
            },
            head_hidden: self.head_hidden,
            projection_dim: self.projection_dim,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            crop_scale_range: (self.crop_scale_min, self.crop_scale_max),
            crop_ratio_range: (self.crop_ratio_min, self.crop_ratio_max),
            flip_prob: self.flip_prob,
            color_jitter: ColorJitter {
                prob: self.jitter_prob,
                brightness: self.jitter_brightness,
                contrast: self.jitter_contrast,
                saturation: self.jitter_saturation,
                hue: self.jitter_hue,
            },
            grayscale_prob: self.grayscale_prob,
            blur_prob_view1: self.blur_prob_view1,
            blur_prob_view2: self.blur_prob_view2,
            blur_sigma_range: (self.blur_sigma_min, self.blur_sigma_max),
            solarize_prob_view1: self.solarize_prob_view1,
            solarize_prob_view2: self.solarize_prob_view2,
        }
    }

    pub fn objective(&self) -> Result<ByelOptions> {
        let classify_backprop = match self.classify_backprop.as_str() {
            "full" => ClassifyBackprop::Full,
            "emotion_matrix_only" => ClassifyBackprop::EmotionMatrixOnly,
            other => return Err(RunError::Config(format!("unknown classify_backprop {other:?}"))),
        };
        let weights = LossWeights {
            byol: self.loss_weight_byol,
            classify: self.loss_weight_classify,
            orthogonal: self.loss_weight_orthogonal,
        };
        if [weights.byol, weights.classify, weights.orthogonal].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(RunError::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(match self.objective {
            Objective::Byel => ByelOptions {
                weights,
                subtract: true,
                stop_grad_emotion_vector: self.stop_grad_emotion_vector,
                classify_backprop,
            },
            Objective::Byol => ByelOptions::byol(),
        })
    }

    pub fn pretrain_config(&self) -> Result<PretrainConfig> {
        let tau_mode = match self.tau_mode.as_str() {
            "cosine" => TauMode::Cosine,
            "constant" => TauMode::Constant,
            other => return Err(RunError::Config(format!("unknown tau_mode {other:?}"))),
        };
        let optimizer = OptimizerKind::parse(&self.pretrain_optimizer)?;
        Ok(PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch_size,
            learning_rate: self.pretrain_lr,
            weight_decay: self.weight_decay,
            tau_base: self.tau_base,
            tau_mode,
            optimizer,
            trust_coefficient: self.trust_coefficient,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            objective: self.objective()?,
            augment: self.augment(),
        })
    }

    pub fn pretrain_optimizer_config(&self) -> Result<OptimizerConfig> {
        let mut cfg = self.pretrain_config()?.optimizer_config();
        cfg.momentum = self.momentum;
        cfg.lars_eps = self.lars_eps;
        Ok(cfg)
    }

    pub fn transfer_config(&self) -> Result<TransferConfig> {
        let absent_class_policy = match self.absent_class_policy.as_str() {
            "zero" => AbsentClassPolicy::Zero,
            "skip" => AbsentClassPolicy::Skip,
            other => return Err(RunError::Config(format!("unknown absent_class_policy {other:?}"))),
        };
        let mut adam = OptimizerConfig::adam();
        adam.beta1 = self.adam_beta1;
        adam.beta2 = self.adam_beta2;
        adam.adam_eps = self.adam_eps;
        Ok(TransferConfig {
            epochs: self.transfer_epochs,
            batch_size: self.transfer_batch_size,
            learning_rate: self.transfer_lr,
            seed: self.seed,
            finetune_encoder: self.finetune_encoder,
            adam,
            augment: self.transfer_augment.then(|| self.augment()),
            absent_class_policy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_value(self).expect("plain struct"))
    }

    /// Hash of the phase-2 keys only. Independent of the seed and of
    /// anything that happened during pre-training.
    pub fn transfer_hash(&self) -> String {
        let v = serde_json::json!({
            "transfer_epochs": self.transfer_epochs,
            "transfer_batch_size": self.transfer_batch_size,
            "transfer_lr": self.transfer_lr,
            "finetune_encoder": self.finetune_encoder,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "transfer_augment": self.transfer_augment,
            "absent_class_policy": self.absent_class_policy,
        });
        hash_json(&v)
    }

    /// Writes the resolved config to `<run_dir>/config.json`.
    pub fn freeze(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.run_dir).ctx(|| format!("creating {}", self.run_dir.display()))?;
        let path = self.run_dir.join("config.json");
        fs::write(&path, self.to_json()).ctx(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn hash_json(v: &Value) -> String {
    let text = serde_json::to_string(v).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))
}
