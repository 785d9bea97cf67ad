//! Checkpoint directories: `header.json` plus one raw little-endian f32 file
//! per tensor, optimizer buffers included. Restoring is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use byel_core::nn::{ArchConfig, EncoderConfig, NetworkState, Parameters, Phase, TransferModel};
use byel_core::nn::Encoder;
use byel_core::optim::{OptimizerConfig, OptimizerKind, OptimizerState, Slot};
use byel_core::transfer::new_transfer_model;
use byel_core::NUM_CLASSES;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, RunError};

pub const FORMAT_VERSION: u32 = 1;
const HEADER: &str = "header.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub kind: String,
    pub steps: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub lars_eps: f64,
    pub trust_coefficient: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerHeader {
    pub fn new(cfg: &OptimizerConfig, lr: f64, steps: u64) -> Self {
        Self {
            kind: cfg.kind.as_str().into(),
            steps,
            learning_rate: lr,
            weight_decay: cfg.weight_decay,
            momentum: cfg.momentum,
            lars_eps: cfg.lars_eps,
            trust_coefficient: cfg.trust_coefficient,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub phase: String,
    pub step: u64,
    pub epoch: usize,
    pub image_size: usize,
    pub encoder_channels: Vec<usize>,
    pub head_hidden: usize,
    /// D.
    pub projection_dim: usize,
    /// F.
    pub feature_dim: usize,
    /// C.
    pub num_classes: usize,
    pub config_hash: String,
    pub optimizer: Option<OptimizerHeader>,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointHeader {
    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig { image_size: self.image_size, in_channels: 1, channels: self.encoder_channels.clone() },
            head_hidden: self.head_hidden,
            projection_dim: self.projection_dim,
        }
    }

    pub fn phase(&self) -> Result<Phase> {
        match self.phase.as_str() {
            "pretrain" => Ok(Phase::Pretrain),
            "transfer" => Ok(Phase::Transfer),
            other => Err(corrupt(format!("unknown checkpoint phase {other:?}"))),
        }
    }
}

/// Pre-training state as stored on disk.
pub struct PretrainCheckpoint {
    pub header: CheckpointHeader,
    pub state: NetworkState<f32>,
    pub optimizer: OptimizerState<f32>,
}

pub struct TransferCheckpoint {
    pub header: CheckpointHeader,
    pub model: TransferModel<f32>,
}

fn corrupt(msg: String) -> RunError {
    RunError::io("reading checkpoint", std::io::Error::new(ErrorKind::InvalidData, msg))
}

fn file_name(name: &str) -> String {
    format!("{name}.f32")
}

fn encode(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

struct Writer {
    dir: PathBuf,
    entries: Vec<TensorEntry>,
}

impl Writer {
    fn tensor<'a>(&mut self, name: &str, shape: &[usize], values: impl Iterator<Item = &'a f32>) -> Result<()> {
        let file = file_name(name);
        let path = self.dir.join(&file);
        fs::write(&path, encode(values.copied())).ctx(|| format!("writing {}", path.display()))?;
        self.entries.push(TensorEntry { name: name.into(), shape: shape.to_vec(), file });
        Ok(())
    }
}

/// Writes into a sibling temporary directory and renames it into place, so a
/// checkpoint directory is either complete or absent.
fn write_checkpoint<F>(dir: &Path, mut header: CheckpointHeader, fill: F) -> Result<()>
where
    F: FnOnce(&mut Writer) -> Result<()>,
{
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).ctx(|| format!("creating {}", parent.display()))?;
    let tmp = parent.join(format!(
        ".{}.partial",
        dir.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint")
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).ctx(|| format!("removing {}", tmp.display()))?;
    }
    fs::create_dir_all(&tmp).ctx(|| format!("creating {}", tmp.display()))?;
    let mut w = Writer { dir: tmp.clone(), entries: Vec::new() };
    fill(&mut w)?;
    header.tensors = w.entries;
    let json = serde_json::to_string_pretty(&header).expect("plain struct");
    fs::write(tmp.join(HEADER), json).ctx(|| format!("writing header in {}", tmp.display()))?;
    if dir.exists() {
        fs::remove_dir_all(dir).ctx(|| format!("replacing {}", dir.display()))?;
    }
    fs::rename(&tmp, dir).ctx(|| format!("moving checkpoint to {}", dir.display()))
}

fn write_params(w: &mut Writer, model: &impl Parameters<f32>) -> Result<()> {
    for p in model.params("") {
        w.tensor(&p.path, p.value.shape(), p.value.iter())?;
    }
    Ok(())
}

fn write_optimizer(w: &mut Writer, opt: &OptimizerState<f32>) -> Result<()> {
    for slot in &opt.slots {
        w.tensor(&format!("optimizer.{}.first", slot.path), slot.first.shape(), slot.first.iter())?;
        if let Some(second) = &slot.second {
            w.tensor(&format!("optimizer.{}.second", slot.path), second.shape(), second.iter())?;
        }
    }
    Ok(())
}

fn base_header(arch: &ArchConfig, phase: Phase, step: u64, epoch: usize, config_hash: &str) -> CheckpointHeader {
    CheckpointHeader {
        format_version: FORMAT_VERSION,
        phase: phase.as_str().into(),
        step,
        epoch,
        image_size: arch.encoder.image_size,
        encoder_channels: arch.encoder.channels.clone(),
        head_hidden: arch.head_hidden,
        projection_dim: arch.projection_dim,
        feature_dim: arch.feature_dim(),
        num_classes: NUM_CLASSES,
        config_hash: config_hash.into(),
        optimizer: None,
        tensors: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn save_pretrain(
    dir: &Path,
    arch: &ArchConfig,
    state: &NetworkState<f32>,
    opt: &OptimizerState<f32>,
    opt_cfg: &OptimizerConfig,
    lr: f64,
    epoch: usize,
    config_hash: &str,
) -> Result<()> {
    let mut header = base_header(arch, Phase::Pretrain, state.step, epoch, config_hash);
    header.optimizer = Some(OptimizerHeader::new(opt_cfg, lr, opt.steps));
    write_checkpoint(dir, header, |w| {
        write_params(w, state)?;
        write_optimizer(w, opt)
    })
}

pub fn save_transfer(
    dir: &Path,
    arch: &ArchConfig,
    model: &TransferModel<f32>,
    step: u64,
    epoch: usize,
    config_hash: &str,
) -> Result<()> {
    let header = base_header(arch, Phase::Transfer, step, epoch, config_hash);
    write_checkpoint(dir, header, |w| write_params(w, model))
}

pub fn read_header(dir: &Path) -> Result<CheckpointHeader> {
    let path = dir.join(HEADER);
    if !path.exists() {
        return Err(RunError::MissingArtifact(path));
    }
    let text = fs::read_to_string(&path).ctx(|| format!("reading {}", path.display()))?;
    let header: CheckpointHeader =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported checkpoint format {}", header.format_version)));
    }
    if header.num_classes != NUM_CLASSES {
        return Err(corrupt(format!("checkpoint has {} classes", header.num_classes)));
    }
    Ok(header)
}

struct Reader {
    dir: PathBuf,
    entries: BTreeMap<String, TensorEntry>,
}

impl Reader {
    fn new(dir: &Path, header: &CheckpointHeader) -> Self {
        let entries = header.tensors.iter().map(|e| (e.name.clone(), e.clone())).collect();
        Self { dir: dir.to_path_buf(), entries }
    }

    fn take(&mut self, name: &str) -> Result<ArrayD<f32>> {
        let entry = self.entries.remove(name).ok_or_else(|| corrupt(format!("tensor {name} missing")))?;
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path).ctx(|| format!("reading {}", path.display()))?;
        let n: usize = entry.shape.iter().product();
        if bytes.len() != 4 * n {
            return Err(corrupt(format!("{} holds {} bytes, expected {}", entry.file, bytes.len(), 4 * n)));
        }
        let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(ArrayD::from_shape_vec(IxDyn(&entry.shape), values).expect("length checked"))
    }

    fn fill(&mut self, model: &mut impl Parameters<f32>) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> =
            model.params("").iter().map(|p| (p.path.clone(), p.value.shape().to_vec())).collect();
        let mut loaded = Vec::with_capacity(names.len());
        for (name, shape) in &names {
            let t = self.take(name)?;
            if t.shape() != shape.as_slice() {
                return Err(corrupt(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            loaded.push(t);
        }
        let mut it = loaded.into_iter();
        model.visit_mut("", &mut |mut p| p.value.assign(&it.next().expect("one tensor per parameter")));
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(extra) => Err(corrupt(format!("unexpected tensor {extra}"))),
        }
    }
}

pub fn load_pretrain(dir: &Path) -> Result<PretrainCheckpoint> {
    let header = read_header(dir)?;
    if header.phase()? != Phase::Pretrain {
        return Err(RunError::Config(format!("{} is not a pre-training checkpoint", dir.display())));
    }
    let mut state = NetworkState::<f32>::new(&header.arch(), 0)?;
    let mut reader = Reader::new(dir, &header);
    reader.fill(&mut state)?;
    state.step = header.step;

    let mut optimizer = OptimizerState::new();
    if let Some(oh) = &header.optimizer {
        optimizer.steps = oh.steps;
        let adam = OptimizerKind::parse(&oh.kind)? == OptimizerKind::Adam;
        for p in state.params("") {
            let first_name = format!("optimizer.{}.first", p.path);
            if !reader.entries.contains_key(&first_name) {
                continue;
            }
            let first = reader.take(&first_name)?;
            let second = if adam { Some(reader.take(&format!("optimizer.{}.second", p.path))?) } else { None };
            optimizer.slots.push(Slot { path: p.path.clone(), first, second });
        }
    }
    reader.finish()?;
    Ok(PretrainCheckpoint { header, state, optimizer })
}

pub fn load_transfer(dir: &Path) -> Result<TransferCheckpoint> {
    let header = read_header(dir)?;
    if header.phase()? != Phase::Transfer {
        return Err(RunError::Config(format!("{} is not a transfer checkpoint", dir.display())));
    }
    let arch = header.arch();
    arch.validate()?;
    let encoder = Encoder::new(&arch.encoder, &mut byel_core::rng::rng_for(0, &[]))?;
    let mut model = new_transfer_model(encoder, 0)?;
    let mut reader = Reader::new(dir, &header);
    reader.fill(&mut model)?;
    reader.finish()?;
    Ok(TransferCheckpoint { header, model })
}

/// The encoder of either kind of checkpoint.
pub fn load_encoder(dir: &Path) -> Result<(CheckpointHeader, Encoder<f32>)> {
    let header = read_header(dir)?;
    match header.phase()? {
        Phase::Pretrain => {
            let c = load_pretrain(dir)?;
            Ok((c.header, c.state.online.encoder))
        }
        Phase::Transfer => {
            let c = load_transfer(dir)?;
            Ok((c.header, c.model.encoder))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use byel_core::nn::EncoderConfig;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            encoder: EncoderConfig { image_size: 16, in_channels: 1, channels: vec![4, 6] },
            head_hidden: 8,
            projection_dim: 6,
        }
    }

    #[test]
    fn pretrain_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let arch = tiny_arch();
        let mut state = NetworkState::<f32>::new(&arch, 5).unwrap();
        state.step = 12;
        state.emotion.weights[[0, 0]] = f32::from_bits(0x3f80_0001);
        let mut opt = OptimizerState::new();
        for p in state.params("") {
            if p.path.starts_with("online") {
                opt.slots.push(Slot { path: p.path.clone(), first: p.value.mapv(|v| v * 0.5), second: None });
            }
        }
        opt.steps = 12;
        let cfg = OptimizerConfig::lars(1.5e-6);
        let path = dir.path().join("ck");
        save_pretrain(&path, &arch, &state, &opt, &cfg, 0.01, 3, "abc").unwrap();
        let back = load_pretrain(&path).unwrap();
        assert_eq!(back.state, state);
        assert_eq!(back.optimizer, opt);
        assert_eq!(back.header.epoch, 3);
        assert_eq!(back.header.feature_dim, 6);
        assert_eq!(back.header.config_hash, "abc");
    }

    #[test]
    fn transfer_round_trip_and_phase_check() {
        let dir = tempfile::tempdir().unwrap();
        let arch = tiny_arch();
        let state = NetworkState::<f32>::new(&arch, 2).unwrap();
        let model = new_transfer_model(state.online.encoder.clone(), 4).unwrap();
        let path = dir.path().join("t");
        save_transfer(&path, &arch, &model, 40, 2, "h").unwrap();
        assert_eq!(load_transfer(&path).unwrap().model, model);
        assert!(load_pretrain(&path).is_err());
        assert_eq!(load_encoder(&path).unwrap().1, state.online.encoder);
    }

    #[test]
    fn truncated_tensor_detected() {
        let dir = tempfile::tempdir().unwrap();
        let arch = tiny_arch();
        let state = NetworkState::<f32>::new(&arch, 2).unwrap();
        let model = new_transfer_model(state.online.encoder, 4).unwrap();
        let path = dir.path().join("t");
        save_transfer(&path, &arch, &model, 0, 1, "h").unwrap();
        fs::write(path.join("classifier.bias.f32"), [0u8; 3]).unwrap();
        assert!(load_transfer(&path).is_err());
        assert!(matches!(load_transfer(&dir.path().join("none")), Err(RunError::MissingArtifact(_))));
    }
}
