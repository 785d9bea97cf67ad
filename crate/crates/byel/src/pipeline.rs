//! The operator commands as library functions. Every output lands under
//! `run_dir` (or `data_root` for generated data).

use std::fs;
use std::path::{Path, PathBuf};

use byel_core::data::{class_distribution, generate_toy_benchmark, DatasetManifest, Image};
use byel_core::eval::{confusion, evaluate, MetricsReport};
use byel_core::nn::NetworkState;
use byel_core::optim::OptimizerState;
use byel_core::pretrain::Pretrainer;
use byel_core::transfer::run_transfer;
use byel_core::{Domain, EmotionLabel, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, load_encoder, load_pretrain, load_transfer, read_header};
use crate::config::RunConfig;
use crate::error::{IoContext, Result, RunError};
use crate::imageio::{load_images, save_png};
use crate::manifest::{load_manifest, save_manifest};
use crate::metrics::{self, BestPointer, ReportJson};

pub fn manifest_path(data_root: &Path, domain: Domain) -> PathBuf {
    data_root.join(format!("{domain}.jsonl"))
}

/// Standard locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(run_dir: &Path) -> Self {
        Self { root: run_dir.to_path_buf() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn pretrain_metrics(&self) -> PathBuf {
        self.root.join("metrics/pretrain.csv")
    }

    pub fn transfer_metrics(&self) -> PathBuf {
        self.root.join("metrics/transfer.csv")
    }

    pub fn pretrain_checkpoint(&self, epoch: usize) -> PathBuf {
        self.root.join(format!("checkpoints/pretrain/epoch_{epoch:04}"))
    }

    pub fn pretrain_latest(&self) -> PathBuf {
        self.root.join("checkpoints/pretrain/latest.json")
    }

    pub fn transfer_best(&self) -> PathBuf {
        self.root.join("checkpoints/transfer/best")
    }

    pub fn best_pointer(&self) -> PathBuf {
        self.root.join("checkpoints/transfer/best.json")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("report").join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatestPointer {
    pub checkpoint: String,
    pub epoch: usize,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub source_counts: [usize; NUM_CLASSES],
    pub target_counts: [usize; NUM_CLASSES],
}

/// Class-count table with one row per emotion and a total row.
pub fn distribution_table(s: &GenerateSummary) -> String {
    let mut out = format!("{:<10} {:>7} {:>7}\n", "class", "source", "target");
    for l in EmotionLabel::all() {
        out.push_str(&format!("{:<10} {:>7} {:>7}\n", l.name(), s.source_counts[l.index()], s.target_counts[l.index()]));
    }
    let total = |c: &[usize; NUM_CLASSES]| c.iter().sum::<usize>();
    out.push_str(&format!("{:<10} {:>7} {:>7}\n", "total", total(&s.source_counts), total(&s.target_counts)));
    out
}

/// Renders both domains to PNG trees plus one manifest per domain. Files are
/// only rewritten when their content changes.
pub fn generate_data(cfg: &RunConfig) -> Result<GenerateSummary> {
    let bench = generate_toy_benchmark(&cfg.toy_spec())?;
    let root = &cfg.data_root;
    for dom in [&bench.source, &bench.target] {
        for (entry, img) in dom.manifest.entries().iter().zip(&dom.images) {
            let path = root.join(&entry.image);
            if crate::imageio::load_png(&path).ok().as_ref() == Some(&Image::from_u8(img.height(), img.width(), &img.to_u8())?) {
                continue;
            }
            save_png(&path, img)?;
        }
    }
    for (domain, dom) in [(Domain::Source, &bench.source), (Domain::Target, &bench.target)] {
        let path = manifest_path(root, domain);
        let text = crate::manifest::render_manifest(&dom.manifest);
        if fs::read_to_string(&path).ok().as_deref() != Some(text.as_str()) {
            save_manifest(&path, &dom.manifest)?;
        }
    }
    Ok(GenerateSummary {
        source_counts: class_distribution(&bench.source.manifest),
        target_counts: class_distribution(&bench.target.manifest),
    })
}

/// A manifest and its decoded images.
pub struct Split {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
    pub labels: Vec<EmotionLabel>,
}

pub fn load_split(cfg: &RunConfig, domain: Domain) -> Result<Split> {
    let manifest = load_manifest(&manifest_path(&cfg.data_root, domain))?;
    if !manifest.all_in_domain(domain) {
        return Err(RunError::Config(format!("{domain} manifest lists entries from another domain")));
    }
    let images = load_images(&cfg.data_root, &manifest, cfg.image_size)?;
    let labels = manifest.labels();
    Ok(Split { manifest, images, labels })
}

/// Epochs that must be checkpointed for the epoch ablation.
pub fn ablation_epochs(cfg: &RunConfig) -> Vec<usize> {
    let mut v: Vec<usize> = cfg
        .ablation_fractions
        .iter()
        .map(|f| ((f * cfg.pretrain_epochs as f64).round() as usize).clamp(1, cfg.pretrain_epochs))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Debug, Clone, Default)]
pub struct PretrainOptions {
    /// Continue from the latest checkpoint in `run_dir`.
    pub resume: bool,
    /// Stop after this epoch, as if interrupted.
    pub stop_after_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub checkpoints: Vec<(usize, PathBuf)>,
    pub last_epoch: usize,
    pub steps: u64,
}

pub fn pretrain(cfg: &RunConfig, opts: &PretrainOptions) -> Result<PretrainSummary> {
    let paths = RunPaths::new(&cfg.run_dir);
    let split = load_split(cfg, Domain::Source)?;
    let pre_cfg = cfg.pretrain_config()?;
    let trainer = Pretrainer::new(pre_cfg, &split.images, &split.labels)?;
    let opt_cfg = cfg.pretrain_optimizer_config()?;
    let hash = cfg.hash();
    let arch = cfg.arch();

    let (mut state, mut opt, start) = if opts.resume {
        let ptr: LatestPointer = metrics::read_json(&paths.pretrain_latest())?;
        let ck = load_pretrain(&cfg.run_dir.join(&ptr.checkpoint))?;
        if ck.header.config_hash != hash {
            return Err(RunError::Config("checkpoint was written under a different config".into()));
        }
        metrics::truncate_pretrain(&paths.pretrain_metrics(), ck.header.step)?;
        (ck.state, ck.optimizer, ck.header.epoch + 1)
    } else {
        let metrics_path = paths.pretrain_metrics();
        if metrics_path.exists() {
            fs::remove_file(&metrics_path).ctx(|| format!("removing {}", metrics_path.display()))?;
        }
        (NetworkState::<f32>::new(&arch, cfg.seed)?, OptimizerState::new(), 1)
    };
    cfg.freeze()?;

    let ablation = ablation_epochs(cfg);
    let stop = opts.stop_after_epoch.unwrap_or(cfg.pretrain_epochs).min(cfg.pretrain_epochs);
    let mut saved = Vec::new();
    let mut last_good: Option<PathBuf> = None;
    let mut last_epoch = start - 1;
    for epoch in start..=stop {
        let records = match trainer.run_epoch(&mut state, &mut opt, epoch) {
            Ok(r) => r,
            Err(byel_core::Error::NonFinite(_)) => return Err(RunError::NonFiniteLoss { last_good }),
            Err(e) => return Err(e.into()),
        };
        if records.iter().any(|r| !r.loss.is_finite()) {
            return Err(RunError::NonFiniteLoss { last_good });
        }
        metrics::append_pretrain(&paths.pretrain_metrics(), &records)?;
        last_epoch = epoch;
        if trainer.is_checkpoint_epoch(epoch) || ablation.contains(&epoch) || epoch == stop {
            let dir = paths.pretrain_checkpoint(epoch);
            checkpoint::save_pretrain(&dir, &arch, &state, &opt, &opt_cfg, cfg.pretrain_lr, epoch, &hash)?;
            let rel = dir.strip_prefix(&cfg.run_dir).unwrap_or(&dir).to_string_lossy().into_owned();
            metrics::write_json(&paths.pretrain_latest(), &LatestPointer { checkpoint: rel, epoch, step: state.step })?;
            saved.push((epoch, dir.clone()));
            last_good = Some(dir);
        }
    }
    Ok(PretrainSummary { checkpoints: saved, last_epoch, steps: state.step })
}

/// Where phase 2 takes its encoder from.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderSource {
    /// The latest pre-training checkpoint of this run.
    Latest,
    Checkpoint(PathBuf),
    /// Fresh initialization, for the supervised-only baseline.
    Scratch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSummary {
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub checkpoint: PathBuf,
}

pub fn transfer(cfg: &RunConfig, source: &EncoderSource) -> Result<TransferSummary> {
    let paths = RunPaths::new(&cfg.run_dir);
    let encoder = match source {
        EncoderSource::Scratch => NetworkState::<f32>::new(&cfg.arch(), cfg.seed)?.online.encoder,
        EncoderSource::Checkpoint(dir) => load_encoder(dir)?.1,
        EncoderSource::Latest => {
            let ptr: LatestPointer = metrics::read_json(&paths.pretrain_latest())?;
            load_encoder(&cfg.run_dir.join(ptr.checkpoint))?.1
        }
    };
    if encoder.image_size != cfg.image_size {
        return Err(RunError::Config("checkpoint image size differs from the config".into()));
    }
    let train = load_split(cfg, Domain::Source)?;
    let val = load_split(cfg, Domain::Target)?;
    let tcfg = cfg.transfer_config()?;
    cfg.freeze()?;
    let out = run_transfer(&tcfg, encoder, (&train.images, &train.labels), (&val.images, &val.labels), |_, _| Ok(()))
        .map_err(|e| match e {
            byel_core::Error::NonFinite(_) => RunError::NonFiniteLoss { last_good: None },
            other => other.into(),
        })?;
    metrics::write_transfer(&paths.transfer_metrics(), &out.history)?;
    let steps_per_epoch = train.images.len().div_ceil(tcfg.batch_size) as u64;
    let dir = paths.transfer_best();
    checkpoint::save_transfer(
        &dir,
        &cfg.arch(),
        &out.best_model,
        steps_per_epoch * out.best_epoch as u64,
        out.best_epoch,
        &cfg.hash(),
    )?;
    let rel = dir.strip_prefix(&cfg.run_dir).unwrap_or(&dir).to_string_lossy().into_owned();
    metrics::write_json(
        &paths.best_pointer(),
        &BestPointer { checkpoint: rel, epoch: out.best_epoch, macro_f1: out.best_macro_f1 },
    )?;
    Ok(TransferSummary { best_epoch: out.best_epoch, best_macro_f1: out.best_macro_f1, checkpoint: dir })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalModel {
    /// The run's selected transfer checkpoint.
    Best,
    Checkpoint(PathBuf),
    /// Debug model that predicts the ground-truth label of every image.
    Oracle,
}

/// Scores a model on the target domain and writes `report/eval.json`,
/// `report/eval.md` and `report/predictions.jsonl`.
pub fn eval(cfg: &RunConfig, model: &EvalModel) -> Result<MetricsReport> {
    let paths = RunPaths::new(&cfg.run_dir);
    let split = load_split(cfg, Domain::Target)?;
    let policy = cfg.transfer_config()?.absent_class_policy;
    let (report, preds, name) = match model {
        EvalModel::Oracle => {
            let cm = confusion(&split.labels, &split.labels)?;
            (MetricsReport::from_confusion(cm, policy), split.labels.clone(), "oracle".to_string())
        }
        EvalModel::Best | EvalModel::Checkpoint(_) => {
            let dir = match model {
                EvalModel::Checkpoint(d) => d.clone(),
                _ => {
                    let ptr: BestPointer = metrics::read_json(&paths.best_pointer())?;
                    cfg.run_dir.join(ptr.checkpoint)
                }
            };
            let header = read_header(&dir)?;
            if header.image_size != cfg.image_size {
                return Err(RunError::Config("checkpoint image size differs from the config".into()));
            }
            let ck = load_transfer(&dir)?;
            let (report, preds) = evaluate(&ck.model, &split.images, &split.labels, 256, policy)?;
            (report, preds, dir.display().to_string())
        }
    };
    let images: Vec<String> = split.manifest.entries().iter().map(|e| e.image.clone()).collect();
    metrics::write_json(&paths.report("eval.json"), &ReportJson::new(&name, &report))?;
    metrics::write_predictions(&paths.report("predictions.jsonl"), &images, &split.labels, &preds)?;
    let md = report_markdown(&report);
    fs::write(paths.report("eval.md"), md).ctx(|| "writing eval.md".into())?;
    Ok(report)
}

pub fn report_markdown(r: &MetricsReport) -> String {
    let mut s = String::from("| class | precision | recall | F1 |\n|---|---|---|---|\n");
    for l in EmotionLabel::all() {
        let k = l.index();
        s.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} |\n",
            l.name(),
            r.per_class_precision[k],
            r.per_class_recall[k],
            r.per_class_f1[k]
        ));
    }
    s.push_str(&format!("\nmacro F1: {:.4}\n", r.macro_f1));
    s
}
