//! Argument parsing and command dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::compare;
use crate::config::RunConfig;
use crate::error::{exit_code, Result, RunError};
use crate::pipeline::{self, EncoderSource, EvalModel, PretrainOptions};

#[derive(Debug, Parser)]
#[command(name = "byel", version, about = "Emotion-aware bootstrap pre-training on the ToyEmotions benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Default values to start from: desk or paper.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    /// Override any config key, e.g. `--set pretrain_epochs=10`. Values are
    /// read as JSON, falling back to a plain string.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the source and target image trees and their manifests.
    GenerateData,
    /// Phase 1 on the source domain.
    Pretrain {
        /// Continue from the latest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this epoch, leaving a checkpoint to resume from.
        #[arg(long)]
        stop_after_epoch: Option<usize>,
    },
    /// Phase 2: fine-tune encoder and classifier, select by target macro F1.
    Transfer {
        /// Pre-training checkpoint directory (default: latest of this run).
        #[arg(long, conflicts_with = "from_scratch")]
        checkpoint: Option<PathBuf>,
        /// Start from a freshly initialized encoder.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Score a transfer checkpoint on the target domain.
    Eval {
        /// Transfer checkpoint directory (default: the run's best).
        #[arg(long, conflicts_with = "debug_oracle")]
        checkpoint: Option<PathBuf>,
        /// Score a model that reads the true labels.
        #[arg(long)]
        debug_oracle: bool,
    },
    /// Supervised-only, BYOL and BYEL arms over several seeds, plus the
    /// pre-training epoch ablation.
    Compare,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| RunError::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            m.insert(k.trim().to_string(), value);
        }
        if let Some(p) = &self.profile {
            m.insert("profile".into(), Value::String(p.clone()));
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), Value::from(s));
        }
        if let Some(d) = &self.run_dir {
            m.insert("run_dir".into(), Value::String(d.to_string_lossy().into_owned()));
        }
        if let Some(d) = &self.data_root {
            m.insert("data_root".into(), Value::String(d.to_string_lossy().into_owned()));
        }
        Ok(m)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let file = self.config.as_deref().map(RunConfig::load_file).transpose()?;
        RunConfig::resolve(file.as_ref(), &self.overrides()?)
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    match &cli.command {
        Command::GenerateData => {
            let s = pipeline::generate_data(&cfg)?;
            print!("{}", pipeline::distribution_table(&s));
        }
        Command::Pretrain { resume, stop_after_epoch } => {
            let opts = PretrainOptions { resume: *resume, stop_after_epoch: *stop_after_epoch };
            let s = pipeline::pretrain(&cfg, &opts)?;
            println!("pre-trained through epoch {} ({} steps)", s.last_epoch, s.steps);
            if let Some((_, dir)) = s.checkpoints.last() {
                println!("checkpoint: {}", dir.display());
            }
        }
        Command::Transfer { checkpoint, from_scratch } => {
            let source = match (checkpoint, from_scratch) {
                (Some(dir), _) => EncoderSource::Checkpoint(dir.clone()),
                (None, true) => EncoderSource::Scratch,
                (None, false) => EncoderSource::Latest,
            };
            let s = pipeline::transfer(&cfg, &source)?;
            println!("best epoch {} macro F1 {:.4}", s.best_epoch, s.best_macro_f1);
            println!("checkpoint: {}", s.checkpoint.display());
        }
        Command::Eval { checkpoint, debug_oracle } => {
            let model = match (checkpoint, debug_oracle) {
                (_, true) => EvalModel::Oracle,
                (Some(dir), false) => EvalModel::Checkpoint(dir.clone()),
                (None, false) => EvalModel::Best,
            };
            let r = pipeline::eval(&cfg, &model)?;
            print!("{}", pipeline::report_markdown(&r));
        }
        Command::Compare => {
            let s = compare::compare(&cfg, |line| eprintln!("{line}"))?;
            print!("{}", compare::render_markdown(&s));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit_code::CONFIG } else { exit_code::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit_code::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
