//! Three-arm comparison (supervised-only, BYOL, BYEL) over several seeds,
//! plus the pre-training epoch ablation on the BYEL arm.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::{Objective, RunConfig};
use crate::error::{IoContext, Result};
use crate::metrics::write_json;
use crate::pipeline::{self, ablation_epochs, EncoderSource, PretrainOptions, RunPaths};

pub const ARMS: [&str; 3] = ["supervised", "byol", "byel"];

/// Gap below which an ordering violation is flagged rather than failed.
pub const TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub macro_f1: f64,
    pub best_epoch: usize,
    pub transfer_config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub epoch: usize,
    pub seed: u64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    /// Violated by at most the tolerance.
    Flagged,
    Violated,
}

impl Verdict {
    /// Verdict for the claim `a >= b`.
    pub fn of(a: f64, b: f64) -> Self {
        if a >= b {
            Verdict::Holds
        } else if b - a <= TOLERANCE {
            Verdict::Flagged
        } else {
            Verdict::Violated
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Flagged => "flagged",
            Verdict::Violated => "violated",
        }
    }

    fn worst(a: Self, b: Self) -> Self {
        match (a, b) {
            (Verdict::Violated, _) | (_, Verdict::Violated) => Verdict::Violated,
            (Verdict::Flagged, _) | (_, Verdict::Flagged) => Verdict::Flagged,
            _ => Verdict::Holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmResult>,
    /// Median macro F1 per arm, in `ARMS` order.
    pub medians: Vec<(String, f64)>,
    pub byel_vs_byol: Verdict,
    pub byel_vs_supervised: Verdict,
    pub ablation: Vec<AblationResult>,
    /// `(epoch, median)` in epoch order.
    pub ablation_medians: Vec<(usize, f64)>,
    pub ablation_monotone: Verdict,
    pub transfer_hashes_equal: bool,
}

impl CompareSummary {
    pub fn median_of(&self, arm: &str) -> f64 {
        self.medians.iter().find(|(a, _)| a == arm).map_or(f64::NAN, |(_, m)| *m)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// Per-arm seeds: the master seed and its successors.
pub fn arm_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.compare_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Non-decreasing check across consecutive ablation medians.
pub fn monotone_verdict(medians: &[f64]) -> Verdict {
    medians.windows(2).map(|w| Verdict::of(w[1], w[0])).fold(Verdict::Holds, Verdict::worst)
}

/// Each seed renders its own benchmark under `compare/seed_<s>/data`, so the
/// frozen config of every arm reproduces that arm on its own.
fn arm_config(cfg: &RunConfig, seed: u64, name: &str, objective: Objective) -> RunConfig {
    let seed_dir = cfg.run_dir.join("compare").join(format!("seed_{seed}"));
    RunConfig { seed, objective, data_root: seed_dir.join("data"), run_dir: seed_dir.join(name), ..cfg.clone() }
}

/// Runs every arm, writes `report/compare.{csv,md,json}` and
/// `report/ablation.csv`, and returns the summary.
pub fn compare(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<CompareSummary> {
    cfg.freeze()?;
    let seeds = arm_seeds(cfg);
    let epochs = ablation_epochs(cfg);
    let mut arms = Vec::new();
    let mut ablation = Vec::new();
    for &seed in &seeds {
        let sup = arm_config(cfg, seed, "supervised", Objective::Byel);
        pipeline::generate_data(&sup)?;
        let s = pipeline::transfer(&sup, &EncoderSource::Scratch)?;
        progress(&format!("seed {seed} supervised macro F1 {:.4}", s.best_macro_f1));
        arms.push(ArmResult {
            arm: "supervised".into(),
            seed,
            macro_f1: s.best_macro_f1,
            best_epoch: s.best_epoch,
            transfer_config_hash: sup.transfer_hash(),
        });

        for (name, objective) in [("byol", Objective::Byol), ("byel", Objective::Byel)] {
            let arm = arm_config(cfg, seed, name, objective);
            let pre = pipeline::pretrain(&arm, &PretrainOptions::default())?;
            let t = pipeline::transfer(&arm, &EncoderSource::Latest)?;
            progress(&format!("seed {seed} {name} macro F1 {:.4}", t.best_macro_f1));
            arms.push(ArmResult {
                arm: name.into(),
                seed,
                macro_f1: t.best_macro_f1,
                best_epoch: t.best_epoch,
                transfer_config_hash: arm.transfer_hash(),
            });
            if objective != Objective::Byel {
                continue;
            }
            for &e in &epochs {
                let score = if e == pre.last_epoch {
                    t.best_macro_f1
                } else {
                    let ck = pre
                        .checkpoints
                        .iter()
                        .find(|(ep, _)| *ep == e)
                        .map(|(_, p)| p.clone())
                        .expect("ablation epochs are always checkpointed");
                    let abl = RunConfig { run_dir: arm.run_dir.join(format!("ablation_e{e:04}")), ..arm.clone() };
                    let r = pipeline::transfer(&abl, &EncoderSource::Checkpoint(ck))?;
                    r.best_macro_f1
                };
                progress(&format!("seed {seed} byel epoch {e} macro F1 {score:.4}"));
                ablation.push(AblationResult { epoch: e, seed, macro_f1: score });
            }
        }
    }

    let medians: Vec<(String, f64)> = ARMS
        .iter()
        .map(|a| {
            let v: Vec<f64> = arms.iter().filter(|r| r.arm == *a).map(|r| r.macro_f1).collect();
            (a.to_string(), median(&v))
        })
        .collect();
    let ablation_medians: Vec<(usize, f64)> = epochs
        .iter()
        .map(|&e| {
            let v: Vec<f64> = ablation.iter().filter(|r| r.epoch == e).map(|r| r.macro_f1).collect();
            (e, median(&v))
        })
        .collect();
    let med = |a: &str| medians.iter().find(|(n, _)| n == a).map(|(_, m)| *m).unwrap_or(f64::NAN);
    let summary = CompareSummary {
        seeds,
        transfer_hashes_equal: arms.windows(2).all(|w| w[0].transfer_config_hash == w[1].transfer_config_hash),
        byel_vs_byol: Verdict::of(med("byel"), med("byol")),
        byel_vs_supervised: Verdict::of(med("byel"), med("supervised")),
        ablation_monotone: monotone_verdict(&ablation_medians.iter().map(|(_, m)| *m).collect::<Vec<_>>()),
        arms,
        medians,
        ablation,
        ablation_medians,
    };
    write_outputs(cfg, &summary)?;
    Ok(summary)
}

fn write_outputs(cfg: &RunConfig, s: &CompareSummary) -> Result<()> {
    let paths = RunPaths::new(&cfg.run_dir);
    let report_dir = paths.report("");
    fs::create_dir_all(&report_dir).ctx(|| format!("creating {}", report_dir.display()))?;

    let mut csv = String::from("arm,seed,macro_f1,best_epoch,transfer_config_hash\n");
    for r in &s.arms {
        csv.push_str(&format!("{},{},{:?},{},{}\n", r.arm, r.seed, r.macro_f1, r.best_epoch, r.transfer_config_hash));
    }
    write_text(paths.report("compare.csv"), csv)?;

    let mut abl = String::from("epoch,seed,macro_f1\n");
    for r in &s.ablation {
        abl.push_str(&format!("{},{},{:?}\n", r.epoch, r.seed, r.macro_f1));
    }
    write_text(paths.report("ablation.csv"), abl)?;
    write_text(paths.report("compare.md"), render_markdown(s))?;
    write_json(&paths.report("compare.json"), s)
}

fn write_text(path: PathBuf, text: String) -> Result<()> {
    fs::write(&path, text).ctx(|| format!("writing {}", path.display()))
}

pub fn render_markdown(s: &CompareSummary) -> String {
    let mut md = String::from("## Target macro F1 by arm\n\n| arm |");
    for seed in &s.seeds {
        md.push_str(&format!(" seed {seed} |"));
    }
    md.push_str(" median |\n|---|");
    md.push_str(&"---|".repeat(s.seeds.len() + 1));
    md.push('\n');
    for (arm, m) in &s.medians {
        md.push_str(&format!("| {arm} |"));
        for seed in &s.seeds {
            let v = s.arms.iter().find(|r| &r.arm == arm && r.seed == *seed).map_or(f64::NAN, |r| r.macro_f1);
            md.push_str(&format!(" {v:.4} |"));
        }
        md.push_str(&format!(" {m:.4} |\n"));
    }
    md.push_str(&format!(
        "\nBYEL >= BYOL: {}\nBYEL >= supervised: {}\n",
        s.byel_vs_byol.as_str(),
        s.byel_vs_supervised.as_str()
    ));
    let hash = s.arms.first().map_or("", |r| r.transfer_config_hash.as_str());
    md.push_str(&format!(
        "Transfer config hash: {hash} (identical across arms: {})\n",
        if s.transfer_hashes_equal { "yes" } else { "no" }
    ));

    md.push_str("\n## Pre-training epoch ablation (BYEL)\n\n| epoch |");
    for seed in &s.seeds {
        md.push_str(&format!(" seed {seed} |"));
    }
    md.push_str(" median |\n|---|");
    md.push_str(&"---|".repeat(s.seeds.len() + 1));
    md.push('\n');
    for (e, m) in &s.ablation_medians {
        md.push_str(&format!("| {e} |"));
        for seed in &s.seeds {
            let v = s.ablation.iter().find(|r| r.epoch == *e && r.seed == *seed).map_or(f64::NAN, |r| r.macro_f1);
            md.push_str(&format!(" {v:.4} |"));
        }
        md.push_str(&format!(" {m:.4} |\n"));
    }
    md.push_str(&format!("\nNon-decreasing over epochs: {}\n", s.ablation_monotone.as_str()));
    md
}
