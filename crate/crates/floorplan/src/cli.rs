//! Command-line interface. `main` only parses arguments and maps errors to
//! exit codes; everything else is here so tests can drive it directly.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use clap::{Parser, Subcommand};
use floorplan_core::baseline::run_baseline;
use floorplan_core::data::{DensityMap, Floorplan};
use floorplan_nn::checkpoint::{load_model, save_checkpoint, CheckpointMeta};
use floorplan_nn::train::{train, RunFiles};
use floorplan_nn::FloorplanModel;

use crate::annotation::load_annotations;
use crate::annotation::Orientation;
use crate::config::Config;
use crate::corpus::{generate_corpus, load_plans, load_samples, write_plans};
use crate::density::read_density;
use crate::error::{Error, Result};
use crate::render::render_to_file;
use crate::report::build_report;

pub const CHECKPOINT_FILE: &str = "model.safetensors";
pub const LOG_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const NAN_DUMP_FILE: &str = "nan_dump.json";

#[derive(Debug, Parser)]
#[command(name = "floorplan", version, about = "Floorplan reconstruction from point-cloud density maps")]
pub struct Cli {
    /// TOML or JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the data seed (generate) or the model and training seed (train).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic scenes (annotation JSON + 16-bit PNG density map).
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data.scenes`.
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Train a model on a scene directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Validation scenes; the best epoch by room F1 is kept.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Run directory: checkpoint, metrics log and resolved config.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict floorplans for density maps (a file or a directory).
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth and write a JSON report.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the non-learned morphology pipeline on density maps.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw an annotation file as SVG or PNG (chosen by the output extension).
    Render {
        #[arg(long)]
        input: PathBuf,
        /// Density map drawn underneath (PNG output only).
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Density files of a directory (sorted), or the file itself.
fn density_inputs(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    if path.is_file() {
        return Ok(vec![(stem(path), path.to_path_buf())]);
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = e.map_err(|e| Error::io(path, e))?.path();
        let ext = p.extension().and_then(|x| x.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "fpdm")) {
            out.push((stem(&p), p));
        }
    }
    out.sort();
    Ok(out)
}

fn read_maps(path: &Path) -> Result<Vec<(String, DensityMap)>> {
    density_inputs(path)?
        .into_iter()
        .map(|(n, p)| Ok((n, read_density(&p)?)))
        .collect()
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate { out, scenes } => {
            if let Some(s) = cli.seed {
                cfg.data.seed = s;
            }
            if let Some(n) = scenes {
                cfg.data.scenes = *n;
            }
            let names = generate_corpus(out, &cfg.data)?;
            eprintln!("wrote {} scenes to {}", names.len(), out.display());
        }
        Command::Train { data, val, out } => {
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            let mut warnings = Vec::new();
            let train_set: Vec<_> = load_samples(data, &mut warnings)?.into_iter().map(|(_, s)| s).collect();
            let val_set = match val {
                Some(v) => Some(load_samples(v, &mut warnings)?.into_iter().map(|(_, s)| s).collect::<Vec<_>>()),
                None => None,
            };
            warn_all(&warnings);
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            std::fs::write(out.join(CONFIG_FILE), cfg.to_toml()?).map_err(|e| Error::io(out.join(CONFIG_FILE), e))?;
            let model = FloorplanModel::new(cfg.model.clone(), cfg.train.seed, DType::F32, &Device::Cpu)?;
            let files = RunFiles {
                log: Some(out.join(LOG_FILE)),
                checkpoint: None,
                nan_dump: Some(out.join(NAN_DUMP_FILE)),
            };
            let report = train(&model, &cfg.train, &train_set, val_set.as_deref(), &files)?;
            let validation = report.history.get(report.best_epoch).and_then(|h| h.validation);
            let meta = CheckpointMeta::new(&cfg.model, report.best_epoch, validation);
            save_checkpoint(&out.join(CHECKPOINT_FILE), &model, &meta)?;
            match report.best_room_f1 {
                Some(f1) => eprintln!("kept epoch {} (validation room F1 {f1:.3})", report.best_epoch),
                None => eprintln!("trained {} epochs", report.history.len()),
            }
        }
        Command::Infer { checkpoint, input, out } => {
            let expected = cli.config.as_ref().map(|_| &cfg.model);
            let (model, _) = load_model(checkpoint, expected, DType::F32, &Device::Cpu)?;
            let maps = read_maps(input)?;
            let mut plans: Vec<(String, Floorplan)> = Vec::with_capacity(maps.len());
            for chunk in maps.chunks(cfg.train.batch_size.max(1)) {
                let refs: Vec<&DensityMap> = chunk.iter().map(|(_, m)| m).collect();
                let preds = model.predict(&refs, cfg.train.threshold)?;
                plans.extend(chunk.iter().map(|(n, _)| n.clone()).zip(preds));
            }
            write_plans(out, &plans)?;
            eprintln!("wrote {} predictions to {}", plans.len(), out.display());
        }
        Command::Eval { gt, pred, out } => {
            let mut warnings = Vec::new();
            let gts = load_plans(gt, &mut warnings)?;
            let preds = load_plans(pred, &mut warnings)?;
            warn_all(&warnings);
            let mut pairs = Vec::with_capacity(gts.len());
            for (name, g) in &gts {
                let p = preds.iter().find(|(n, _)| n == name).ok_or_else(|| Error::Io {
                    path: pred.join(format!("{name}.json")),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no prediction for this scene"),
                })?;
                pairs.push((name.clone(), g, &p.1));
            }
            let report = build_report(&pairs, &cfg.eval);
            let text = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
            let a = &report.aggregate;
            println!(
                "room F1 {:.3}  corner F1 {:.3}  angle F1 {:.3}  ({} scenes)",
                a.room.f1, a.corner.f1, a.angle.f1, report.scene_count
            );
        }
        Command::Baseline { input, out } => {
            let plans: Vec<(String, Floorplan)> = read_maps(input)?
                .into_iter()
                .map(|(n, m)| (n, run_baseline(&m, &cfg.baseline)))
                .collect();
            write_plans(out, &plans)?;
            eprintln!("wrote {} baseline plans to {}", plans.len(), out.display());
        }
        Command::Render { input, density, out } => {
            let loaded = load_annotations(input, Orientation::AutoCorrect)?;
            warn_all(&loaded.warnings);
            let bg = density.as_deref().map(read_density).transpose()?;
            render_to_file(&loaded.plan, bg.as_ref(), out)?;
        }
    }
    Ok(())
}
