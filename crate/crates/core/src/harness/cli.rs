//! Command-line front end. Parsing lives here so tests can drive commands
//! without spawning a process.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use super::{compare_reports, emit_report, run_vo, DetectorConfig, ReportFormat, TrajectoryReport, VoConfig};
use crate::data::{synth_generate, Dataset, SyntheticSceneConfig};
use crate::error::{Error, Result};
use crate::learn::{infer_masks, read_checkpoint, read_loss_csv, train, write_checkpoint, write_loss_csv, TrainConfig};
use crate::vision::BinaryMask;

#[derive(Debug, Parser)]
#[command(name = "attnvo", version, about = "Attention-masked monocular visual odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with exact ground truth.
    SynthGen {
        /// Scene config JSON; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the attention networks against IMU proxies.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path; the loss history goes next to it as `<stem>_loss.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write one block mask per frame from a trained checkpoint.
    InferMask {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 0.51)]
        rho: f64,
        /// Image downscale before inference; defaults to the training value.
        #[arg(long)]
        downscale: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run monocular VO and write a JSON report.
    VoRun {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory written by `infer-mask`.
        #[arg(long)]
        masks: Option<PathBuf>,
        /// `fast` or `external:<dir>`.
        #[arg(long, default_value = "fast")]
        detector: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        /// Optional VO config JSON; `--seed` and `--detector` take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Loss history CSV to plot alongside the trajectory SVG.
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Side-by-side comparison of two reports.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, num_args = 2, value_names = ["REPORT_A", "REPORT_B"])]
        compare: Vec<PathBuf>,
        /// CSV table; a Markdown copy is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Parse {
            path: p.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        }),
        None => Ok(T::default()),
    }
}

pub fn parse_detector(spec: &str, threshold_from: &DetectorConfig) -> Result<DetectorConfig> {
    match spec.split_once(':') {
        None if spec == "fast" => Ok(match threshold_from {
            DetectorConfig::Fast { .. } => threshold_from.clone(),
            DetectorConfig::External { .. } => DetectorConfig::default(),
        }),
        Some(("external", dir)) if !dir.is_empty() => Ok(DetectorConfig::External { dir: dir.into() }),
        _ => Err(Error::invalid(format!(
            "detector must be `fast` or `external:<dir>`, got {spec:?}"
        ))),
    }
}

fn mask_stem(frame: usize) -> String {
    format!("mask_{frame:06}")
}

/// Exports one mask per frame as `mask_NNNNNN.pgm` plus JSON sidecar.
pub fn write_masks(dir: &Path, masks: &[BinaryMask]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, m) in masks.iter().enumerate() {
        m.export(dir, &mask_stem(i))?;
    }
    Ok(())
}

pub fn read_masks(dir: &Path, frames: usize) -> Result<Vec<BinaryMask>> {
    (0..frames)
        .map(|i| {
            let p = dir.join(format!("{}.pgm", mask_stem(i)));
            if !p.exists() {
                return Err(Error::NotFound(vec![p]));
            }
            BinaryMask::import(&p)
        })
        .collect()
}

fn loss_path(ckpt: &Path) -> PathBuf {
    let stem = ckpt.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    ckpt.with_file_name(format!("{stem}_loss.csv"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGen { config, out, seed } => {
            let mut cfg: SyntheticSceneConfig = read_json(config.as_deref())?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let scene = synth_generate(&cfg, &out)?;
            log::info!(
                "wrote {} frames to {} ({:.1} visible points per frame)",
                scene.images.len(),
                out.display(),
                scene.mean_visible()
            );
        }
        Command::Train {
            dataset,
            config,
            out,
            seed,
        } => {
            let mut cfg: TrainConfig = read_json(config.as_deref())?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            cfg.validate()?;
            let ds = Dataset::load(&dataset)?;
            let windows = ds.training_windows(cfg.window_size)?;
            log::info!("training on {} windows for {} epochs", windows.len(), cfg.epochs);
            let outcome = train(&cfg, &windows)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_checkpoint(&out, &outcome.params, cfg.rng_seed, Some(&cfg))?;
            write_loss_csv(&loss_path(&out), &outcome.loss_history)?;
        }
        Command::InferMask {
            dataset,
            ckpt,
            rho,
            downscale,
            out,
        } => {
            let (params, header) = read_checkpoint(&ckpt)?;
            let factor = downscale.or(header.train.map(|t| t.downscale)).unwrap_or(1);
            let ds = Dataset::load(&dataset)?;
            let masks = infer_masks(&params, &ds.images, rho, factor)?;
            write_masks(&out, &masks)?;
            log::info!("wrote {} masks to {}", masks.len(), out.display());
        }
        Command::VoRun {
            dataset,
            masks,
            detector,
            seed,
            report,
            config,
            csv,
            svg,
            loss,
        } => {
            let mut cfg: VoConfig = read_json(config.as_deref())?;
            cfg.detector = parse_detector(&detector, &cfg.detector)?;
            cfg.seed = seed;
            let ds = Dataset::load(&dataset)?;
            let masks = masks.map(|dir| read_masks(&dir, ds.images.len())).transpose()?;
            let (_, rep) = run_vo(&ds, &cfg, masks.as_deref())?;
            emit_report(&rep, ReportFormat::Json, &report, None)?;
            if let Some(p) = csv {
                emit_report(&rep, ReportFormat::Csv, &p, None)?;
            }
            if let Some(p) = svg {
                let history = loss.map(|l| read_loss_csv(&l)).transpose()?;
                emit_report(&rep, ReportFormat::Svg, &p, history.as_deref())?;
            }
            println!("{}", rep.to_csv());
        }
        Command::Evaluate { dataset, compare, out } => {
            let ds = Dataset::load(&dataset)?;
            let load = |p: &Path| -> Result<TrajectoryReport> {
                TrajectoryReport::from_json(&fs::read_to_string(p)?).map_err(|e| Error::Parse {
                    path: p.to_path_buf(),
                    line: 0,
                    msg: e.to_string(),
                })
            };
            let (a, b) = (load(&compare[0])?, load(&compare[1])?);
            for (r, p) in [(&a, &compare[0]), (&b, &compare[1])] {
                if r.frames != ds.images.len() {
                    return Err(Error::invalid(format!(
                        "{} covers {} frames, dataset has {}",
                        p.display(),
                        r.frames,
                        ds.images.len()
                    )));
                }
            }
            let table = compare_reports(&a, &b)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, table.to_csv())?;
            fs::write(out.with_extension("md"), table.to_markdown())?;
            println!("{}", table.to_markdown());
        }
    }
    Ok(())
}
