//! `lsksvd`: train, validate, segment and compare with level-set KSVD.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand};
use lsksvd_core::pipeline::{
    cmd_compare, cmd_segment, cmd_train, cmd_validate, gen_synthetic, BlobLayout, PipelineConfig,
    SynthConfig, KEYS,
};

#[derive(Debug, Parser)]
#[command(
    name = "lsksvd",
    version,
    about = "Level-set KSVD texture segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn foreground and background dictionaries from an annotated image.
    Train {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        fg_mask: PathBuf,
        #[arg(long)]
        bg_mask: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score held-out patches and report the ROC curve and AUC.
    Validate {
        #[arg(long)]
        dict1: PathBuf,
        #[arg(long)]
        dict2: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        fg_mask: PathBuf,
        #[arg(long)]
        bg_mask: PathBuf,
        /// Exit with status 2 when the AUC falls below this value.
        #[arg(long, default_value_t = 0.9)]
        min_auc: f64,
        /// Write the ROC rows here instead of standard output.
        #[arg(long)]
        roc_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Segment an image with trained dictionaries.
    Segment {
        #[command(flatten)]
        io: SegmentIo,
        #[arg(long)]
        gt_mask: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Segment with level-set KSVD and the Chan-Vese baselines and tabulate IoU.
    Compare {
        #[command(flatten)]
        io: SegmentIo,
        #[arg(long)]
        gt_mask: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic textured image with exact region masks.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        /// Number of foreground blobs.
        #[arg(long)]
        blobs: Option<usize>,
        /// Give both textures the same mean colour.
        #[arg(long)]
        iso_mean: bool,
    },
}

#[derive(Debug, Args)]
struct SegmentIo {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    dict1: PathBuf,
    #[arg(long)]
    dict2: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

/// `--config FILE` plus one `--<key> VALUE` flag per configuration key.
#[derive(Debug, Clone, Default)]
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.file {
            Some(path) => {
                PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        for (key, value) in &self.overrides {
            cfg.set(key, value).with_context(|| format!("--{key}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = Self::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        if let Some(path) = m.get_one::<PathBuf>("config") {
            self.file = Some(path.clone());
        }
        for key in KEYS {
            if let Some(value) = m.get_one::<String>(key) {
                self.overrides.push((key, value.clone()));
            }
        }
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let cmd = cmd.arg(
            clap::Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file"),
        );
        KEYS.iter().fold(cmd, |cmd, key| {
            cmd.arg(
                clap::Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .help_heading("Configuration"),
            )
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            image,
            fg_mask,
            bg_mask,
            out_dir,
            config,
        } => {
            let cfg = config.resolve()?;
            let summary = cmd_train(&image, &fg_mask, &bg_mask, &out_dir, &cfg)?;
            print!("{}", summary.to_text());
        }
        Command::Validate {
            dict1,
            dict2,
            image,
            fg_mask,
            bg_mask,
            min_auc,
            roc_out,
            config,
        } => {
            let cfg = config.resolve()?;
            let report = cmd_validate(
                &dict1,
                &dict2,
                &image,
                &fg_mask,
                &bg_mask,
                &cfg,
                roc_out.as_deref(),
            )?;
            if roc_out.is_none() {
                print!("{}", report.roc.to_text());
            }
            println!("auc = {}", report.roc.auc);
            println!("accuracy = {}", report.accuracy);
            println!(
                "test_counts = {},{}",
                report.test_counts.0, report.test_counts.1
            );
            if !report.passes(min_auc) {
                eprintln!("AUC {} is below the gate {min_auc}", report.roc.auc);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Segment {
            io,
            gt_mask,
            config,
        } => {
            let cfg = config.resolve()?;
            let report = cmd_segment(
                &io.image,
                &io.dict1,
                &io.dict2,
                &io.out_dir,
                &cfg,
                gt_mask.as_deref(),
            )?;
            print!("{}", report.to_text());
        }
        Command::Compare {
            io,
            gt_mask,
            config,
        } => {
            let cfg = config.resolve()?;
            let rows = cmd_compare(&io.image, &io.dict1, &io.dict2, &io.out_dir, &cfg, &gt_mask)?;
            println!("method,iou,steps,converged");
            for r in rows {
                println!("{},{},{},{}", r.method, r.iou, r.steps, r.converged);
            }
        }
        Command::Synth {
            out_dir,
            seed,
            width,
            height,
            blobs,
            iso_mean,
        } => {
            let mut cfg = if iso_mean {
                SynthConfig::iso_mean(width, height, seed)
            } else {
                SynthConfig::two_texture(width, height, seed)
            };
            if let (Some(n), BlobLayout::Random { count, .. }) = (blobs, &mut cfg.layout) {
                *count = n;
            }
            let synth = gen_synthetic(&cfg)?;
            synth.save(&out_dir)?;
            println!("image = {}", out_dir.join("image.png").display());
            println!("fg = {}", out_dir.join("fg.png").display());
            println!("bg = {}", out_dir.join("bg.png").display());
            println!("blobs = {}", synth.blobs.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
