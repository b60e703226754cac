use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gesture_kit::config::PipelineConfig;
use gesture_kit::demo::{write_demo_corpus, DemoOptions};
use gesture_kit::manifest::AgentInputs;
use gesture_kit::pipeline::{self, DiffusionArgs, SynthArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "gesturekit", version, about = "Speech-driven gesture synthesis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML pipeline configuration (defaults apply for anything omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Training {
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Number of optimiser steps to run in this invocation.
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Training log (default: `<out>.log`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Clip ids to leave out, one per line (e.g. `exclusions.txt` from `prep`).
    #[arg(long)]
    exclude_list: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean audio, build embedding streams, align clips and report capture anomalies.
    Prep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hampel window length in frames (odd).
        #[arg(long)]
        hampel_window: Option<usize>,
        /// Hampel threshold in scaled MADs.
        #[arg(long)]
        hampel_threshold: Option<f64>,
        /// Flagged-frame fraction above which a clip is listed for exclusion.
        #[arg(long)]
        exclusion_threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Contrastive speech/motion pretraining.
    TrainCsmp {
        #[command(flatten)]
        train: Training,
        #[command(flatten)]
        common: Common,
    },
    /// Conditional diffusion training on CSMP features.
    TrainDiffusion {
        #[command(flatten)]
        train: Training,
        /// Trained CSMP checkpoint.
        #[arg(long)]
        csmp: Option<PathBuf>,
        /// Probability of replacing the conditioning by the null token.
        #[arg(long)]
        guidance_dropout: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate motion for a pair of speech tracks.
    Synthesize {
        #[arg(long)]
        csmp: PathBuf,
        #[arg(long)]
        diffusion: PathBuf,
        #[arg(long)]
        main_audio: PathBuf,
        #[arg(long)]
        main_transcript: PathBuf,
        #[arg(long)]
        interloc_audio: PathBuf,
        #[arg(long)]
        interloc_transcript: PathBuf,
        #[arg(long)]
        main_audio_emb: Option<PathBuf>,
        #[arg(long)]
        main_text_emb: Option<PathBuf>,
        #[arg(long)]
        interloc_audio_emb: Option<PathBuf>,
        #[arg(long)]
        interloc_text_emb: Option<PathBuf>,
        /// Output BVH; metadata goes next to it as `<out>.meta.toml`.
        #[arg(long)]
        out: PathBuf,
        /// Classifier-free guidance scale.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Motion statistics for BVH files, one tab-separated row per file.
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a small synthetic corpus and its manifest.
    DemoCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        clips: usize,
        #[arg(long, default_value_t = 8.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject a capture spike into this clip.
        #[arg(long)]
        spike_clip: Option<usize>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn resolved(common: &Common) -> Result<PipelineConfig> {
    resolved_from(load_config(common.config.as_ref())?, common.seed)
}

fn resolved_from(mut cfg: PipelineConfig, seed: Option<u64>) -> Result<PipelineConfig> {
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    eprintln!("# resolved configuration\n{}", cfg.to_toml());
    Ok(cfg)
}

fn train_args(t: Training, seed: Option<u64>) -> Result<TrainArgs> {
    let exclude = match &t.exclude_list {
        Some(p) => pipeline::read_id_list(p)?,
        None => Vec::new(),
    };
    Ok(TrainArgs {
        data: t.data,
        out: t.out,
        log: t.log,
        resume: t.resume,
        steps: t.steps,
        seed,
        exclude,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep {
            manifest,
            out,
            hampel_window,
            hampel_threshold,
            exclusion_threshold,
            common,
        } => {
            let mut cfg = load_config(common.config.as_ref())?;
            if let Some(w) = hampel_window {
                cfg.hampel.window = w;
            }
            if let Some(t) = hampel_threshold {
                cfg.hampel.threshold = t;
            }
            if let Some(t) = exclusion_threshold {
                cfg.hampel.exclusion_threshold = t;
            }
            let cfg = resolved_from(cfg, common.seed)?;
            let summary = pipeline::prep(&manifest, &out, &cfg)?;
            for (id, err) in &summary.failures {
                eprintln!("clip {id}: {err}");
            }
            if !summary.excluded.is_empty() {
                eprintln!(
                    "{} clip(s) exceed the anomaly threshold; see {}",
                    summary.excluded.len(),
                    out.join("exclusions.txt").display()
                );
            }
            println!("{}", summary.line());
            if !summary.failures.is_empty() {
                bail!("{} clip(s) failed", summary.failures.len());
            }
        }
        Command::TrainCsmp { train, common } => {
            let cfg = resolved(&common)?;
            let step = pipeline::train_csmp(&train_args(train, common.seed)?, &cfg)?;
            println!("csmp checkpoint at step {step}");
        }
        Command::TrainDiffusion { train, csmp, guidance_dropout, common } => {
            let cfg = resolved(&common)?;
            let args = DiffusionArgs {
                train: train_args(train, common.seed)?,
                csmp,
                guidance_dropout,
            };
            let step = pipeline::train_diffusion(&args, &cfg)?;
            println!("diffusion checkpoint at step {step}");
        }
        Command::Synthesize {
            csmp,
            diffusion,
            main_audio,
            main_transcript,
            interloc_audio,
            interloc_transcript,
            main_audio_emb,
            main_text_emb,
            interloc_audio_emb,
            interloc_text_emb,
            out,
            gamma,
            seed,
        } => {
            let args = SynthArgs {
                csmp,
                diffusion,
                main: AgentInputs {
                    audio: main_audio,
                    transcript: main_transcript,
                    audio_embeddings: main_audio_emb,
                    text_embeddings: main_text_emb,
                },
                interlocutor: AgentInputs {
                    audio: interloc_audio,
                    transcript: interloc_transcript,
                    audio_embeddings: interloc_audio_emb,
                    text_embeddings: interloc_text_emb,
                },
                out,
                gamma,
                seed: Some(seed),
            };
            let meta = pipeline::synthesize(&args)?;
            println!("wrote {} frames to {}", meta.frames, args.out.display());
        }
        Command::Stats { files, out, config } => {
            let cfg = load_config(config.as_ref())?;
            let report = pipeline::stats_report(&files, &cfg)?;
            match out {
                Some(p) => std::fs::write(&p, report).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{report}"),
            }
        }
        Command::DemoCorpus { out, clips, seconds, seed, spike_clip } => {
            let opts = DemoOptions { clips, seconds, seed, spike_clip };
            let manifest = write_demo_corpus(&out, &opts)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
