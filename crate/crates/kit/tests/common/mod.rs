#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gesture_kit::config::PipelineConfig;
use gesture_kit::demo::{write_demo_corpus, DemoOptions};
use gesture_kit::manifest::AgentInputs;
use gesture_kit::pipeline::{self, DiffusionArgs, SynthArgs, TrainArgs};

pub const CLIPS: usize = 5;
pub const SECONDS: f64 = 8.0;
pub const SPIKE_CLIP: usize = 2;

/// Desk-scale model sizes; everything else stays at the defaults.
pub fn small_config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig {
        seed,
        ..Default::default()
    };
    c.csmp.context = 60;
    c.csmp.hop = 30;
    c.csmp.model_dim = 16;
    c.csmp.heads = 2;
    c.csmp.layers = 1;
    c.csmp.projection_dim = 16;
    c.csmp.batch_size = 8;
    c.csmp.lr = 1e-3;
    c.csmp.train_steps = 12;
    c.diffusion.steps = 50;
    c.diffusion.beta_start = 1e-3;
    c.diffusion.beta_end = 0.2;
    c.diffusion.channels = 16;
    c.diffusion.blocks = 2;
    c.diffusion.transformer_layers = 1;
    c.diffusion.heads = 2;
    c.diffusion.window = 60;
    c.diffusion.step_embed_dim = 16;
    c.diffusion.step_hidden = 32;
    c.diffusion.batch_size = 4;
    c.diffusion.lr = 1e-3;
    c.diffusion.train_steps = 12;
    c.diffusion.crossfade = 10;
    c
}

pub struct Run {
    pub corpus: PathBuf,
    pub data: PathBuf,
    pub csmp: PathBuf,
    pub diffusion: PathBuf,
    pub bvh: PathBuf,
}

pub fn corpus(root: &Path) -> PathBuf {
    let opts = DemoOptions {
        clips: CLIPS,
        seconds: SECONDS,
        seed: 11,
        spike_clip: Some(SPIKE_CLIP),
    };
    write_demo_corpus(&root.join("corpus"), &opts).unwrap()
}

pub fn inputs(corpus: &Path, clip: usize, who: &str) -> AgentInputs {
    let dir = corpus.join(format!("clip{clip:02}"));
    AgentInputs {
        audio: dir.join(format!("{who}.wav")),
        transcript: dir.join(format!("{who}.tsv")),
        audio_embeddings: None,
        text_embeddings: None,
    }
}

pub fn train_args(data: &Path, out: &Path) -> TrainArgs {
    TrainArgs {
        data: data.into(),
        out: out.into(),
        log: None,
        resume: None,
        steps: None,
        seed: None,
        exclude: Vec::new(),
    }
}

pub fn synth_args(run: &Run, clip: usize, out: &Path, gamma: Option<f64>, seed: u64) -> SynthArgs {
    SynthArgs {
        csmp: run.csmp.clone(),
        diffusion: run.diffusion.clone(),
        main: inputs(&run.corpus, clip, "main"),
        interlocutor: inputs(&run.corpus, clip, "interloc"),
        out: out.into(),
        gamma,
        seed: Some(seed),
    }
}

/// The whole pipeline through synthesis of clip 0, under `root`.
pub fn run_pipeline(root: &Path, cfg: &PipelineConfig) -> Run {
    let manifest = corpus(root);
    let data = root.join("data");
    let summary = pipeline::prep(&manifest, &data, cfg).unwrap();
    assert_eq!(summary.line(), format!("prepared {CLIPS}/{CLIPS}"));
    let csmp = root.join("csmp.ckpt");
    pipeline::train_csmp(&train_args(&data, &csmp), cfg).unwrap();
    let diffusion = root.join("diffusion.ckpt");
    let args = DiffusionArgs {
        train: train_args(&data, &diffusion),
        csmp: Some(csmp.clone()),
        guidance_dropout: None,
    };
    pipeline::train_diffusion(&args, cfg).unwrap();
    let run = Run {
        corpus: manifest.parent().unwrap().to_path_buf(),
        data,
        csmp,
        diffusion,
        bvh: root.join("out.bvh"),
    };
    pipeline::synthesize(&synth_args(&run, 0, &run.bvh, None, 5)).unwrap();
    run
}

pub fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}
