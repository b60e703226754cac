//! The `prep → train-csmp → train-diffusion → synthesize → stats` pipeline.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gesture_core::csmp::{CsmpModel, CsmpPair, CsmpTrainer, StepLog, WindowPool};
use gesture_core::diffusion::{
    sample, Denoiser, DiffusionClip, DiffusionTrainer, FeatureStats, SampleOptions,
};
use gesture_core::embedding::{
    fallback_audio_features, fallback_token_vector, joint_stream, replicate_tokens,
    EmbeddingSequence, EMBEDDING_DIM, MOTION_RATE,
};
use gesture_core::motion::{
    detect_speed_anomalies, forward_kinematics_rotations, from_expmap, motion_stats, to_expmap,
    tracked_joints, AnomalyReport, MotionClip, PoseSequence, Skeleton, TPose,
};
use gesture_core::nn::{ModelCheckpoint, Tensor};
use gesture_core::signal::{mute_crosstalk, remove_dc, resample_polyphase, AudioTrack};
use serde::Serialize;

use crate::bvh::{load_bvh, parse_hierarchy, save_bvh, write_hierarchy};
use crate::ckptfile::{file_sha256, load_checkpoint, save_checkpoint};
use crate::config::PipelineConfig;
use crate::embfile::{load_embeddings, save_embeddings};
use crate::manifest::{load_manifest, AgentInputs, ManifestEntry};
use crate::transcript::load_transcript;
use crate::wav::load_wav;

/// Sample rate the audio featurizer expects.
pub const FEATURE_AUDIO_RATE: u32 = 16_000;

const INDEX: &str = "index.tsv";
const ANOMALIES: &str = "anomalies.tsv";
const EXCLUSIONS: &str = "exclusions.txt";
const RESOLVED_CONFIG: &str = "config.toml";
const CLIPS: &str = "clips";

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Reference pose from the config, or identity rotations.
pub fn reference_pose(cfg: &PipelineConfig, skeleton: &Skeleton) -> Result<TPose> {
    match &cfg.motion.tpose {
        None => Ok(TPose::identity(skeleton.len())),
        Some(path) => {
            let clip = load_bvh(path)?;
            if clip.skeleton.len() != skeleton.len() || clip.num_frames() == 0 {
                bail!(
                    "T-pose file {} must hold at least one frame of a {}-joint skeleton",
                    path.display(),
                    skeleton.len()
                );
            }
            Ok(TPose::from_frame(&clip.to_rotation_frames(), 0))
        }
    }
}

fn tpose_tensor(tpose: &TPose) -> Tensor {
    let data = tpose.0.iter().flat_map(|m| m.iter().flatten().copied()).collect();
    Tensor::matrix(tpose.0.len(), 9, data).expect("tpose shape")
}

fn tpose_from_tensor(t: &Tensor) -> Result<TPose> {
    if t.shape().len() != 2 || t.cols() != 9 {
        bail!("stored T-pose has shape {:?}", t.shape());
    }
    Ok(TPose(
        (0..t.rows())
            .map(|r| {
                let v = t.row(r);
                [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
            })
            .collect(),
    ))
}

pub fn pose_features(clip: &MotionClip, tpose: &TPose, root_translation: bool) -> Result<PoseSequence> {
    Ok(to_expmap(&clip.to_rotation_frames(), tpose, root_translation)?)
}

/// DC removal and cross-talk muting on one agent's channel, then
/// conversion to the featurizer's sample rate.
pub fn clean_audio(audio: &AudioTrack, inputs: &AgentInputs, cfg: &PipelineConfig) -> Result<AudioTrack> {
    let transcript = load_transcript(&inputs.transcript)?;
    let speech = transcript.speech_intervals()?;
    let centred = remove_dc(audio, cfg.audio.zero_eps);
    let muted = mute_crosstalk(&centred, &speech, cfg.audio.ramp, cfg.ramp_shape()?)?;
    if muted.sample_rate == FEATURE_AUDIO_RATE {
        return Ok(muted);
    }
    let samples = resample_polyphase(&muted.samples, muted.sample_rate as u64, FEATURE_AUDIO_RATE as u64)?;
    Ok(AudioTrack::new(FEATURE_AUDIO_RATE, samples)?)
}

fn at_motion_rate(seq: EmbeddingSequence) -> Result<EmbeddingSequence> {
    if (seq.rate - MOTION_RATE).abs() < 1e-9 {
        Ok(seq)
    } else {
        Ok(seq.resampled(MOTION_RATE)?)
    }
}

/// The 30 Hz `audio | text` stream for one agent.
pub fn agent_stream(inputs: &AgentInputs, cfg: &PipelineConfig) -> Result<EmbeddingSequence> {
    let audio = match &inputs.audio_embeddings {
        Some(path) => {
            let e = load_embeddings(path)?;
            if e.cols() != EMBEDDING_DIM {
                bail!("{}: audio embeddings have {} columns, expected {EMBEDDING_DIM}", path.display(), e.cols());
            }
            e
        }
        None => {
            let raw = load_wav(&inputs.audio)?;
            let cleaned = clean_audio(&raw, inputs, cfg)
                .with_context(|| format!("preparing {}", inputs.audio.display()))?;
            fallback_audio_features(&cleaned, cfg.embedding.feature_seed)?
        }
    };
    let audio = at_motion_rate(audio)?;
    let frames = audio.rows();
    let text = match &inputs.text_embeddings {
        Some(path) => {
            let e = load_embeddings(path)?;
            if e.cols() != EMBEDDING_DIM || (e.rate - MOTION_RATE).abs() > 1e-9 {
                bail!(
                    "{}: text embeddings must be per-frame at {MOTION_RATE} Hz with {EMBEDDING_DIM} columns",
                    path.display()
                );
            }
            e
        }
        None => {
            let transcript = load_transcript(&inputs.transcript)?;
            let vectors: Vec<Vec<f64>> = transcript
                .tokens()
                .iter()
                .map(|t| fallback_token_vector(&t.text, cfg.embedding.feature_seed, EMBEDDING_DIM))
                .collect();
            replicate_tokens(&transcript, &vectors, EMBEDDING_DIM, MOTION_RATE, frames)?
        }
    };
    Ok(joint_stream(&audio, &text)?)
}

fn check_motion_rate(clip: &MotionClip, path: &Path) -> Result<()> {
    let rate = clip.frame_rate();
    if (rate - MOTION_RATE).abs() > 1e-3 * MOTION_RATE {
        bail!("{}: motion is at {rate:.3} Hz, expected {MOTION_RATE} Hz", path.display());
    }
    Ok(())
}

fn anomaly_lines(file: &str, report: &AnomalyReport) -> String {
    let mut out = String::new();
    for e in &report.entries {
        let _ = writeln!(out, "{file}\t{}\t{}\t{}\t{}\t{}", e.frame, e.joint, e.speed, e.median, e.score);
    }
    out
}

/// Capture-discontinuity report for a clip (empty when it is no longer than the window).
pub fn clip_anomalies(clip: &MotionClip, cfg: &PipelineConfig) -> Result<AnomalyReport> {
    let params = cfg.hampel();
    if clip.num_frames() <= params.window {
        return Ok(AnomalyReport::default());
    }
    let positions = forward_kinematics_rotations(&clip.to_rotation_frames());
    Ok(detect_speed_anomalies(&positions, &tracked_joints(&clip.skeleton), params)?)
}

struct PreparedRow {
    id: String,
    frames: usize,
    flagged: f64,
    anomalies: String,
}

fn prep_clip(entry: &ManifestEntry, out: &Path, cfg: &PipelineConfig) -> Result<PreparedRow> {
    for p in [
        &entry.motion,
        &entry.main.audio,
        &entry.main.transcript,
        &entry.interlocutor.audio,
        &entry.interlocutor.transcript,
    ] {
        if !p.exists() {
            bail!("missing file {}", p.display());
        }
    }
    let motion = load_bvh(&entry.motion)?;
    check_motion_rate(&motion, &entry.motion)?;
    let report = clip_anomalies(&motion, cfg)?;
    let main = agent_stream(&entry.main, cfg).context("main agent")?;
    let inter = agent_stream(&entry.interlocutor, cfg).context("interlocutor")?;
    let frames = motion.num_frames().min(main.rows()).min(inter.rows());
    if frames == 0 {
        bail!("no overlapping frames between motion and speech");
    }
    let dir = out.join(CLIPS).join(&entry.id);
    create_dir(&dir)?;
    let channels = motion.skeleton.channel_count();
    let trimmed = MotionClip::new(
        motion.skeleton.clone(),
        motion.frame_time,
        motion.values[..frames * channels].to_vec(),
    )?;
    save_bvh(&dir.join("motion.bvh"), &trimmed)?;
    save_embeddings(&dir.join("main.emb"), &main.truncated(frames))?;
    save_embeddings(&dir.join("interlocutor.emb"), &inter.truncated(frames))?;
    let anomalies = anomaly_lines(&entry.id, &report);
    write_file(&dir.join(ANOMALIES), &anomalies)?;
    Ok(PreparedRow {
        id: entry.id.clone(),
        frames,
        flagged: report.flagged_fraction(motion.num_frames()),
        anomalies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSummary {
    pub prepared: usize,
    pub total: usize,
    /// `(clip id, error)` for every clip that failed.
    pub failures: Vec<(String, String)>,
    /// Clips whose flagged-frame fraction exceeds the exclusion threshold.
    pub excluded: Vec<String>,
}

impl PrepSummary {
    pub fn line(&self) -> String {
        format!("prepared {}/{}", self.prepared, self.total)
    }
}

/// Prepare every clip in the manifest into `out`. Per-clip failures are
/// collected rather than aborting the run.
pub fn prep(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<PrepSummary> {
    let entries = load_manifest(manifest)?;
    create_dir(out)?;
    write_file(&out.join(RESOLVED_CONFIG), cfg.to_toml())?;
    let mut index = String::from("id\tframes\tflagged_fraction\n");
    let mut anomalies = String::from("file\tframe\tjoint\tspeed\tmedian\tscore\n");
    let mut failures = Vec::new();
    let mut excluded = Vec::new();
    let mut prepared = 0;
    for entry in &entries {
        match prep_clip(entry, out, cfg) {
            Ok(row) => {
                prepared += 1;
                let _ = writeln!(index, "{}\t{}\t{}", row.id, row.frames, row.flagged);
                anomalies.push_str(&row.anomalies);
                if row.flagged > cfg.hampel.exclusion_threshold {
                    excluded.push(row.id);
                }
            }
            Err(e) => failures.push((entry.id.clone(), format!("{e:#}"))),
        }
    }
    write_file(&out.join(INDEX), index)?;
    write_file(&out.join(ANOMALIES), anomalies)?;
    let list: String = excluded.iter().map(|id| format!("{id}\n")).collect();
    write_file(&out.join(EXCLUSIONS), list)?;
    Ok(PrepSummary {
        prepared,
        total: entries.len(),
        failures,
        excluded,
    })
}

/// A prepared clip loaded back from disk.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub id: String,
    pub motion: MotionClip,
    pub main: EmbeddingSequence,
    pub interlocutor: EmbeddingSequence,
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Prepared clips in index order, minus the excluded ids.
pub fn load_prepared(data: &Path, exclude: &[String]) -> Result<Vec<PreparedClip>> {
    let index_path = data.join(INDEX);
    let index = fs::read_to_string(&index_path)
        .with_context(|| format!("{} is not a prepared dataset (run `prep` first)", data.display()))?;
    let mut clips = Vec::new();
    for line in index.lines().skip(1) {
        let Some(id) = line.split('\t').next().filter(|s| !s.is_empty()) else {
            continue;
        };
        if exclude.iter().any(|e| e == id) {
            continue;
        }
        let dir = data.join(CLIPS).join(id);
        clips.push(PreparedClip {
            id: id.to_string(),
            motion: load_bvh(&dir.join("motion.bvh"))?,
            main: load_embeddings(&dir.join("main.emb"))?,
            interlocutor: load_embeddings(&dir.join("interlocutor.emb"))?,
        });
    }
    if clips.is_empty() {
        bail!("no clips left in {} after exclusions", data.display());
    }
    Ok(clips)
}

fn prep_config(data: &Path) -> Result<String> {
    let path = data.join(RESOLVED_CONFIG);
    fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
}

fn normalized_motion(clips: &[PreparedClip], cfg: &PipelineConfig) -> Result<(Vec<PoseSequence>, FeatureStats)> {
    let skeleton = &clips[0].motion.skeleton;
    let tpose = reference_pose(cfg, skeleton)?;
    let mut poses = Vec::with_capacity(clips.len());
    for c in clips {
        if c.motion.skeleton != *skeleton {
            bail!("clip {} uses a different skeleton from clip {}", c.id, clips[0].id);
        }
        poses.push(pose_features(&c.motion, &tpose, cfg.motion.root_translation)?);
    }
    let dim = poses[0].dim();
    let refs: Vec<&[f64]> = poses.iter().map(|p| p.data()).collect();
    let stats = FeatureStats::fit(&refs, dim)?;
    Ok((poses, stats))
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub exclude: Vec<String>,
}

fn log_path(args: &TrainArgs) -> PathBuf {
    args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    })
}

fn open_log(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Contrastive pretraining. Returns the final step counter.
pub fn train_csmp(args: &TrainArgs, cfg: &PipelineConfig) -> Result<u64> {
    let clips = load_prepared(&args.data, &args.exclude)?;
    let (poses, stats) = normalized_motion(&clips, cfg)?;
    let pairs: Vec<CsmpPair> = clips
        .iter()
        .zip(&poses)
        .map(|(c, p)| {
            let frames = p.num_frames().min(c.main.rows());
            CsmpPair {
                frames,
                speech: c.main.data()[..frames * c.main.cols()].to_vec(),
                motion: stats.normalize(&p.data()[..frames * p.dim()]),
            }
        })
        .collect();
    let mut trainer = match &args.resume {
        Some(path) => CsmpTrainer::from_checkpoint(&load_checkpoint(path)?)
            .with_context(|| format!("resuming from {}", path.display()))?,
        None => CsmpTrainer::new(cfg.csmp(poses[0].dim()), args.seed.unwrap_or(cfg.seed))?,
    };
    if trainer.model.config.motion_dim != poses[0].dim() {
        bail!(
            "checkpoint expects {}-d poses, dataset has {}",
            trainer.model.config.motion_dim,
            poses[0].dim()
        );
    }
    let pool = WindowPool::new(&pairs, &trainer.model.config);
    let mut log = open_log(&log_path(args))?;
    for _ in 0..args.steps.unwrap_or(cfg.csmp.train_steps) {
        let StepLog { step, loss, temperature } = trainer.train_step(&pairs, &pool)?;
        writeln!(log, "{step}\t{loss}\t{temperature}")?;
    }
    let mut ck = trainer.checkpoint();
    ck.set("prep.config", prep_config(&args.data)?);
    save_checkpoint(&args.out, &ck)?;
    Ok(trainer.step)
}

#[derive(Debug, Clone, Default)]
pub struct DiffusionArgs {
    pub train: TrainArgs,
    pub csmp: Option<PathBuf>,
    pub guidance_dropout: Option<f64>,
}

fn load_csmp(path: &Path) -> Result<(CsmpModel, ModelCheckpoint)> {
    let ck = load_checkpoint(path)?;
    let model = CsmpModel::from_checkpoint(&ck).with_context(|| format!("loading CSMP model {}", path.display()))?;
    Ok((model, ck))
}

/// Diffusion training on CSMP conditioning. Returns the final step counter.
pub fn train_diffusion(args: &DiffusionArgs, cfg: &PipelineConfig) -> Result<u64> {
    let csmp_path = args.csmp.as_ref().ok_or_else(|| {
        anyhow!("train-diffusion needs a trained CSMP checkpoint: run `train-csmp` first and pass it with --csmp")
    })?;
    if !csmp_path.exists() {
        bail!(
            "CSMP checkpoint {} does not exist: run `train-csmp` first",
            csmp_path.display()
        );
    }
    let (csmp, csmp_ck) = load_csmp(csmp_path)?;
    let t = &args.train;
    let clips = load_prepared(&t.data, &t.exclude)?;
    let (poses, fitted) = normalized_motion(&clips, cfg)?;

    let mut trainer = match &t.resume {
        Some(path) => DiffusionTrainer::from_checkpoint(&load_checkpoint(path)?)
            .with_context(|| format!("resuming from {}", path.display()))?,
        None => {
            let mut opts = cfg.train_options();
            if let Some(p) = args.guidance_dropout {
                opts.guidance.p_drop = p;
            }
            let model_cfg = cfg.denoiser(poses[0].dim(), 2 * csmp.config.projection_dim);
            DiffusionTrainer::new(model_cfg, cfg.schedule()?, fitted, opts, t.seed.unwrap_or(cfg.seed))?
        }
    };
    if trainer.model.config.pose_dim != poses[0].dim() {
        bail!("checkpoint expects {}-d poses, dataset has {}", trainer.model.config.pose_dim, poses[0].dim());
    }
    let mut data = Vec::with_capacity(clips.len());
    for (clip, pose) in clips.iter().zip(&poses) {
        let frames = pose.num_frames().min(clip.main.rows()).min(clip.interlocutor.rows());
        let cond = csmp
            .conditioning_features(&clip.main.truncated(frames), &clip.interlocutor.truncated(frames))
            .with_context(|| format!("CSMP conditioning for clip {}", clip.id))?;
        data.push(DiffusionClip {
            frames,
            pose: trainer.model.stats.normalize(&pose.data()[..frames * pose.dim()]),
            cond: cond.into_data(),
        });
    }
    let mut log = open_log(&log_path(t))?;
    for _ in 0..t.steps.unwrap_or(cfg.diffusion.train_steps) {
        let entry = trainer.train_step(&data)?;
        writeln!(log, "{}\t{}", entry.step, entry.loss)?;
    }
    let mut ck = trainer.checkpoint();
    let skeleton = &clips[0].motion.skeleton;
    ck.set("skeleton.bvh", write_hierarchy(skeleton));
    ck.set("motion.root_translation", cfg.motion.root_translation);
    ck.set("csmp.sha256", file_sha256(csmp_path)?);
    ck.params.insert("tpose".into(), tpose_tensor(&reference_pose(cfg, skeleton)?));
    {
        let key = "prep.config";
        ck.set(key, csmp_ck.get(key)?);
    }
    save_checkpoint(&t.out, &ck)?;
    Ok(trainer.step)
}

#[derive(Debug, Clone, Default)]
pub struct SynthArgs {
    pub csmp: PathBuf,
    pub diffusion: PathBuf,
    pub main: AgentInputs,
    pub interlocutor: AgentInputs,
    pub out: PathBuf,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthMetadata {
    pub seed: u64,
    pub gamma: f64,
    pub frames: usize,
    pub frame_rate: f64,
    pub diffusion_checkpoint_sha256: String,
    pub csmp_checkpoint_sha256: String,
    pub schedule: String,
    pub schedule_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

pub fn metadata_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".meta.toml");
    PathBuf::from(p)
}

/// Speech inputs to BVH. Writes the motion file and a metadata sidecar.
pub fn synthesize(args: &SynthArgs) -> Result<SynthMetadata> {
    let (csmp, _) = load_csmp(&args.csmp).context("stage: load CSMP checkpoint")?;
    let dck = load_checkpoint(&args.diffusion).context("stage: load diffusion checkpoint")?;
    let (model, schedule, _) = Denoiser::from_checkpoint(&dck).context("stage: load diffusion model")?;
    let prep_cfg = PipelineConfig::parse(dck.get("prep.config")?).context("stage: stored preparation config")?;
    let skeleton = parse_hierarchy(dck.get("skeleton.bvh")?).context("stage: stored skeleton")?;
    let root_translation: bool = dck.parse("motion.root_translation")?;
    let tpose = tpose_from_tensor(
        dck.params.get("tpose").ok_or_else(|| anyhow!("diffusion checkpoint has no T-pose"))?,
    )?;

    let main = agent_stream(&args.main, &prep_cfg).context("stage: main agent embeddings")?;
    let inter = agent_stream(&args.interlocutor, &prep_cfg).context("stage: interlocutor embeddings")?;
    let frames = main.rows().min(inter.rows());
    let cond = csmp
        .conditioning_features(&main.truncated(frames), &inter.truncated(frames))
        .context("stage: CSMP conditioning")?;
    if cond.cols() != model.config.cond_dim {
        bail!(
            "stage: conditioning has {} columns, diffusion model expects {}",
            cond.cols(),
            model.config.cond_dim
        );
    }
    let gamma = args.gamma.unwrap_or(1.0);
    let seed = args.seed.unwrap_or(0);
    let opts = SampleOptions {
        gamma,
        seed,
        crossfade: prep_cfg.diffusion.crossfade,
    };
    let x = sample(&model, &schedule, cond.data(), frames, &opts).context("stage: diffusion sampling")?;
    let pose = PoseSequence::new(skeleton, MOTION_RATE, root_translation, model.stats.denormalize(&x))?;
    let rotations = from_expmap(&pose, &tpose).context("stage: pose decoding")?;
    save_bvh(&args.out, &rotations.to_motion_clip())?;

    let meta = SynthMetadata {
        seed,
        gamma,
        frames,
        frame_rate: MOTION_RATE,
        diffusion_checkpoint_sha256: file_sha256(&args.diffusion)?,
        csmp_checkpoint_sha256: file_sha256(&args.csmp)?,
        schedule: schedule.kind.name().into(),
        schedule_steps: schedule.steps(),
        beta_start: schedule.betas()[0],
        beta_end: schedule.betas()[schedule.steps() - 1],
    };
    write_file(&metadata_path(&args.out), toml::to_string(&meta)?)?;
    Ok(meta)
}

/// Tab-separated statistics, one row per file.
pub fn stats_report(files: &[PathBuf], cfg: &PipelineConfig) -> Result<String> {
    let params = cfg.stats();
    let mut out = gesture_core::motion::MotionStats::header(params.bins);
    out.push('\n');
    for f in files {
        let clip = load_bvh(f)?;
        let positions = forward_kinematics_rotations(&clip.to_rotation_frames());
        let s = motion_stats(&clip.skeleton, &positions, params)
            .with_context(|| format!("statistics for {}", f.display()))?;
        out.push_str(&s.to_row(&f.display().to_string()));
        out.push('\n');
    }
    Ok(out)
}
