//! Pipeline configuration as TOML. Every field has a default; unknown keys
//! are rejected so typos cannot silently fall back to defaults.

use std::path::Path;

use gesture_core::csmp::CsmpConfig;
use gesture_core::diffusion::{DenoiserConfig, GuidanceParams, NoiseSchedule, ScheduleKind, TrainOptions};
use gesture_core::embedding::{DEFAULT_FEATURE_SEED, EMBEDDING_DIM};
use gesture_core::motion::HampelParams;
use gesture_core::motion::StatsParams;
use gesture_core::signal::RampShape;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub audio: AudioSection,
    pub embedding: EmbeddingSection,
    pub motion: MotionSection,
    pub hampel: HampelSection,
    pub csmp: CsmpSection,
    pub diffusion: DiffusionSection,
    pub stats: StatsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    /// Cross-talk mute ramp length in seconds.
    pub ramp: f64,
    /// `linear` or `raised-cosine`.
    pub ramp_shape: String,
    /// Samples with magnitude at or below this are treated as zeroed out.
    pub zero_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub feature_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct MotionSection {
    pub root_translation: bool,
    /// BVH whose first frame defines the reference pose; identity rotations when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpose: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HampelSection {
    pub window: usize,
    pub threshold: f64,
    /// Clips with a larger flagged-frame fraction go on the exclusion list.
    pub exclusion_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsmpSection {
    pub context: usize,
    pub hop: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_dist: usize,
    pub projection_dim: usize,
    pub temperature_init: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub train_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub schedule: String,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub channels: usize,
    pub blocks: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub max_dist: usize,
    pub window: usize,
    pub step_embed_dim: usize,
    pub step_hidden: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub guidance_dropout: f64,
    pub train_steps: u64,
    pub gamma: f64,
    pub crossfade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub bins: usize,
    pub bin_width: f64,
}


impl Default for AudioSection {
    fn default() -> Self {
        Self {
            ramp: 0.2,
            ramp_shape: "linear".into(),
            zero_eps: 0.0,
        }
    }
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            feature_seed: DEFAULT_FEATURE_SEED,
        }
    }
}


impl Default for HampelSection {
    fn default() -> Self {
        let p = HampelParams::default();
        Self {
            window: p.window,
            threshold: p.threshold,
            exclusion_threshold: 0.04,
        }
    }
}

impl Default for CsmpSection {
    fn default() -> Self {
        let c = CsmpConfig::new(2 * EMBEDDING_DIM, 1);
        Self {
            context: c.context,
            hop: c.hop,
            model_dim: c.model_dim,
            heads: c.heads,
            layers: c.layers,
            max_dist: c.max_dist,
            projection_dim: c.projection_dim,
            temperature_init: c.temperature_init,
            batch_size: c.batch_size,
            lr: c.lr,
            train_steps: 10_000,
        }
    }
}

impl Default for DiffusionSection {
    fn default() -> Self {
        let d = DenoiserConfig::new(1, 1024);
        let g = GuidanceParams::default();
        let t = TrainOptions::default();
        Self {
            schedule: ScheduleKind::Linear.name().into(),
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            channels: d.channels,
            blocks: d.blocks,
            transformer_layers: d.transformer_layers,
            heads: d.heads,
            max_dist: d.max_dist,
            window: d.window,
            step_embed_dim: d.step_embed_dim,
            step_hidden: d.step_hidden,
            batch_size: t.batch_size,
            lr: t.lr,
            guidance_dropout: g.p_drop,
            train_steps: 100_000,
            gamma: g.gamma,
            crossfade: 30,
        }
    }
}

impl Default for StatsSection {
    fn default() -> Self {
        let s = StatsParams::default();
        Self {
            bins: s.bins,
            bin_width: s.bin_width,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::error::read_text(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// The resolved configuration, suitable for feeding back in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.ramp_shape()?;
        if !(self.audio.ramp >= 0.0) {
            return Err(Error::Format(format!("audio.ramp {} must be non-negative", self.audio.ramp)));
        }
        self.schedule()?;
        self.guidance().validate()?;
        if self.hampel.window.is_multiple_of(2) {
            return Err(Error::Format(format!("hampel.window {} must be odd", self.hampel.window)));
        }
        if self.stats.bins == 0 || !(self.stats.bin_width > 0.0) {
            return Err(Error::Format("stats.bins and stats.bin_width must be positive".into()));
        }
        Ok(())
    }

    pub fn ramp_shape(&self) -> Result<RampShape> {
        match self.audio.ramp_shape.as_str() {
            "linear" => Ok(RampShape::Linear),
            "raised-cosine" => Ok(RampShape::RaisedCosine),
            other => Err(Error::Format(format!("unknown audio.ramp_shape `{other}`"))),
        }
    }

    pub fn hampel(&self) -> HampelParams {
        HampelParams {
            window: self.hampel.window,
            threshold: self.hampel.threshold,
        }
    }

    pub fn stats(&self) -> StatsParams {
        StatsParams {
            bins: self.stats.bins,
            bin_width: self.stats.bin_width,
            hampel: self.hampel(),
        }
    }

    pub fn csmp(&self, motion_dim: usize) -> CsmpConfig {
        let c = &self.csmp;
        CsmpConfig {
            context: c.context,
            hop: c.hop,
            speech_dim: 2 * EMBEDDING_DIM,
            motion_dim,
            model_dim: c.model_dim,
            heads: c.heads,
            layers: c.layers,
            max_dist: c.max_dist,
            projection_dim: c.projection_dim,
            temperature_init: c.temperature_init,
            batch_size: c.batch_size,
            lr: c.lr,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let d = &self.diffusion;
        let kind = ScheduleKind::from_name(&d.schedule)
            .ok_or_else(|| Error::Format(format!("unknown diffusion.schedule `{}`", d.schedule)))?;
        Ok(NoiseSchedule::new(kind, d.steps, d.beta_start, d.beta_end)?)
    }

    pub fn guidance(&self) -> GuidanceParams {
        GuidanceParams {
            gamma: self.diffusion.gamma,
            p_drop: self.diffusion.guidance_dropout,
        }
    }

    pub fn denoiser(&self, pose_dim: usize, cond_dim: usize) -> DenoiserConfig {
        let d = &self.diffusion;
        DenoiserConfig {
            pose_dim,
            cond_dim,
            channels: d.channels,
            blocks: d.blocks,
            transformer_layers: d.transformer_layers,
            heads: d.heads,
            max_dist: d.max_dist,
            window: d.window,
            step_embed_dim: d.step_embed_dim,
            step_hidden: d.step_hidden,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            batch_size: self.diffusion.batch_size,
            lr: self.diffusion.lr,
            guidance: self.guidance(),
        }
    }
}
