use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::sampler::{EpsilonModel, GuidanceParams};
use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{
    Adam, AdamConfig, Graph, Linear, ModelCheckpoint, ParamId, ParamStore, Tensor,
    TransformerConfig, TransformerStack, Var,
};
use crate::rng::Rng;

const RNG_STREAM: u64 = 0x6464_706d;
const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserConfig {
    pub pose_dim: usize,
    pub cond_dim: usize,
    pub channels: usize,
    pub blocks: usize,
    /// Transformer layers inside each residual block.
    pub transformer_layers: usize,
    pub heads: usize,
    pub max_dist: usize,
    /// Training window length in frames, also the longest single forward pass.
    pub window: usize,
    pub step_embed_dim: usize,
    pub step_hidden: usize,
}

impl DenoiserConfig {
    pub fn new(pose_dim: usize, cond_dim: usize) -> Self {
        Self {
            pose_dim,
            cond_dim,
            channels: 256,
            blocks: 15,
            transformer_layers: 3,
            heads: 4,
            max_dist: 64,
            window: 150,
            step_embed_dim: 128,
            step_hidden: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pose_dim == 0 || self.cond_dim == 0 || self.channels == 0 || self.blocks == 0 {
            return Err(Error::InvalidArgument("denoiser dimensions must be positive".into()));
        }
        if self.step_embed_dim < 2 || !self.step_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "step embedding dim {} must be even",
                self.step_embed_dim
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be positive".into()));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of a diffusion step, `[sin(n·f_0..), cos(n·f_0..)]`
/// with `f_k = 10^(−4k/(half−1))`.
pub fn step_embedding(step: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let exponent = if half > 1 { 4.0 * k as f64 / (half - 1) as f64 } else { 0.0 };
        let arg = step as f64 * math::exp(-exponent * math::ln(10.0));
        out[k] = math::sin(arg);
        out[half + k] = math::cos(arg);
    }
    out
}

#[derive(Debug, Clone)]
struct ResidualBlock {
    step: Linear,
    stack: TransformerStack,
    mix: Linear,
    cond: Linear,
    out: Linear,
}

/// Per-feature mean and standard deviation of training poses.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics over every frame of every sequence (each `frames × dim`),
    /// rounded to f32 like every other checkpointed tensor.
    pub fn fit(sequences: &[&[f64]], dim: usize) -> Result<Self> {
        let total: usize = sequences.iter().map(|s| s.len() / dim).sum();
        if total == 0 {
            return Err(Error::Empty("pose data"));
        }
        let mut mean = vec![0.0; dim];
        for s in sequences {
            for row in s.chunks_exact(dim) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= total as f64);
        let mut var = vec![0.0; dim];
        for s in sequences {
            for row in s.chunks_exact(dim) {
                for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = math::sqrt(v / total as f64);
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .map(|s| s as f32 as f64)
            .collect();
        let mean = mean.into_iter().map(|m| m as f32 as f64).collect();
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, data: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        data.iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect()
    }

    pub fn denormalize(&self, data: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        data.iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % d] + self.mean[i % d])
            .collect()
    }
}

/// DiffWave-style residual denoiser with transformer stacks in each block,
/// a learned null conditioning token and pose feature normalisation.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub store: ParamStore,
    pub stats: FeatureStats,
    input: Linear,
    step_in: Linear,
    step_out: Linear,
    blocks: Vec<ResidualBlock>,
    skip: Linear,
    output: Linear,
    null_token: ParamId,
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(seed, &[RNG_STREAM, 0]);
        let mut store = ParamStore::new();
        let c = config.channels;
        let input = Linear::new(&mut store, "input", config.pose_dim, c, &mut rng);
        let step_in = Linear::new(&mut store, "step.0", config.step_embed_dim, config.step_hidden, &mut rng);
        let step_out = Linear::new(&mut store, "step.1", config.step_hidden, config.step_hidden, &mut rng);
        let tcfg = TransformerConfig {
            dim: c,
            heads: config.heads,
            layers: config.transformer_layers,
            ff_hidden: 4 * c,
            max_dist: config.max_dist,
            context: config.window,
        };
        let mut blocks = Vec::with_capacity(config.blocks);
        for b in 0..config.blocks {
            let name = format!("block{b}");
            blocks.push(ResidualBlock {
                step: Linear::new(&mut store, &format!("{name}.step"), config.step_hidden, c, &mut rng),
                stack: TransformerStack::new(&mut store, &format!("{name}.transformer"), tcfg, &mut rng)?,
                mix: Linear::new(&mut store, &format!("{name}.mix"), c, 2 * c, &mut rng),
                cond: Linear::new(&mut store, &format!("{name}.cond"), config.cond_dim, 2 * c, &mut rng),
                out: Linear::new(&mut store, &format!("{name}.out"), c, 2 * c, &mut rng),
            });
        }
        let skip = Linear::new(&mut store, "skip", c, c, &mut rng);
        let output = Linear::zeroed(&mut store, "output", c, config.pose_dim);
        let token = rng.normal_vec(config.cond_dim);
        let null_token = store.insert("null_token", Tensor::matrix(1, config.cond_dim, token)?);
        Ok(Self {
            stats: FeatureStats::identity(config.pose_dim),
            config,
            store,
            input,
            step_in,
            step_out,
            blocks,
            skip,
            output,
            null_token,
        })
    }

    /// `ε_θ` on the graph. `x: frames × pose_dim`, `cond: frames × cond_dim` or the null token.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        step: usize,
        cond: Option<Var>,
    ) -> Result<Var> {
        let frames = g.value(x).rows();
        if frames > self.config.window {
            return Err(Error::ContextOverflow {
                len: frames,
                limit: self.config.window,
            });
        }
        let c = self.config.channels;
        let cond = match cond {
            Some(v) => v,
            None => {
                let t = g.param(store, self.null_token);
                g.repeat_rows(t, frames)?
            }
        };
        let emb = g.matrix(1, self.config.step_embed_dim, step_embedding(step, self.config.step_embed_dim))?;
        let e = self.step_in.forward(g, store, emb)?;
        let e = g.silu(e);
        let e = self.step_out.forward(g, store, e)?;
        let e = g.silu(e);

        let h = self.input.forward(g, store, x)?;
        let mut h = g.relu(h);
        let mut skip_sum: Option<Var> = None;
        for block in &self.blocks {
            let s = block.step.forward(g, store, e)?;
            let y = g.add_row(h, s)?;
            let y = block.stack.forward(g, store, y, None)?;
            let y = block.mix.forward(g, store, y)?;
            let cp = block.cond.forward(g, store, cond)?;
            let y = g.add(y, cp)?;
            let gate = g.slice_cols(y, 0, c)?;
            let filter = g.slice_cols(y, c, c)?;
            let gate = g.sigmoid(gate);
            let filter = g.tanh(filter);
            let z = g.mul(gate, filter)?;
            let z = block.out.forward(g, store, z)?;
            let residual = g.slice_cols(z, 0, c)?;
            let skip = g.slice_cols(z, c, c)?;
            let sum = g.add(h, residual)?;
            h = g.scale(sum, core::f64::consts::FRAC_1_SQRT_2);
            skip_sum = Some(match skip_sum {
                Some(acc) => g.add(acc, skip)?,
                None => skip,
            });
        }
        let total = skip_sum.expect("at least one block");
        let total = g.scale(total, 1.0 / math::sqrt(self.blocks.len() as f64));
        let y = self.skip.forward(g, store, total)?;
        let y = g.relu(y);
        self.output.forward(g, store, y)
    }

    pub fn to_checkpoint(
        &self,
        schedule: &NoiseSchedule,
        guidance: &GuidanceParams,
        opt: Option<&Adam>,
        step: u64,
        seed: u64,
    ) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint {
            params: ModelCheckpoint::capture(&self.store, opt),
            step,
            seed,
            ..Default::default()
        };
        let d = self.config.pose_dim;
        ck.params.insert(
            "norm.mean".to_string(),
            Tensor::matrix(1, d, self.stats.mean.clone()).expect("stats shape"),
        );
        ck.params.insert(
            "norm.std".to_string(),
            Tensor::matrix(1, d, self.stats.std.clone()).expect("stats shape"),
        );
        let c = &self.config;
        ck.set("kind", "diffusion");
        ck.set("denoiser.pose_dim", c.pose_dim);
        ck.set("denoiser.cond_dim", c.cond_dim);
        ck.set("denoiser.channels", c.channels);
        ck.set("denoiser.blocks", c.blocks);
        ck.set("denoiser.transformer_layers", c.transformer_layers);
        ck.set("denoiser.heads", c.heads);
        ck.set("denoiser.max_dist", c.max_dist);
        ck.set("denoiser.window", c.window);
        ck.set("denoiser.step_embed_dim", c.step_embed_dim);
        ck.set("denoiser.step_hidden", c.step_hidden);
        ck.set("schedule.kind", schedule.kind.name());
        ck.set("schedule.steps", schedule.steps());
        ck.set("schedule.beta_start", schedule.betas()[0]);
        ck.set("schedule.beta_end", schedule.betas()[schedule.steps() - 1]);
        ck.set("guidance.p_drop", guidance.p_drop);
        ck
    }

    /// Model, schedule and training dropout stored in a diffusion checkpoint.
    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<(Self, NoiseSchedule, f64)> {
        if ck.get("kind")? != "diffusion" {
            return Err(Error::InvalidArgument(format!(
                "checkpoint kind `{}` is not diffusion",
                ck.get("kind")?
            )));
        }
        let config = DenoiserConfig {
            pose_dim: ck.parse("denoiser.pose_dim")?,
            cond_dim: ck.parse("denoiser.cond_dim")?,
            channels: ck.parse("denoiser.channels")?,
            blocks: ck.parse("denoiser.blocks")?,
            transformer_layers: ck.parse("denoiser.transformer_layers")?,
            heads: ck.parse("denoiser.heads")?,
            max_dist: ck.parse("denoiser.max_dist")?,
            window: ck.parse("denoiser.window")?,
            step_embed_dim: ck.parse("denoiser.step_embed_dim")?,
            step_hidden: ck.parse("denoiser.step_hidden")?,
        };
        let kind = ScheduleKind::from_name(ck.get("schedule.kind")?).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown schedule kind `{}`", ck.get("schedule.kind").unwrap_or("")))
        })?;
        let schedule = NoiseSchedule::new(
            kind,
            ck.parse("schedule.steps")?,
            ck.parse("schedule.beta_start")?,
            ck.parse("schedule.beta_end")?,
        )?;
        let p_drop = ck.parse("guidance.p_drop")?;
        let mut model = Self::new(config, ck.seed)?;
        model.store.load_map(&ck.params)?;
        let stat = |name: &str| -> Result<Vec<f64>> {
            let t = ck
                .params
                .get(name)
                .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
            if t.len() != config.pose_dim {
                return Err(Error::Shape(format!("`{name}` has {} values", t.len())));
            }
            Ok(t.data().to_vec())
        };
        model.stats = FeatureStats {
            mean: stat("norm.mean")?,
            std: stat("norm.std")?,
        };
        Ok((model, schedule, p_drop))
    }
}

impl EpsilonModel for Denoiser {
    fn dim(&self) -> usize {
        self.config.pose_dim
    }

    fn cond_dim(&self) -> usize {
        self.config.cond_dim
    }

    fn max_frames(&self) -> usize {
        self.config.window
    }

    fn predict(&self, x: &[f64], frames: usize, step: usize, cond: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.matrix(frames, self.config.pose_dim, x.to_vec())?;
        let cv = match cond {
            Some(c) => Some(g.matrix(frames, self.config.cond_dim, c.to_vec())?),
            None => None,
        };
        let out = self.forward(&mut g, &self.store, xv, step, cv)?;
        Ok(g.value(out).data().to_vec())
    }
}

/// One clip of normalised poses (`frames × pose_dim`) with its conditioning
/// (`frames × cond_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionClip {
    pub frames: usize,
    pub pose: Vec<f64>,
    pub cond: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub lr: f64,
    pub guidance: GuidanceParams,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-4,
            guidance: GuidanceParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLog {
    pub step: u64,
    pub loss: f64,
}

/// Training state. Everything random in a step is drawn from `(seed, step)`,
/// so resuming from a checkpoint continues the uninterrupted run exactly.
#[derive(Debug, Clone)]
pub struct DiffusionTrainer {
    pub model: Denoiser,
    pub schedule: NoiseSchedule,
    pub options: TrainOptions,
    pub optimizer: Adam,
    pub step: u64,
    pub seed: u64,
}

impl DiffusionTrainer {
    pub fn new(
        config: DenoiserConfig,
        schedule: NoiseSchedule,
        stats: FeatureStats,
        options: TrainOptions,
        seed: u64,
    ) -> Result<Self> {
        options.guidance.validate()?;
        if options.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let mut model = Denoiser::new(config, seed)?;
        model.stats = stats;
        model.store.quantize_f32();
        let mut optimizer = Adam::new(
            AdamConfig {
                lr: options.lr,
                ..Default::default()
            },
            &model.store,
        );
        optimizer.f32_state = true;
        Ok(Self {
            model,
            schedule,
            options,
            optimizer,
            step: 0,
            seed,
        })
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        let (model, schedule, p_drop) = Denoiser::from_checkpoint(ck)?;
        let options = TrainOptions {
            batch_size: ck.parse("train.batch_size")?,
            lr: ck.parse("train.lr")?,
            guidance: GuidanceParams {
                p_drop,
                ..Default::default()
            },
        };
        let mut optimizer = Adam::new(
            AdamConfig {
                lr: options.lr,
                ..Default::default()
            },
            &model.store,
        );
        optimizer.f32_state = true;
        ck.restore_optimizer(&model.store, &mut optimizer)?;
        Ok(Self {
            model,
            schedule,
            options,
            optimizer,
            step: ck.step,
            seed: ck.seed,
        })
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        let mut ck = self.model.to_checkpoint(
            &self.schedule,
            &self.options.guidance,
            Some(&self.optimizer),
            self.step,
            self.seed,
        );
        ck.set("train.batch_size", self.options.batch_size);
        ck.set("train.lr", self.options.lr);
        ck
    }

    /// One optimiser step on a random batch of windows. Clips shorter than
    /// the window are skipped; at least one must be long enough.
    pub fn train_step(&mut self, clips: &[DiffusionClip]) -> Result<DiffusionLog> {
        let w = self.model.config.window;
        let (d, cd) = (self.model.config.pose_dim, self.model.config.cond_dim);
        let eligible: Vec<usize> = (0..clips.len()).filter(|&i| clips[i].frames >= w).collect();
        if eligible.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no clip has at least {w} frames"
            )));
        }
        let mut rng = Rng::derive(self.seed, &[RNG_STREAM, 1, self.step]);
        let mut g = Graph::new();
        let mut losses = Vec::with_capacity(self.options.batch_size);
        for _ in 0..self.options.batch_size {
            let clip = &clips[eligible[rng.below(eligible.len())]];
            let start = rng.below(clip.frames - w + 1);
            let x0 = &clip.pose[start * d..(start + w) * d];
            let n = 1 + rng.below(self.schedule.steps());
            let noise = rng.normal_vec(w * d);
            let dropped = rng.uniform() < self.options.guidance.p_drop;
            let xn = self.schedule.forward_sample(x0, n, &noise)?;
            let xv = g.matrix(w, d, xn)?;
            let cv = if dropped {
                None
            } else {
                Some(g.matrix(w, cd, clip.cond[start * cd..(start + w) * cd].to_vec())?)
            };
            let eps = self.model.forward(&mut g, &self.model.store, xv, n, cv)?;
            let target = g.matrix(w, d, noise)?;
            let diff = g.sub(eps, target)?;
            let sq = g.square(diff);
            losses.push(g.mean(sq));
        }
        let stacked = g.concat_rows(&losses)?;
        let loss = g.mean(stacked);
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "denoising loss at step {}",
                self.step + 1
            )));
        }
        let grads = g.backward(loss, &self.model.store)?;
        self.optimizer.update(&mut self.model.store, &grads)?;
        self.step += 1;
        Ok(DiffusionLog {
            step: self.step,
            loss: value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_gradients;

    fn tiny() -> DenoiserConfig {
        DenoiserConfig {
            channels: 4,
            blocks: 2,
            transformer_layers: 1,
            heads: 2,
            max_dist: 3,
            window: 5,
            step_embed_dim: 4,
            step_hidden: 6,
            ..DenoiserConfig::new(3, 2)
        }
    }

    #[test]
    fn step_embedding_values() {
        let e = step_embedding(3, 4);
        assert_eq!(e[0], libm::sin(3.0));
        assert!((e[1] - libm::sin(3.0e-4)).abs() < 1e-15);
        assert_eq!(e[2], libm::cos(3.0));
    }

    #[test]
    fn output_shape_and_zero_init() {
        let m = Denoiser::new(tiny(), 1).unwrap();
        let x = Rng::new(2).normal_vec(5 * 3);
        let eps = m.predict(&x, 5, 7, None).unwrap();
        assert_eq!(eps.len(), 15);
        assert!(eps.iter().all(|e| *e == 0.0));
        assert!(matches!(
            m.predict(&[0.0; 18], 6, 1, None),
            Err(Error::ContextOverflow { len: 6, limit: 5 })
        ));
    }

    #[test]
    fn denoiser_gradients() {
        let mut m = Denoiser::new(tiny(), 3).unwrap();
        // make the output layer live so every upstream path carries gradient
        let mut rng = Rng::new(4);
        let out = m.store.id("output.w").unwrap();
        let vals = rng.normal_vec(12);
        m.store.get_mut(out).data_mut().copy_from_slice(&vals);
        let x = rng.normal_vec(4 * 3);
        let c = rng.normal_vec(4 * 2);
        let mut store = m.store.clone();
        let report = check_gradients(&mut store, 1e-4, |g, s| {
            let xv = g.matrix(4, 3, x.clone())?;
            let cv = g.matrix(4, 2, c.clone())?;
            let y = m.forward(g, s, xv, 5, Some(cv))?;
            let sq = g.square(y);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_error < 1e-3, "{report:?}");
    }

    #[test]
    fn stats_round_trip() {
        let data = [1.0, 10.0, 3.0, 10.0, 5.0, 10.0];
        let s = FeatureStats::fit(&[&data], 2).unwrap();
        assert_eq!(s.mean, vec![3.0, 10.0]);
        assert_eq!(s.std[1], 1.0);
        let back = s.denormalize(&s.normalize(&data));
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let sched = NoiseSchedule::new(ScheduleKind::Linear, 7, 1e-3, 0.2).unwrap();
        let clip = DiffusionClip {
            frames: 6,
            pose: Rng::new(1).normal_vec(18),
            cond: Rng::new(2).normal_vec(12),
        };
        let mut t = DiffusionTrainer::new(tiny(), sched, FeatureStats::identity(3), TrainOptions::default(), 5).unwrap();
        t.train_step(core::slice::from_ref(&clip)).unwrap();
        let ck = t.checkpoint();
        let back = DiffusionTrainer::from_checkpoint(&ck).unwrap();
        assert_eq!(back.model.store, t.model.store);
        assert_eq!(back.schedule, t.schedule);
        assert_eq!(back.options, t.options);
        assert_eq!(back.step, 1);
    }
}
