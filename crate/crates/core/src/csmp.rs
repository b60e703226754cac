//! Contrastive speech and motion pretraining.
//!
//! Two transformer encoders map windows of the joint speech+text stream and
//! of the pose stream into a shared 512-d space, trained with a symmetric
//! cross-entropy over in-batch similarities. The trained speech encoder then
//! serves per-frame conditioning for the diffusion model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::{AlignedClip, EmbeddingSequence, Modality};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{
    Adam, AdamConfig, Graph, Linear, ModelCheckpoint, ParamId, ParamStore, Tensor,
    TransformerConfig, TransformerStack, Var,
};
use crate::rng::Rng;

pub const PROJECTION_DIM: usize = 512;
/// Smallest allowed softmax temperature.
pub const MIN_TEMPERATURE: f64 = 0.01;
const RNG_STREAM: u64 = 0x6373_6d70;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsmpConfig {
    pub context: usize,
    pub hop: usize,
    pub speech_dim: usize,
    pub motion_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_dist: usize,
    pub projection_dim: usize,
    pub temperature_init: f64,
    pub batch_size: usize,
    pub lr: f64,
}

impl CsmpConfig {
    pub fn new(speech_dim: usize, motion_dim: usize) -> Self {
        Self {
            context: 500,
            hop: 250,
            speech_dim,
            motion_dim,
            model_dim: 256,
            heads: 4,
            layers: 3,
            max_dist: 64,
            projection_dim: PROJECTION_DIM,
            temperature_init: 0.07,
            batch_size: 64,
            lr: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.context {
            return Err(Error::InvalidArgument(format!(
                "hop {} must be in 1..={}",
                self.hop, self.context
            )));
        }
        if self.speech_dim == 0 || self.motion_dim == 0 || self.projection_dim == 0 {
            return Err(Error::InvalidArgument("CSMP dimensions must be positive".into()));
        }
        if !(self.temperature_init >= MIN_TEMPERATURE) {
            return Err(Error::InvalidArgument(format!(
                "initial temperature {} below {MIN_TEMPERATURE}",
                self.temperature_init
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }

    fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            dim: self.model_dim,
            heads: self.heads,
            layers: self.layers,
            ff_hidden: 4 * self.model_dim,
            max_dist: self.max_dist,
            context: self.context,
        }
    }
}

/// A window `[start, start + len)` of a stream, zero-padded to the context
/// length when `len < context`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

/// Sliding windows of `context` frames every `hop` frames. When the last
/// regular window stops short of `T`, an end-anchored window `[T − context, T)`
/// is appended; streams shorter than the context give one padded window.
pub fn chunk_windows(frames: usize, context: usize, hop: usize) -> Vec<Window> {
    assert!(hop > 0 && context > 0);
    if frames < context {
        return vec![Window {
            start: 0,
            len: frames,
        }];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + context <= frames {
        out.push(Window {
            start,
            len: context,
        });
        start += hop;
    }
    if out.last().map(|w| w.start + context) != Some(frames) {
        out.push(Window {
            start: frames - context,
            len: context,
        });
    }
    out
}

/// Window contents padded to `context` rows, plus the validity mask.
pub fn extract_window(
    data: &[f64],
    cols: usize,
    window: Window,
    context: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; context * cols];
    out[..window.len * cols]
        .copy_from_slice(&data[window.start * cols..(window.start + window.len) * cols]);
    let mut mask = vec![0.0; context];
    mask[..window.len].iter_mut().for_each(|m| *m = 1.0);
    (out, mask)
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub input: Linear,
    pub stack: TransformerStack,
    pub projection: Linear,
}

impl Encoder {
    fn new(store: &mut ParamStore, name: &str, input_dim: usize, cfg: &CsmpConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            input: Linear::new(store, &format!("{name}.input"), input_dim, cfg.model_dim, rng),
            stack: TransformerStack::new(store, &format!("{name}.encoder"), cfg.transformer(), rng)?,
            projection: Linear::new(
                store,
                &format!("{name}.projection"),
                cfg.model_dim,
                cfg.projection_dim,
                rng,
            ),
        })
    }

    /// Per-frame encoder states, `T × model_dim`.
    fn states(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &[f64]) -> Result<Var> {
        let h = self.input.forward(g, store, x)?;
        self.stack.forward(g, store, h, Some(mask))
    }

    /// Masked mean over valid frames, projected and L2-normalised: `1 × projection_dim`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &[f64]) -> Result<Var> {
        let h = self.states(g, store, x, mask)?;
        let pooled = g.masked_mean_rows(h, mask)?;
        let z = self.projection.forward(g, store, pooled)?;
        Ok(g.l2_normalize_rows(z))
    }

    /// Projected per-frame features (not pooled, not normalised).
    pub fn frame_features(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &[f64]) -> Result<Var> {
        let h = self.states(g, store, x, mask)?;
        self.projection.forward(g, store, h)
    }
}

#[derive(Debug, Clone)]
pub struct CsmpModel {
    pub config: CsmpConfig,
    pub store: ParamStore,
    pub speech: Encoder,
    pub motion: Encoder,
    /// Logit scale `ln(1/temperature)`.
    pub log_scale: ParamId,
}

impl CsmpModel {
    pub fn new(config: CsmpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(seed, &[RNG_STREAM, 0]);
        let mut store = ParamStore::new();
        let speech = Encoder::new(&mut store, "speech", config.speech_dim, &config, &mut rng)?;
        let motion = Encoder::new(&mut store, "motion", config.motion_dim, &config, &mut rng)?;
        let log_scale = store.constant("log_scale", 1, 1, -math::ln(config.temperature_init));
        Ok(Self {
            config,
            store,
            speech,
            motion,
            log_scale,
        })
    }

    pub fn temperature(&self) -> f64 {
        math::exp(-self.store.get(self.log_scale).item())
    }

    fn clamp_temperature(&mut self) {
        let max = -math::ln(MIN_TEMPERATURE);
        let v = &mut self.store.get_mut(self.log_scale).data_mut()[0];
        if *v > max {
            *v = max;
        }
    }

    fn window_input(
        &self,
        g: &mut Graph,
        data: &[f64],
        cols: usize,
        window: Window,
    ) -> Result<(Var, Vec<f64>)> {
        let (x, mask) = extract_window(data, cols, window, self.config.context.max(window.len));
        let rows = mask.len();
        Ok((g.matrix(rows, cols, x)?, mask))
    }

    /// Unit-norm `(u, v)` for a speech+text window and a motion window.
    pub fn encode_pair(
        &self,
        speech: &[f64],
        motion: &[f64],
        window: Window,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let (u, v) = self.encode_pair_graph(&mut g, speech, motion, window)?;
        Ok((g.value(u).data().to_vec(), g.value(v).data().to_vec()))
    }

    fn encode_pair_graph(
        &self,
        g: &mut Graph,
        speech: &[f64],
        motion: &[f64],
        window: Window,
    ) -> Result<(Var, Var)> {
        if window.len == 0 {
            return Err(Error::Empty("all-masked window"));
        }
        let (xs, mask) = self.window_input(g, speech, self.config.speech_dim, window)?;
        let (xm, _) = self.window_input(g, motion, self.config.motion_dim, window)?;
        let u = self.speech.embed(g, &self.store, xs, &mask)?;
        let v = self.motion.embed(g, &self.store, xm, &mask)?;
        Ok((u, v))
    }

    /// Per-frame projected speech features over a whole stream, `T × projection_dim`.
    /// Frames covered by several windows take the mean of their outputs.
    pub fn speech_frame_features(&self, stream: &EmbeddingSequence) -> Result<Vec<f64>> {
        if stream.cols() != self.config.speech_dim {
            return Err(Error::Shape(format!(
                "speech stream has {} features, model expects {}",
                stream.cols(),
                self.config.speech_dim
            )));
        }
        let t = stream.rows();
        if t == 0 {
            return Err(Error::Empty("speech stream"));
        }
        let p = self.config.projection_dim;
        let mut sum = vec![0.0; t * p];
        let mut count = vec![0usize; t];
        for w in chunk_windows(t, self.config.context, self.config.hop) {
            let mut g = Graph::new();
            let (x, mask) = self.window_input(&mut g, stream.data(), stream.cols(), w)?;
            let f = self.speech.frame_features(&mut g, &self.store, x, &mask)?;
            let out = g.value(f);
            for r in 0..w.len {
                let dst = &mut sum[(w.start + r) * p..(w.start + r + 1) * p];
                for (d, s) in dst.iter_mut().zip(out.row(r)) {
                    *d += s;
                }
                count[w.start + r] += 1;
            }
        }
        for (f, c) in count.iter().enumerate() {
            for v in &mut sum[f * p..(f + 1) * p] {
                *v /= *c as f64;
            }
        }
        Ok(sum)
    }

    /// `T × 2·projection_dim` conditioning: main agent columns first, then
    /// interlocutor. Both streams must have the same length.
    pub fn conditioning_features(
        &self,
        main: &EmbeddingSequence,
        interlocutor: &EmbeddingSequence,
    ) -> Result<EmbeddingSequence> {
        if main.rows() != interlocutor.rows() {
            return Err(Error::Shape(format!(
                "main stream has {} frames, interlocutor {}",
                main.rows(),
                interlocutor.rows()
            )));
        }
        let a = self.speech_frame_features(main)?;
        let b = self.speech_frame_features(interlocutor)?;
        let p = self.config.projection_dim;
        let t = main.rows();
        let mut data = Vec::with_capacity(t * 2 * p);
        for f in 0..t {
            data.extend_from_slice(&a[f * p..(f + 1) * p]);
            data.extend_from_slice(&b[f * p..(f + 1) * p]);
        }
        EmbeddingSequence::new(main.rate, Modality::Conditioning, t, 2 * p, data)
    }

    pub fn to_checkpoint(&self, opt: Option<&Adam>, step: u64, seed: u64) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint {
            params: ModelCheckpoint::capture(&self.store, opt),
            step,
            seed,
            ..Default::default()
        };
        let c = &self.config;
        ck.set("kind", "csmp");
        ck.set("csmp.context", c.context);
        ck.set("csmp.hop", c.hop);
        ck.set("csmp.speech_dim", c.speech_dim);
        ck.set("csmp.motion_dim", c.motion_dim);
        ck.set("csmp.model_dim", c.model_dim);
        ck.set("csmp.heads", c.heads);
        ck.set("csmp.layers", c.layers);
        ck.set("csmp.max_dist", c.max_dist);
        ck.set("csmp.projection_dim", c.projection_dim);
        ck.set("csmp.temperature_init", c.temperature_init);
        ck.set("csmp.batch_size", c.batch_size);
        ck.set("csmp.lr", c.lr);
        ck
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        if ck.get("kind")? != "csmp" {
            return Err(Error::InvalidArgument(format!(
                "checkpoint kind `{}` is not csmp",
                ck.get("kind")?
            )));
        }
        let config = CsmpConfig {
            context: ck.parse("csmp.context")?,
            hop: ck.parse("csmp.hop")?,
            speech_dim: ck.parse("csmp.speech_dim")?,
            motion_dim: ck.parse("csmp.motion_dim")?,
            model_dim: ck.parse("csmp.model_dim")?,
            heads: ck.parse("csmp.heads")?,
            layers: ck.parse("csmp.layers")?,
            max_dist: ck.parse("csmp.max_dist")?,
            projection_dim: ck.parse("csmp.projection_dim")?,
            temperature_init: ck.parse("csmp.temperature_init")?,
            batch_size: ck.parse("csmp.batch_size")?,
            lr: ck.parse("csmp.lr")?,
        };
        let mut model = Self::new(config, ck.seed)?;
        model.store.load_map(&ck.params)?;
        Ok(model)
    }
}

/// Symmetric in-batch contrastive loss on an existing graph.
/// `u`, `v`: `B × d` unit rows; `scale`: `1 × 1` logit scale (1/temperature).
pub fn contrastive_loss_graph(g: &mut Graph, u: Var, v: Var, scale: Var) -> Result<Var> {
    let sim = g.matmul_bt(u, v)?;
    let logits = g.scale_by(sim, scale)?;
    let rows = g.log_softmax(logits);
    let row_diag = g.diag(rows)?;
    let row_ce = g.mean(row_diag);
    let lt = g.transpose(logits);
    let cols = g.log_softmax(lt);
    let col_diag = g.diag(cols)?;
    let col_ce = g.mean(col_diag);
    let total = g.add(row_ce, col_ce)?;
    Ok(g.scale(total, -0.5))
}

/// `½·[CE(U·Vᵀ/τ, diag) + CE((U·Vᵀ/τ)ᵀ, diag)]`.
pub fn contrastive_loss(u: &Tensor, v: &Tensor, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature {temperature} must be positive"
        )));
    }
    if u.rows() == 0 || u.shape() != v.shape() {
        return Err(Error::Shape(format!("U {:?} vs V {:?}", u.shape(), v.shape())));
    }
    let mut g = Graph::new();
    let uv = g.matrix(u.rows(), u.cols(), u.data().to_vec())?;
    let vv = g.matrix(v.rows(), v.cols(), v.data().to_vec())?;
    let s = g.matrix(1, 1, vec![1.0 / temperature])?;
    let l = contrastive_loss_graph(&mut g, uv, vv, s)?;
    Ok(g.value(l).item())
}

/// One training pair: joint speech+text stream and pose stream of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct CsmpPair {
    pub frames: usize,
    pub speech: Vec<f64>,
    pub motion: Vec<f64>,
}

impl CsmpPair {
    pub fn from_clip(clip: &AlignedClip) -> Self {
        Self {
            frames: clip.num_frames(),
            speech: clip.main.data().to_vec(),
            motion: clip.motion.data().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub temperature: f64,
}

/// Window index over a dataset.
#[derive(Debug, Clone)]
pub struct WindowPool {
    /// Windows per pair.
    pub windows: Vec<Vec<Window>>,
}

impl WindowPool {
    pub fn new(pairs: &[CsmpPair], config: &CsmpConfig) -> Self {
        Self {
            windows: pairs
                .iter()
                .map(|p| {
                    if p.frames == 0 {
                        Vec::new()
                    } else {
                        chunk_windows(p.frames, config.context, config.hop)
                    }
                })
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.windows.iter().map(Vec::len).sum()
    }

    /// `batch` distinct windows, spread across as many different pairs as
    /// possible (one per pair per round, pairs in random order).
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<(usize, Window)>> {
        if batch > self.total() {
            return Err(Error::InvalidArgument(format!(
                "batch of {batch} exceeds the {} available windows",
                self.total()
            )));
        }
        let mut per_pair: Vec<Vec<Window>> = self.windows.clone();
        for w in per_pair.iter_mut() {
            rng.shuffle(w);
        }
        let mut order: Vec<usize> = (0..per_pair.len()).collect();
        rng.shuffle(&mut order);
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            for &p in &order {
                if out.len() == batch {
                    break;
                }
                if let Some(w) = per_pair[p].pop() {
                    out.push((p, w));
                }
            }
        }
        Ok(out)
    }
}

/// Owns model and optimiser state across steps. Batch draws depend only on
/// `(seed, step)`, so a resumed trainer replays an uninterrupted run.
#[derive(Debug, Clone)]
pub struct CsmpTrainer {
    pub model: CsmpModel,
    pub optimizer: Adam,
    pub step: u64,
    pub seed: u64,
}

impl CsmpTrainer {
    pub fn new(config: CsmpConfig, seed: u64) -> Result<Self> {
        let mut model = CsmpModel::new(config, seed)?;
        model.store.quantize_f32();
        let mut optimizer = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &model.store,
        );
        optimizer.f32_state = true;
        Ok(Self {
            model,
            optimizer,
            step: 0,
            seed,
        })
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        let model = CsmpModel::from_checkpoint(ck)?;
        let mut optimizer = Adam::new(
            AdamConfig {
                lr: model.config.lr,
                ..Default::default()
            },
            &model.store,
        );
        optimizer.f32_state = true;
        ck.restore_optimizer(&model.store, &mut optimizer)?;
        Ok(Self {
            model,
            optimizer,
            step: ck.step,
            seed: ck.seed,
        })
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        self.model
            .to_checkpoint(Some(&self.optimizer), self.step, self.seed)
    }

    /// Loss of one batch, with the graph for backpropagation.
    fn batch_loss(&self, pairs: &[CsmpPair], batch: &[(usize, Window)]) -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let mut us = Vec::with_capacity(batch.len());
        let mut vs = Vec::with_capacity(batch.len());
        for &(p, w) in batch {
            let (u, v) = self
                .model
                .encode_pair_graph(&mut g, &pairs[p].speech, &pairs[p].motion, w)?;
            us.push(u);
            vs.push(v);
        }
        let u = g.concat_rows(&us)?;
        let v = g.concat_rows(&vs)?;
        let log_scale = g.param(&self.model.store, self.model.log_scale);
        let scale = g.exp(log_scale);
        let loss = contrastive_loss_graph(&mut g, u, v, scale)?;
        Ok((g, loss))
    }

    pub fn train_step(&mut self, pairs: &[CsmpPair], pool: &WindowPool) -> Result<StepLog> {
        let mut rng = Rng::derive(self.seed, &[RNG_STREAM, 1, self.step]);
        let batch = pool.sample(self.model.config.batch_size, &mut rng)?;
        let (g, loss) = self.batch_loss(pairs, &batch)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "CSMP loss at step {}",
                self.step + 1
            )));
        }
        let grads = g.backward(loss, &self.model.store)?;
        self.optimizer.update(&mut self.model.store, &grads)?;
        self.model.clamp_temperature();
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            loss: value,
            temperature: self.model.temperature(),
        })
    }
}

/// Train from scratch for `steps` steps, reporting every step to `log`.
pub fn train_csmp(
    pairs: &[CsmpPair],
    config: CsmpConfig,
    seed: u64,
    steps: u64,
    mut log: impl FnMut(&StepLog),
) -> Result<CsmpTrainer> {
    if pairs.is_empty() {
        return Err(Error::Empty("CSMP dataset"));
    }
    let pool = WindowPool::new(pairs, &config);
    let mut trainer = CsmpTrainer::new(config, seed)?;
    for _ in 0..steps {
        let entry = trainer.train_step(pairs, &pool)?;
        log(&entry);
    }
    Ok(trainer)
}

/// Fraction of rows `i` whose most similar `v` row is `v_i`.
pub fn retrieval_accuracy(us: &[Vec<f64>], vs: &[Vec<f64>]) -> f64 {
    let hits = us
        .iter()
        .enumerate()
        .filter(|(i, u)| {
            let best = vs
                .iter()
                .enumerate()
                .map(|(j, v)| (j, u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            best.0 == *i
        })
        .count();
    hits as f64 / us.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn starts(t: usize) -> Vec<usize> {
        chunk_windows(t, 500, 250).iter().map(|w| w.start).collect()
    }

    #[test]
    fn chunking_examples() {
        assert_eq!(starts(1000), vec![0, 250, 500]);
        assert_eq!(starts(600), vec![0, 100]);
        assert_eq!(starts(500), vec![0]);
        let short = chunk_windows(120, 500, 250);
        assert_eq!(short, vec![Window { start: 0, len: 120 }]);
    }

    fn unit_rows(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
        let mut d = rng.normal_vec(rows * cols);
        for r in d.chunks_mut(cols) {
            let n = math::sqrt(r.iter().map(|x| x * x).sum());
            r.iter_mut().for_each(|x| *x /= n);
        }
        Tensor::matrix(rows, cols, d).unwrap()
    }

    #[test]
    fn loss_special_cases() {
        let mut rng = Rng::new(1);
        let u = unit_rows(1, 6, &mut rng);
        let v = unit_rows(1, 6, &mut rng);
        assert_eq!(contrastive_loss(&u, &v, 0.07).unwrap(), 0.0);

        let same = Tensor::matrix(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = contrastive_loss(&same, &same, 0.5).unwrap();
        assert!((l - math::ln(2.0)).abs() < 1e-15);
        assert!(contrastive_loss(&same, &same, 0.0).is_err());
    }

    #[test]
    fn loss_symmetric_and_rotation_invariant() {
        let mut rng = Rng::new(2);
        let u = unit_rows(5, 4, &mut rng);
        let v = unit_rows(5, 4, &mut rng);
        let a = contrastive_loss(&u, &v, 0.3).unwrap();
        let b = contrastive_loss(&v, &u, 0.3).unwrap();
        assert_eq!(a, b);
        // rotation in the (0, 1) plane applied to both
        let (c, s) = (math::cos(0.7), math::sin(0.7));
        let rot = |t: &Tensor| {
            let mut d = t.data().to_vec();
            for r in d.chunks_mut(4) {
                let (x, y) = (r[0], r[1]);
                r[0] = c * x - s * y;
                r[1] = s * x + c * y;
            }
            Tensor::matrix(5, 4, d).unwrap()
        };
        let r = contrastive_loss(&rot(&u), &rot(&v), 0.3).unwrap();
        assert!((r - a).abs() < 1e-6);
    }

    fn tiny_config() -> CsmpConfig {
        CsmpConfig {
            context: 12,
            hop: 6,
            model_dim: 8,
            heads: 2,
            layers: 1,
            max_dist: 4,
            projection_dim: 6,
            batch_size: 4,
            lr: 1e-3,
            ..CsmpConfig::new(5, 3)
        }
    }

    #[test]
    fn encode_pair_unit_norm_and_batch_independent() {
        let cfg = tiny_config();
        let model = CsmpModel::new(cfg, 3).unwrap();
        let mut rng = Rng::new(4);
        let speech = rng.normal_vec(20 * 5);
        let motion = rng.normal_vec(20 * 3);
        let w = Window { start: 2, len: 12 };
        let (u, v) = model.encode_pair(&speech, &motion, w).unwrap();
        let norm = |x: &[f64]| math::sqrt(x.iter().map(|a| a * a).sum());
        assert!((norm(&u) - 1.0).abs() < 1e-6 && (norm(&v) - 1.0).abs() < 1e-6);
        let padded = Window { start: 0, len: 7 };
        let (u2, _) = model.encode_pair(&speech, &motion, padded).unwrap();
        assert!((norm(&u2) - 1.0).abs() < 1e-6);
        assert_eq!(model.encode_pair(&speech, &motion, w).unwrap().0, u);
        assert!(model.encode_pair(&speech, &motion, Window { start: 0, len: 0 }).is_err());
    }

    #[test]
    fn batch_sampling_spreads_across_pairs() {
        let cfg = tiny_config();
        let pairs: Vec<CsmpPair> = (0..5)
            .map(|_| CsmpPair {
                frames: 30,
                speech: vec![0.0; 30 * 5],
                motion: vec![0.0; 30 * 3],
            })
            .collect();
        let pool = WindowPool::new(&pairs, &cfg);
        let mut rng = Rng::new(5);
        let batch = pool.sample(4, &mut rng).unwrap();
        let mut clips: Vec<usize> = batch.iter().map(|b| b.0).collect();
        clips.sort();
        clips.dedup();
        assert_eq!(clips.len(), 4);
        assert!(pool.sample(pool.total() + 1, &mut rng).is_err());
    }

    #[test]
    fn conditioning_layout() {
        let cfg = tiny_config();
        let model = CsmpModel::new(cfg, 6).unwrap();
        let mut rng = Rng::new(7);
        let main = EmbeddingSequence::new(30.0, Modality::Joint, 20, 5, rng.normal_vec(100)).unwrap();
        let inter = EmbeddingSequence::new(30.0, Modality::Joint, 20, 5, rng.normal_vec(100)).unwrap();
        let c = model.conditioning_features(&main, &inter).unwrap();
        assert_eq!((c.rows(), c.cols(), c.modality), (20, 12, Modality::Conditioning));
        let a = model.speech_frame_features(&main).unwrap();
        let b = model.speech_frame_features(&inter).unwrap();
        assert_eq!(&c.row(3)[..6], &a[18..24]);
        assert_eq!(&c.row(3)[6..], &b[18..24]);
        // frame 0 lies only in the first window
        let mut g = Graph::new();
        let (x, mask) = model.window_input(&mut g, main.data(), 5, Window { start: 0, len: 12 }).unwrap();
        let f = model.speech.frame_features(&mut g, &model.store, x, &mask).unwrap();
        assert_eq!(g.value(f).row(0), &a[..6]);
        assert!(model.conditioning_features(&main, &inter.truncated(19)).is_err());
    }

    #[test]
    fn checkpoint_restores_model() {
        let cfg = tiny_config();
        let model = CsmpModel::new(cfg, 9).unwrap();
        let ck = model.to_checkpoint(None, 0, 9);
        let back = CsmpModel::from_checkpoint(&ck).unwrap();
        assert_eq!(back.store, model.store);
        assert_eq!(back.config, model.config);
    }
}
