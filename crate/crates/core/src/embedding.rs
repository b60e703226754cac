//! Per-frame speech and text embedding streams on the motion frame grid.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::motion::PoseSequence;
use crate::rng::Rng;
use crate::signal::{AudioTrack, SpeechIntervals};

pub const EMBEDDING_DIM: usize = 768;
pub const AUDIO_FEATURE_RATE: f64 = 50.0;
pub const MOTION_RATE: f64 = 30.0;
pub const DEFAULT_FEATURE_SEED: u64 = 0x6765_7374_7572_6531;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Text,
    Joint,
    Conditioning,
}

impl Modality {
    pub fn code(self) -> u32 {
        match self {
            Modality::Audio => 0,
            Modality::Text => 1,
            Modality::Joint => 2,
            Modality::Conditioning => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Modality::Audio,
            1 => Modality::Text,
            2 => Modality::Joint,
            3 => Modality::Conditioning,
            _ => return None,
        })
    }
}

/// `frames × dim` feature matrix at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub rate: f64,
    pub modality: Modality,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingSequence {
    pub fn new(rate: f64, modality: Modality, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Shape("embedding dimension must be positive".into()));
        }
        if !(rate > 0.0) {
            return Err(Error::InvalidArgument(format!("embedding rate {rate}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}×{cols} embedding",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding entry ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            rate,
            modality,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(rate: f64, modality: Modality, rows: usize, cols: usize) -> Self {
        Self {
            rate,
            modality,
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn truncated(&self, rows: usize) -> Self {
        let rows = rows.min(self.rows);
        Self {
            rate: self.rate,
            modality: self.modality,
            rows,
            cols: self.cols,
            data: self.data[..rows * self.cols].to_vec(),
        }
    }

    /// Column-wise polyphase resampling to `rate` (rates rounded to mHz).
    pub fn resampled(&self, rate: f64) -> Result<Self> {
        let to_mhz = |r: f64| math::round_half_up(r * 1000.0) as u64;
        let rs = crate::signal::PolyphaseResampler::new(to_mhz(self.rate), to_mhz(rate))?;
        let data = rs.process_columns(&self.data, self.rows, self.cols)?;
        Ok(Self {
            rate,
            modality: self.modality,
            rows: data.len() / self.cols,
            cols: self.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedToken {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

/// Word (or sub-word) tokens with start/end times in seconds, sorted by start.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimedTranscript {
    tokens: Vec<TimedToken>,
}

impl TimedTranscript {
    pub fn new(mut tokens: Vec<TimedToken>) -> Result<Self> {
        for t in &tokens {
            if !(t.start.is_finite() && t.end.is_finite() && t.start <= t.end) {
                return Err(Error::InvalidArgument(format!(
                    "token `{}` has start {} after end {}",
                    t.text, t.start, t.end
                )));
            }
        }
        tokens.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[TimedToken] {
        &self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token spans as speech intervals (zero-length tokens dropped).
    pub fn speech_intervals(&self) -> Result<SpeechIntervals> {
        SpeechIntervals::new(
            self.tokens
                .iter()
                .filter(|t| t.end > t.start)
                .map(|t| (t.start, t.end))
                .collect(),
        )
    }
}

fn frame_index(t: f64, rate: f64, frames: usize) -> usize {
    let f = math::round_half_up(t * rate);
    if f <= 0.0 {
        0
    } else {
        (f as usize).min(frames)
    }
}

/// Spread one vector per token over the frames `[round(start·rate), round(end·rate))`.
/// Uncovered frames are zero; a later-starting token overwrites an earlier one.
pub fn replicate_tokens(
    transcript: &TimedTranscript,
    token_vectors: &[Vec<f64>],
    dim: usize,
    rate: f64,
    frames: usize,
) -> Result<EmbeddingSequence> {
    if token_vectors.len() != transcript.tokens().len() {
        return Err(Error::Shape(format!(
            "{} token vectors for {} tokens",
            token_vectors.len(),
            transcript.tokens().len()
        )));
    }
    let mut out = EmbeddingSequence::zeros(rate, Modality::Text, frames, dim);
    for (tok, v) in transcript.tokens().iter().zip(token_vectors) {
        if v.len() != dim {
            return Err(Error::Shape(format!(
                "token `{}` vector has {} dims, expected {dim}",
                tok.text,
                v.len()
            )));
        }
        let (a, b) = (frame_index(tok.start, rate, frames), frame_index(tok.end, rate, frames));
        for f in a..b {
            out.data[f * dim..(f + 1) * dim].copy_from_slice(v);
        }
    }
    Ok(out)
}

/// Deterministic stand-in for a pretrained text encoder: a Gaussian vector
/// seeded by the token string.
pub fn fallback_token_vector(token: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Rng::derive(seed, &[0x7465_7874, h]).normal_vec(dim)
}

pub const MEL_BANDS: usize = 40;
const WINDOW: usize = 400;
const HOP: usize = 320;
const FFT: usize = 512;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * math::ln(1.0 + f / 700.0) / core::f64::consts::LN_10
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Triangular filters, `MEL_BANDS × (FFT/2 + 1)`.
fn mel_filterbank(sample_rate: f64) -> Vec<Vec<f64>> {
    let bins = FFT / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    (0..MEL_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / FFT as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Deterministic log-mel features at 50 Hz (25 ms window, 20 ms hop)
/// projected to 768 dims by a fixed seeded Gaussian matrix.
pub fn fallback_audio_features(audio: &AudioTrack, seed: u64) -> Result<EmbeddingSequence> {
    if audio.samples.is_empty() {
        return Err(Error::Empty("audio track"));
    }
    if audio.sample_rate != 16_000 {
        return Err(Error::RateMismatch {
            expected: 16_000.0,
            found: audio.sample_rate as f64,
        });
    }
    let frames = audio.samples.len().div_ceil(HOP);
    let bins = FFT / 2 + 1;
    let hann: Vec<f64> = (0..WINDOW)
        .map(|i| 0.5 - 0.5 * math::cos(2.0 * core::f64::consts::PI * i as f64 / WINDOW as f64))
        .collect();
    let (cos_t, sin_t): (Vec<f64>, Vec<f64>) = (0..FFT)
        .map(|i| {
            let a = 2.0 * core::f64::consts::PI * i as f64 / FFT as f64;
            (math::cos(a), math::sin(a))
        })
        .unzip();
    let bank = mel_filterbank(audio.sample_rate as f64);
    let mut rng = Rng::derive(seed, &[0x0061_7564_696f]);
    let scale = 1.0 / math::sqrt(MEL_BANDS as f64);
    let proj: Vec<f64> = (0..MEL_BANDS * EMBEDDING_DIM)
        .map(|_| rng.normal() * scale)
        .collect();

    let mut out = Vec::with_capacity(frames * EMBEDDING_DIM);
    let mut buf = vec![0.0; WINDOW];
    let mut power = vec![0.0; bins];
    let mut mel = vec![0.0; MEL_BANDS];
    for f in 0..frames {
        let start = f * HOP;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = audio.samples.get(start + i).copied().unwrap_or(0.0) * hann[i];
        }
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in buf.iter().enumerate() {
                let idx = (k * i) % FFT;
                re += x * cos_t[idx];
                im -= x * sin_t[idx];
            }
            *p = re * re + im * im;
        }
        for (m, filt) in mel.iter_mut().zip(&bank) {
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            *m = math::ln(e + 1e-10);
        }
        for d in 0..EMBEDDING_DIM {
            let mut acc = 0.0;
            for (b, m) in mel.iter().enumerate() {
                acc += m * proj[b * EMBEDDING_DIM + d];
            }
            out.push(acc);
        }
    }
    EmbeddingSequence::new(AUDIO_FEATURE_RATE, Modality::Audio, frames, EMBEDDING_DIM, out)
}

/// Synchronised main-agent motion plus per-agent joint speech+text streams.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedClip {
    pub motion: PoseSequence,
    /// Audio columns first, then text columns.
    pub main: EmbeddingSequence,
    pub interlocutor: EmbeddingSequence,
}

impl AlignedClip {
    pub fn num_frames(&self) -> usize {
        self.motion.num_frames()
    }
}

fn concat_columns(a: &EmbeddingSequence, b: &EmbeddingSequence, rows: usize) -> EmbeddingSequence {
    let cols = a.cols + b.cols;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    EmbeddingSequence {
        rate: a.rate,
        modality: Modality::Joint,
        rows,
        cols,
        data,
    }
}

/// Per-frame `audio | text` concatenation, truncated to the shorter stream.
pub fn joint_stream(audio: &EmbeddingSequence, text: &EmbeddingSequence) -> Result<EmbeddingSequence> {
    if (audio.rate - text.rate).abs() > 1e-9 * audio.rate {
        return Err(Error::RateMismatch {
            expected: audio.rate,
            found: text.rate,
        });
    }
    let len = audio.rows.min(text.rows);
    if len == 0 {
        return Err(Error::Empty("joint stream"));
    }
    Ok(concat_columns(audio, text, len))
}

/// Truncate every stream to the shortest and concatenate audio+text per agent.
pub fn align_clip(
    motion: &PoseSequence,
    main_audio: &EmbeddingSequence,
    main_text: &EmbeddingSequence,
    inter_audio: &EmbeddingSequence,
    inter_text: &EmbeddingSequence,
) -> Result<AlignedClip> {
    let rate = motion.frame_rate;
    let streams = [main_audio, main_text, inter_audio, inter_text];
    for s in streams {
        if (s.rate - rate).abs() > 1e-9 * rate {
            return Err(Error::RateMismatch {
                expected: rate,
                found: s.rate,
            });
        }
    }
    let len = streams
        .iter()
        .map(|s| s.rows)
        .chain(core::iter::once(motion.num_frames()))
        .min()
        .unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("aligned stream"));
    }
    Ok(AlignedClip {
        motion: motion.truncated(len),
        main: concat_columns(main_audio, main_text, len),
        interlocutor: concat_columns(inter_audio, inter_text, len),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::skeleton::fixtures::chain;
    use alloc::string::ToString;

    fn tok(text: &str, start: f64, end: f64) -> TimedToken {
        TimedToken {
            text: text.to_string(),
            start,
            end,
        }
    }

    /// Frames whose timestamp `f/rate` falls in `[start, end)`.
    fn enumerate_frames(start: f64, end: f64, rate: f64, frames: usize) -> Vec<usize> {
        (0..frames)
            .filter(|f| {
                let t = *f as f64 / rate;
                t >= start - 1e-12 && t < end - 1e-12
            })
            .collect()
    }

    #[test]
    fn token_span_frames() {
        let tr = TimedTranscript::new(vec![tok("hi", 0.10, 0.30)]).unwrap();
        let v = vec![vec![1.0, 2.0]];
        let e = replicate_tokens(&tr, &v, 2, 30.0, 20).unwrap();
        let covered: Vec<usize> = (0..20).filter(|f| e.row(*f) == [1.0, 2.0]).collect();
        assert_eq!(covered, enumerate_frames(0.10, 0.30, 30.0, 20));
        assert_eq!(covered, (3..9).collect::<Vec<_>>());
    }

    #[test]
    fn abutting_tokens_have_no_gap() {
        let tr = TimedTranscript::new(vec![tok("a", 0.0, 0.2), tok("b", 0.2, 0.5)]).unwrap();
        let e = replicate_tokens(&tr, &[vec![1.0], vec![2.0]], 1, 30.0, 15).unwrap();
        for f in 0..15 {
            let want = if f < 6 { 1.0 } else { 2.0 };
            assert_eq!(e.row(f)[0], want, "frame {f}");
        }
    }

    #[test]
    fn empty_transcript_is_zero() {
        let e = replicate_tokens(&TimedTranscript::default(), &[], 768, 30.0, 12).unwrap();
        assert_eq!(e.rows(), 12);
        assert!(e.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn out_of_range_tokens_are_clipped() {
        let tr = TimedTranscript::new(vec![tok("late", 0.9, 5.0), tok("early", -1.0, 0.05)]).unwrap();
        // sorted by start: "early" first, then "late"
        let e = replicate_tokens(&tr, &[vec![3.0], vec![7.0]], 1, 30.0, 30).unwrap();
        assert_eq!(e.row(0)[0], 3.0);
        assert_eq!(e.row(1)[0], 3.0);
        assert_eq!(e.row(2)[0], 0.0);
        assert_eq!(e.row(29)[0], 7.0);
    }

    #[test]
    fn fallback_audio_shapes_and_determinism() {
        let samples: Vec<f64> = (0..16000).map(|i| ((i * 31 % 97) as f64 / 97.0) - 0.5).collect();
        let a = AudioTrack::new(16000, samples).unwrap();
        let e1 = fallback_audio_features(&a, DEFAULT_FEATURE_SEED).unwrap();
        let e2 = fallback_audio_features(&a, DEFAULT_FEATURE_SEED).unwrap();
        assert_eq!((e1.rows(), e1.cols()), (50, 768));
        assert!(e1.data().iter().zip(e2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let e3 = fallback_audio_features(&a, 1).unwrap();
        assert_ne!(e1.data(), e3.data());
    }

    #[test]
    fn silence_gives_identical_rows() {
        let a = AudioTrack::new(16000, vec![0.0; 8000]).unwrap();
        let e = fallback_audio_features(&a, DEFAULT_FEATURE_SEED).unwrap();
        assert_eq!(e.rows(), 25);
        for r in 1..e.rows() {
            assert_eq!(e.row(r), e.row(0));
        }
        assert!(fallback_audio_features(&AudioTrack::new(16000, vec![]).unwrap(), 0).is_err());
    }

    fn emb(rows: usize, cols: usize, fill: f64) -> EmbeddingSequence {
        EmbeddingSequence::new(30.0, Modality::Audio, rows, cols, vec![fill; rows * cols]).unwrap()
    }

    #[test]
    fn align_truncates_to_minimum_and_concatenates() {
        let sk = chain(1, [0.0; 3]);
        let motion = PoseSequence::new(sk, 30.0, false, vec![0.0; 100 * 3]).unwrap();
        let clip = align_clip(&motion, &emb(99, 4, 1.0), &emb(100, 4, 2.0), &emb(100, 4, 3.0), &emb(100, 4, 4.0)).unwrap();
        assert_eq!(clip.num_frames(), 99);
        assert_eq!(clip.main.cols(), 8);
        assert_eq!(&clip.main.row(5)[..4], &[1.0; 4]);
        assert_eq!(&clip.main.row(5)[4..], &[2.0; 4]);
        assert_eq!(&clip.interlocutor.row(98)[4..], &[4.0; 4]);
    }

    #[test]
    fn align_errors() {
        let sk = chain(1, [0.0; 3]);
        let motion = PoseSequence::new(sk, 30.0, false, vec![0.0; 3]).unwrap();
        let one = align_clip(&motion, &emb(1, 2, 0.0), &emb(1, 2, 0.0), &emb(1, 2, 0.0), &emb(1, 2, 0.0)).unwrap();
        assert_eq!(one.num_frames(), 1);
        assert!(align_clip(&motion, &emb(0, 2, 0.0), &emb(1, 2, 0.0), &emb(1, 2, 0.0), &emb(1, 2, 0.0)).is_err());
        let mut fast = emb(1, 2, 0.0);
        fast.rate = 50.0;
        assert!(matches!(
            align_clip(&motion, &fast, &emb(1, 2, 0.0), &emb(1, 2, 0.0), &emb(1, 2, 0.0)),
            Err(Error::RateMismatch { .. })
        ));
    }
}
