//! Synthetic dyadic corpus for smoke tests and demos.
//!
//! Each clip has two speakers taking turns, a small DC offset and cross-talk
//! on both channels, word-timed transcripts, and a 30 Hz upper-body motion
//! whose arm swing follows the main speaker's voice activity.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gesture_core::embedding::{TimedToken, TimedTranscript, MOTION_RATE};
use gesture_core::motion::{Axis, Channel, Joint, MotionClip, Skeleton};
use gesture_core::rng::Rng;
use gesture_core::signal::AudioTrack;

use crate::bvh::save_bvh;
use crate::pipeline::write_file;
use crate::transcript::write_transcript;
use crate::wav::save_wav;

const SAMPLE_RATE: u32 = 16_000;
const SPIKES: usize = 8;
const WORDS: [&str; 10] = ["yes", "so", "we", "went", "there", "and", "then", "it", "was", "great"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoOptions {
    pub clips: usize,
    pub seconds: f64,
    pub seed: u64,
    /// Clip index that gets a run of one-frame root jumps.
    pub spike_clip: Option<usize>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            clips: 5,
            seconds: 8.0,
            seed: 0,
            spike_clip: None,
        }
    }
}

fn joint(name: &str, parent: Option<usize>, offset: [f64; 3], end: Option<[f64; 3]>) -> Joint {
    let mut channels = Vec::new();
    if parent.is_none() {
        channels.extend([Axis::X, Axis::Y, Axis::Z].map(Channel::Position));
    }
    channels.extend([Axis::Z, Axis::X, Axis::Y].map(Channel::Rotation));
    Joint {
        name: name.into(),
        parent,
        offset,
        channels,
        end_site: end,
    }
}

pub fn demo_skeleton() -> Skeleton {
    Skeleton::new(vec![
        joint("Hips", None, [0.0, 100.0, 0.0], None),
        joint("Spine", Some(0), [0.0, 10.0, 0.0], None),
        joint("Neck", Some(1), [0.0, 25.0, 0.0], None),
        joint("Head", Some(2), [0.0, 8.0, 0.0], Some([0.0, 12.0, 0.0])),
        joint("RightShoulder", Some(1), [-8.0, 22.0, 0.0], None),
        joint("RightElbow", Some(4), [-28.0, 0.0, 0.0], None),
        joint("RightWrist", Some(5), [-25.0, 0.0, 0.0], Some([-8.0, 0.0, 0.0])),
        joint("LeftShoulder", Some(1), [8.0, 22.0, 0.0], None),
        joint("LeftElbow", Some(7), [28.0, 0.0, 0.0], None),
        joint("LeftWrist", Some(8), [25.0, 0.0, 0.0], Some([8.0, 0.0, 0.0])),
    ])
    .expect("valid demo skeleton")
}

/// Alternating turns: main speaks first, turns last 0.8 to 2.2 s with short gaps.
type Spans = Vec<(f64, f64)>;

fn turns(seconds: f64, rng: &mut Rng) -> (Spans, Spans) {
    let (mut main, mut inter) = (Vec::new(), Vec::new());
    let mut t = 0.2 + 0.3 * rng.uniform();
    let mut speaker = 0;
    while t < seconds - 0.5 {
        let end = (t + 0.8 + 1.4 * rng.uniform()).min(seconds - 0.1);
        if speaker == 0 { &mut main } else { &mut inter }.push((t, end));
        t = end + 0.15 + 0.4 * rng.uniform();
        speaker = 1 - speaker;
    }
    (main, inter)
}

fn transcript(spans: &[(f64, f64)], rng: &mut Rng) -> TimedTranscript {
    let mut tokens = Vec::new();
    for &(s, e) in spans {
        let mut t = s;
        while t < e - 0.05 {
            let end = (t + 0.18 + 0.2 * rng.uniform()).min(e);
            tokens.push(TimedToken {
                text: WORDS[rng.below(WORDS.len())].into(),
                start: t,
                end,
            });
            t = end;
        }
    }
    TimedTranscript::new(tokens).expect("ordered tokens")
}

/// Activity in [0, 1] with linear edges of length `edge` seconds.
fn activity(spans: &[(f64, f64)], t: f64, edge: f64) -> f64 {
    spans
        .iter()
        .map(|&(s, e)| ((t - s) / edge).min((e - t) / edge).clamp(0.0, 1.0))
        .fold(0.0, f64::max)
}

/// Smoothstep of the activity so limbs ease in and out of gesturing.
fn gesture_level(spans: &[(f64, f64)], t: f64) -> f64 {
    let a = activity(spans, t, 0.6);
    a * a * (3.0 - 2.0 * a)
}

fn voice(spans: &[(f64, f64)], seconds: f64, f0: f64, rng: &mut Rng) -> Vec<f64> {
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let a = activity(spans, t, 0.1);
            if a == 0.0 {
                return 0.0;
            }
            let syllable = 0.5 + 0.5 * (2.0 * PI * 4.0 * t).sin();
            let pitch = f0 * (1.0 + 0.05 * (2.0 * PI * 0.7 * t).sin());
            let tone: f64 = (1..=4).map(|h| (2.0 * PI * pitch * h as f64 * t).sin() / h as f64).sum();
            0.25 * a * syllable * (tone + 0.3 * rng.normal())
        })
        .collect()
}

fn motion(spans: &[(f64, f64)], seconds: f64, rng: &mut Rng, spike: bool) -> MotionClip {
    let skeleton = demo_skeleton();
    let frames = (seconds * MOTION_RATE).round() as usize;
    let phase = 2.0 * PI * rng.uniform();
    let mut values = Vec::with_capacity(frames * skeleton.channel_count());
    for f in 0..frames {
        let t = f as f64 / MOTION_RATE;
        let a = gesture_level(spans, t);
        let beat = (2.0 * PI * 0.7 * t + phase).sin();
        // quadrature component keeps wrist speed away from zero mid-gesture
        let sway_beat = (2.0 * PI * 0.7 * t + phase).cos();
        // idle drift so listening arms are not frozen
        let (ia, ib) = ((2.0 * PI * 0.3 * t).sin(), (2.0 * PI * 0.3 * t).cos());
        let sway = 2.0 * (2.0 * PI * 0.2 * t).sin();
        // root: position then ZXY rotation
        values.extend([sway, 100.0, 0.0, 0.0, 0.0, 3.0 * (2.0 * PI * 0.1 * t).sin()]);
        values.extend([0.0, 2.0 * a, 0.0]);
        values.extend([0.0, 0.0, 0.0]);
        values.extend([0.0, 5.0 * a * beat, 0.0]);
        // arms hang down and rise with speech
        values.extend([-70.0 + 25.0 * a, 10.0 * a * beat, 0.0]);
        values.extend([35.0 * a * beat + 8.0 * ia, 30.0 * a * sway_beat + 8.0 * ib, -20.0 * a]);
        values.extend([10.0 * a * beat, 0.0, 0.0]);
        values.extend([70.0 - 20.0 * a, -8.0 * a * beat, 0.0]);
        values.extend([-25.0 * a * beat - 8.0 * ib, -22.0 * a * sway_beat + 8.0 * ia, 15.0 * a]);
        values.extend([-8.0 * a * beat, 0.0, 0.0]);
    }
    if spike {
        // a run of one-frame root jumps, like a tracker repeatedly losing the hip marker
        for k in 1..=SPIKES {
            let f = k * frames / (SPIKES + 1);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            values[f * skeleton.channel_count()] += sign * 60.0;
        }
    }
    MotionClip::new(skeleton, 1.0 / MOTION_RATE, values).expect("consistent demo motion")
}

/// Write the corpus under `dir` and return the manifest path.
pub fn write_demo_corpus(dir: &Path, opts: &DemoOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = String::from("# id\tmotion\tmain_audio\tinterloc_audio\tmain_transcript\tinterloc_transcript\n");
    for c in 0..opts.clips {
        let id = format!("clip{c:02}");
        let mut rng = Rng::derive(opts.seed, &[0x6465_6d6f, c as u64]);
        let (main_spans, inter_spans) = turns(opts.seconds, &mut rng);
        let main_voice = voice(&main_spans, opts.seconds, 120.0 + 40.0 * rng.uniform(), &mut rng);
        let inter_voice = voice(&inter_spans, opts.seconds, 190.0 + 40.0 * rng.uniform(), &mut rng);
        let mix = |own: &[f64], other: &[f64], dc: f64| -> Vec<f64> {
            own.iter().zip(other).map(|(a, b)| a + 0.15 * b + dc).collect()
        };
        let main_audio = AudioTrack::new(SAMPLE_RATE, mix(&main_voice, &inter_voice, 0.02))?;
        let inter_audio = AudioTrack::new(SAMPLE_RATE, mix(&inter_voice, &main_voice, -0.01))?;
        let sub = dir.join(&id);
        std::fs::create_dir_all(&sub)?;
        save_wav(&sub.join("main.wav"), &main_audio)?;
        save_wav(&sub.join("interloc.wav"), &inter_audio)?;
        write_file(&sub.join("main.tsv"), write_transcript(&transcript(&main_spans, &mut rng)))?;
        write_file(&sub.join("interloc.tsv"), write_transcript(&transcript(&inter_spans, &mut rng)))?;
        let spike = opts.spike_clip == Some(c);
        save_bvh(&sub.join("motion.bvh"), &motion(&main_spans, opts.seconds, &mut rng, spike))?;
        manifest.push_str(&format!(
            "{id}\t{id}/motion.bvh\t{id}/main.wav\t{id}/interloc.wav\t{id}/main.tsv\t{id}/interloc.tsv\n"
        ));
    }
    let path = dir.join("manifest.tsv");
    write_file(&path, manifest)?;
    Ok(path)
}
