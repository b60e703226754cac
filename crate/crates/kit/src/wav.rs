//! WAV input/output through `hound`.

use std::path::Path;

use gesture_core::signal::AudioTrack;

use crate::error::{Error, Result};

/// Read a WAV file as mono samples in [-1, 1]. Multi-channel files are
/// averaged across channels.
pub fn load_wav(path: &Path) -> Result<AudioTrack> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioTrack::new(spec.sample_rate, samples)?)
}

/// Write 16-bit mono PCM, clipping to [-1, 1].
pub fn save_wav(path: &Path, audio: &AudioTrack) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for s in &audio.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}
