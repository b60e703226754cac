//! Audio repair and rate conversion.

pub mod audio;
pub mod resample;

pub use audio::{mute_crosstalk, mute_gain, remove_dc, AudioTrack, RampShape, SpeechIntervals};
pub use resample::{resample_polyphase, PolyphaseResampler};
