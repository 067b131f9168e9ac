use std::path::Path;

use super::{AudioBuffer, CodecError};

const FULL_SCALE: f32 = 32768.0;

/// Reads a 16-bit integer PCM mono WAVE file.
pub fn read_wav(path: &Path) -> Result<AudioBuffer, CodecError> {
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CodecError::Unsupported(format!(
            "{} channels (mono only)",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(CodecError::Unsupported(format!(
            "{}-bit {:?} samples (16-bit integer PCM only)",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / FULL_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    AudioBuffer::new(spec.sample_rate, samples)
}

pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<(), CodecError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in audio.samples() {
        w.write_sample(to_i16(s)).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

fn to_i16(x: f32) -> i16 {
    (x * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

fn wav_err(e: hound::Error) -> CodecError {
    match e {
        hound::Error::IoError(io) => CodecError::Io(io),
        other => CodecError::Malformed(other.to_string()),
    }
}
