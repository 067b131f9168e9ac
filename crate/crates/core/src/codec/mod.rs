//! μ-law quantization and WAVE file I/O.

mod mulaw;
mod wav;

pub use mulaw::{mulaw_decode, mulaw_encode, BinIndex, MuLaw, DEFAULT_BINS};
pub use wav::{read_wav, write_wav};

pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("amplitude {0} outside [-1, 1]")]
    Domain(f64),
    #[error("bin {bin} out of range for {bins} levels")]
    BinOutOfRange { bin: usize, bins: usize },
    #[error("invalid number of quantization levels: {0}")]
    InvalidBinCount(usize),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("malformed wave file: {0}")]
    Malformed(String),
    #[error("unsupported wave format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    samples: Vec<f32>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self, CodecError> {
        if sample_rate == 0 {
            return Err(CodecError::ZeroSampleRate);
        }
        if let Some(&bad) = samples.iter().find(|s| !(s.abs() <= 1.0)) {
            return Err(CodecError::Domain(bad as f64));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
