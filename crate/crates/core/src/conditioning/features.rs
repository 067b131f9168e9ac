//! Per-frame conditioning inputs and their file formats.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic      8 bytes "SSWSFEAT"
//! version    u32     1
//! frames     u32     F
//! dim        u32     88
//! hop_size   u32     samples per frame
//! values     f32 × F × 88, row-major
//! ```
//!
//! The text form is one frame per line with 88 whitespace-separated numbers.
//! Blank lines and lines starting with `#` are ignored, except for an
//! optional `# hop_size = N` directive.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ConditioningError;
use crate::codec::AudioBuffer;

pub const LINGUISTIC_DIMS: usize = 86;
pub const FEATURE_DIM: usize = 88;
pub const VUV_COLUMN: usize = 86;
pub const LOG_F0_COLUMN: usize = 87;

const FEATURE_MAGIC: &[u8; 8] = b"SSWSFEAT";
const FEATURE_VERSION: u32 = 1;

/// `frames × 88` matrix: 86 linguistic values, a voiced flag, and log-f0.
/// Unvoiced frames carry log-f0 = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    frames: usize,
    hop_size: usize,
    data: Vec<f32>,
}

impl FrameFeatures {
    pub fn new(frames: usize, hop_size: usize, data: Vec<f32>) -> Result<Self, ConditioningError> {
        if hop_size < 1 {
            return Err(ConditioningError::InvalidHop(hop_size));
        }
        if data.len() != frames * FEATURE_DIM {
            return Err(ConditioningError::Dimension(format!(
                "{} values for {frames} frames of {FEATURE_DIM} columns",
                data.len()
            )));
        }
        let f = Self {
            frames,
            hop_size,
            data,
        };
        for i in 0..frames {
            let row = f.row(i);
            let vuv = row[VUV_COLUMN];
            if vuv != 0.0 && vuv != 1.0 {
                return Err(ConditioningError::Invalid(format!(
                    "frame {i}: voiced flag {vuv} is not 0 or 1"
                )));
            }
            if vuv == 1.0 && !row[LOG_F0_COLUMN].is_finite() {
                return Err(ConditioningError::Invalid(format!(
                    "frame {i}: voiced frame has non-finite log-f0"
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ConditioningError::Invalid(format!(
                    "frame {i}: non-finite feature value"
                )));
            }
        }
        Ok(f)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn samples(&self) -> usize {
        self.frames * self.hop_size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    pub fn is_voiced(&self, i: usize) -> bool {
        self.row(i)[VUV_COLUMN] == 1.0
    }

    pub fn log_f0(&self, i: usize) -> f32 {
        self.row(i)[LOG_F0_COLUMN]
    }

    /// Rows for frames `start .. start + len` where `start` may be negative or
    /// run past the end; missing frames are all-zero (unvoiced, log-f0 0).
    pub fn padded_rows(&self, start: isize, len: usize) -> Vec<f32> {
        let mut out = vec![0.0; len * FEATURE_DIM];
        for j in 0..len {
            let f = start + j as isize;
            if f >= 0 && (f as usize) < self.frames {
                out[j * FEATURE_DIM..(j + 1) * FEATURE_DIM].copy_from_slice(self.row(f as usize));
            }
        }
        out
    }
}

/// Autocorrelation pitch estimate for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PitchEstimate {
    pub voiced: bool,
    pub f0_hz: f64,
    pub peak: f64,
}

/// Settings of the autocorrelation pitch tracker.
#[derive(Clone, Copy, Debug)]
pub struct PitchTracker {
    pub min_f0: f64,
    pub max_f0: f64,
    pub window_secs: f64,
    /// Minimum normalized autocorrelation peak for a voiced decision.
    pub voicing_threshold: f64,
    /// Windows quieter than this RMS are unvoiced.
    pub silence_rms: f64,
}

impl Default for PitchTracker {
    fn default() -> Self {
        Self {
            min_f0: 50.0,
            max_f0: 500.0,
            window_secs: 0.04,
            voicing_threshold: 0.45,
            silence_rms: 1e-4,
        }
    }
}

impl PitchTracker {
    /// For each frame, a window of `window_secs` centred on the frame centre
    /// is scored by normalized cross-correlation at every lag in
    /// `[sr/max_f0, sr/min_f0]`. The smallest-lag local maximum within 85 % of
    /// the best peak wins (guards against octave errors) and is refined by
    /// parabolic interpolation.
    pub fn track(&self, audio: &AudioBuffer, hop: usize) -> Vec<PitchEstimate> {
        let sr = audio.sample_rate() as f64;
        let x = audio.samples();
        let frames = x.len() / hop;
        let win = (self.window_secs * sr).round() as isize;
        let min_lag = (sr / self.max_f0).floor().max(2.0) as usize;
        let max_lag = ((sr / self.min_f0).ceil() as usize).min(win as usize - 2);
        let sample = |i: isize| {
            if i >= 0 && (i as usize) < x.len() {
                x[i as usize] as f64
            } else {
                0.0
            }
        };
        (0..frames)
            .map(|f| {
                let center = (f * hop + hop / 2) as isize;
                let w: Vec<f64> = (0..win).map(|n| sample(center - win / 2 + n)).collect();
                self.estimate(&w, sr, min_lag, max_lag)
            })
            .collect()
    }

    fn estimate(&self, w: &[f64], sr: f64, min_lag: usize, max_lag: usize) -> PitchEstimate {
        let unvoiced = PitchEstimate {
            voiced: false,
            f0_hz: 0.0,
            peak: 0.0,
        };
        let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        if rms < self.silence_rms || min_lag + 1 >= max_lag {
            return unvoiced;
        }
        let r: Vec<f64> = (0..=max_lag + 1)
            .map(|lag| {
                if lag < min_lag.saturating_sub(1) {
                    return 0.0;
                }
                let (a, b) = (&w[..w.len() - lag], &w[lag..]);
                let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                let ea: f64 = a.iter().map(|v| v * v).sum();
                let eb: f64 = b.iter().map(|v| v * v).sum();
                if ea <= 0.0 || eb <= 0.0 {
                    0.0
                } else {
                    num / (ea * eb).sqrt()
                }
            })
            .collect();
        let peaks: Vec<usize> = (min_lag..=max_lag)
            .filter(|&l| r[l] >= r[l - 1] && r[l] >= r[l + 1] && r[l] > 0.0)
            .collect();
        let Some(best) = peaks.iter().map(|&l| r[l]).reduce(f64::max) else {
            return unvoiced;
        };
        if best < self.voicing_threshold {
            return PitchEstimate {
                peak: best,
                ..unvoiced
            };
        }
        let lag = peaks
            .into_iter()
            .find(|&l| r[l] >= 0.85 * best)
            .expect("best peak qualifies");
        let (y0, y1, y2) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let offset = if denom.abs() > 1e-12 {
            (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        PitchEstimate {
            voiced: true,
            f0_hz: sr / (lag as f64 + offset),
            peak: r[lag],
        }
    }
}

/// Builds conditioning features from a waveform: voicing and log-f0 come
/// from [`PitchTracker`], the 86 linguistic columns from a seeded AR(1)
/// process (ρ = 0.9, unit variance) per column. Frame count is
/// `floor(len / hop)`.
pub fn generate_synthetic_features(
    audio: &AudioBuffer,
    hop: usize,
    seed: u64,
) -> Result<FrameFeatures, ConditioningError> {
    if hop < 1 {
        return Err(ConditioningError::InvalidHop(hop));
    }
    if audio.len() < hop {
        return Err(ConditioningError::Invalid(format!(
            "audio of {} samples is shorter than one frame",
            audio.len()
        )));
    }
    let pitch = PitchTracker::default().track(audio, hop);
    let frames = pitch.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = 0.9f64;
    let innov = (1.0 - rho * rho).sqrt();
    let mut state: Vec<f64> = (0..LINGUISTIC_DIMS)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut data = Vec::with_capacity(frames * FEATURE_DIM);
    for p in &pitch {
        for s in state.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *s = rho * *s + innov * e;
        }
        data.extend(state.iter().map(|&v| v as f32));
        if p.voiced {
            data.push(1.0);
            data.push(p.f0_hz.ln() as f32);
        } else {
            data.push(0.0);
            data.push(0.0);
        }
    }
    FrameFeatures::new(frames, hop, data)
}

pub fn write_features(path: &Path, f: &FrameFeatures) -> Result<(), ConditioningError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    for v in [
        FEATURE_VERSION,
        f.frames as u32,
        FEATURE_DIM as u32,
        f.hop_size as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(f.data.len() * 4);
    for v in &f.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FrameFeatures, ConditioningError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(ConditioningError::Format("bad magic".into()));
    }
    let mut header = [0u32; 4];
    for h in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b);
    }
    let [version, frames, dim, hop] = header;
    if version != FEATURE_VERSION {
        return Err(ConditioningError::Format(format!(
            "unsupported version {version}"
        )));
    }
    if dim as usize != FEATURE_DIM {
        return Err(ConditioningError::Format(format!(
            "feature dimension {dim}, expected {FEATURE_DIM}"
        )));
    }
    let mut buf = vec![0u8; frames as usize * FEATURE_DIM * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FrameFeatures::new(frames as usize, hop as usize, data)
}

/// Parses the text fixture form; `hop_size` applies unless the file sets one.
pub fn parse_features_text(
    text: &str,
    hop_size: usize,
) -> Result<FrameFeatures, ConditioningError> {
    let mut hop = hop_size;
    let mut data = Vec::new();
    let mut frames = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                if k.trim() == "hop_size" {
                    hop = v.trim().parse().map_err(|_| {
                        ConditioningError::Format(format!("line {}: bad hop_size", lineno + 1))
                    })?;
                }
            }
            continue;
        }
        let row: Vec<f32> = line
            .split_whitespace()
            .map(|t| t.parse::<f32>())
            .collect::<Result<_, _>>()
            .map_err(|e| ConditioningError::Format(format!("line {}: {e}", lineno + 1)))?;
        if row.len() != FEATURE_DIM {
            return Err(ConditioningError::Format(format!(
                "line {}: {} columns, expected {FEATURE_DIM}",
                lineno + 1,
                row.len()
            )));
        }
        data.extend(row);
        frames += 1;
    }
    FrameFeatures::new(frames, hop, data)
}

pub fn read_features_text(
    path: &Path,
    hop_size: usize,
) -> Result<FrameFeatures, ConditioningError> {
    parse_features_text(&std::fs::read_to_string(path)?, hop_size)
}
