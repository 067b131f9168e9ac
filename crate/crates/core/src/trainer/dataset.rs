//! Training corpus: a manifest of (audio, features, id, domain) rows.
//!
//! The manifest is tab-separated, one utterance per line:
//! `audio_path  feature_path  utterance_id  domain`. Relative paths resolve
//! against the manifest's directory. A feature path of `-` derives features
//! from the audio with the synthetic generator; a `.txt` path uses the text
//! import, anything else the binary format. `#` lines are comments.

use std::path::{Path, PathBuf};

use crate::codec::{read_wav, AudioBuffer, MuLaw};
use crate::conditioning::{
    generate_synthetic_features, read_features, read_features_text, FrameFeatures,
};
use crate::wavenet::ModelConfig;

use super::TrainError;

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub domain: String,
    pub features: FrameFeatures,
    /// Encoded audio, exactly `frames × hop` samples.
    pub bins: Vec<usize>,
}

impl Utterance {
    /// Encodes the first `frames × hop` samples of `audio`.
    pub fn from_audio(
        id: impl Into<String>,
        domain: impl Into<String>,
        audio: &AudioBuffer,
        features: FrameFeatures,
        codec: &MuLaw,
    ) -> Result<Self, TrainError> {
        let id = id.into();
        let need = features.samples();
        if audio.len() < need {
            return Err(TrainError::Dataset(format!(
                "utterance {id}: {} samples, features need {need}",
                audio.len()
            )));
        }
        let bins = codec.encode_all(&audio.samples()[..need])?;
        Ok(Self {
            id,
            domain: domain.into(),
            features,
            bins,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub features: Option<PathBuf>,
    pub id: String,
    pub domain: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, TrainError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(TrainError::Dataset(format!(
                "manifest line {}: expected 4 tab-separated columns",
                i + 1
            )));
        }
        let resolve = |p: &str| {
            if Path::new(p).is_absolute() {
                PathBuf::from(p)
            } else {
                base.join(p)
            }
        };
        out.push(ManifestEntry {
            audio: resolve(cols[0]),
            features: (cols[1] != "-").then(|| resolve(cols[1])),
            id: cols[2].to_string(),
            domain: cols[3].to_string(),
        });
    }
    if out.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(out)
}

/// Loads and encodes every manifest entry. Generated features use
/// `feature_seed + row index`.
pub fn load_manifest(
    path: &Path,
    config: &ModelConfig,
    feature_seed: u64,
) -> Result<Vec<Utterance>, TrainError> {
    let codec = MuLaw::new(config.stack.bins)?;
    read_manifest(path)?
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let audio = read_wav(&e.audio)?;
            if audio.sample_rate() != config.sample_rate {
                return Err(TrainError::Dataset(format!(
                    "{}: sample rate {} vs model {}",
                    e.audio.display(),
                    audio.sample_rate(),
                    config.sample_rate
                )));
            }
            let features = match &e.features {
                None => {
                    generate_synthetic_features(&audio, config.hop_size, feature_seed + i as u64)?
                }
                Some(p) if p.extension().is_some_and(|x| x == "txt") => {
                    read_features_text(p, config.hop_size)?
                }
                Some(p) => read_features(p)?,
            };
            Utterance::from_audio(e.id, e.domain, &audio, features, &codec)
        })
        .collect()
}

/// Sum of harmonics `Σ a_k sin(2π k f0 t)` for `k = 1..`; the amplitudes
/// should sum to at most 1.
pub fn harmonic_signal(sample_rate: u32, secs: f64, f0: f64, amplitudes: &[f64]) -> AudioBuffer {
    let n = (sample_rate as f64 * secs).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let v: f64 = amplitudes
                .iter()
                .enumerate()
                .map(|(k, a)| a * (2.0 * std::f64::consts::PI * (k + 1) as f64 * f0 * t).sin())
                .sum();
            v.clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioBuffer::new(sample_rate, samples).expect("clamped samples")
}
