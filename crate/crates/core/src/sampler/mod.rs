//! Chunk-by-chunk autoregressive synthesis with Gumbel-max sampling.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{AudioBuffer, CodecError, MuLaw};
use crate::conditioning::{frame_embedding, ConditioningError, FrameFeatures, FEATURE_DIM};
use crate::neural::{Float, Graph, NeuralError, ParamStore, Tensor};
use crate::trainer::ChunkLayout;
use crate::wavenet::{IncrementalStack, ModelConfig, ModelError};

/// Gumbel draws use `u` clamped to `(ε, 1 − ε)`.
pub const GUMBEL_EPSILON: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("non-finite logit at bin {0}")]
    NonFiniteLogit(usize),
    #[error("empty logit vector")]
    Empty,
    #[error("feature/model mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `argmax_i(logit_i + g_i)` with `g_i = −ln(−ln u_i)`: one exact draw from
/// `softmax(logits)` at temperature 1.
pub fn gumbel_sample<T: Float, R: Rng + ?Sized>(
    logits: &[T],
    rng: &mut R,
) -> Result<usize, SampleError> {
    if logits.is_empty() {
        return Err(SampleError::Empty);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &l) in logits.iter().enumerate() {
        let l = l.to_f64().unwrap_or(f64::NAN);
        if !l.is_finite() {
            return Err(SampleError::NonFiniteLogit(i));
        }
        let u: f64 = rng
            .random::<f64>()
            .clamp(GUMBEL_EPSILON, 1.0 - GUMBEL_EPSILON);
        let v = l - (-u.ln()).ln();
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub layout: ChunkLayout,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layout: ChunkLayout::default(),
        }
    }
}

/// What happened in one chunk, for checking boundary continuity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChunkTrace {
    pub content_start_frame: usize,
    /// Bins of the warm-up region as fed to the network.
    pub warmup_bins: Vec<usize>,
    /// Bins chosen for the content region.
    pub content_bins: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthTrace {
    pub chunks: Vec<ChunkTrace>,
}

/// Picks the bin at each content position from that position's logits.
/// `position` is the utterance sample index.
pub trait BinPolicy<T> {
    fn choose(&mut self, logits: &[T], position: usize) -> Result<usize, SampleError>;
}

/// Gumbel-max sampling from one seeded stream.
pub struct GumbelPolicy {
    rng: ChaCha8Rng,
}

impl GumbelPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Float> BinPolicy<T> for GumbelPolicy {
    fn choose(&mut self, logits: &[T], _position: usize) -> Result<usize, SampleError> {
        gumbel_sample(logits, &mut self.rng)
    }
}

/// Runs the chunked generation loop with any policy. Chunk 1's history is
/// centre-bin padding; later chunks' history is the bins chosen in earlier
/// chunks. Returns the chosen bins (`frames × hop`).
pub fn generate<T: Float, P: BinPolicy<T>>(
    features: &FrameFeatures,
    params: &ParamStore<T>,
    config: &ModelConfig,
    layout: ChunkLayout,
    policy: &mut P,
    mut trace: Option<&mut SynthTrace>,
) -> Result<Vec<usize>, SampleError> {
    let hop = features.hop_size();
    if hop != config.hop_size {
        return Err(SampleError::Mismatch(format!(
            "feature hop {hop} vs model hop {}",
            config.hop_size
        )));
    }
    let frames = features.frames();
    let center = config.stack.bins / 2;
    let mut out = vec![center; frames * hop];
    let mut stack = IncrementalStack::new(params, config.stack)?;
    let mut logits = vec![T::zero(); config.stack.bins];
    let history = layout.history * hop;
    let mut content_start = 0;
    while content_start < frames {
        let content_frames = layout.content.min(frames - content_start);
        let window_start = content_start as isize - layout.history as isize;
        let n = layout.history + content_frames + layout.future;
        let rows: Vec<T> = features
            .padded_rows(window_start, n)
            .iter()
            .map(|&v| T::lit(v as f64))
            .collect();
        let emb = {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, false);
            let x = g.constant(Tensor::matrix(n, FEATURE_DIM, rows)?);
            let e = frame_embedding(&mut g, &bound, x, &config.conditioning_shape())?;
            g.value(e).clone()
        };
        let proj: Vec<Vec<T>> = (0..n)
            .map(|f| stack.project_conditioning(emb.row(f)))
            .collect();
        stack.reset();
        let base = window_start * hop as isize;
        let bin_at = |out: &[usize], p: usize| -> usize {
            let s = base + p as isize;
            if s >= 0 {
                out[s as usize]
            } else {
                center
            }
        };
        let mut ct = ChunkTrace {
            content_start_frame: content_start,
            ..Default::default()
        };
        let end = history + content_frames * hop;
        for p in 0..end {
            let input = if p == 0 { center } else { bin_at(&out, p - 1) };
            let cond = &proj[p / hop];
            if p < history {
                stack.step(input, cond, None)?;
                ct.warmup_bins.push(bin_at(&out, p));
            } else {
                stack.step(input, cond, Some(&mut logits))?;
                let s = (base + p as isize) as usize;
                let b = policy.choose(&logits, s)?;
                if b >= config.stack.bins {
                    return Err(SampleError::Mismatch(format!("policy chose bin {b}")));
                }
                out[s] = b;
                ct.content_bins.push(b);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.chunks.push(ct);
        }
        content_start += content_frames;
    }
    Ok(out)
}

/// Synthesizes `frames × hop` samples with Gumbel-max sampling.
pub fn synthesize(
    features: &FrameFeatures,
    params: &ParamStore<f32>,
    config: &ModelConfig,
    sampler: &SamplerConfig,
    trace: Option<&mut SynthTrace>,
) -> Result<(AudioBuffer, Vec<usize>), SampleError> {
    let mut policy = GumbelPolicy::new(sampler.seed);
    let bins = generate(features, params, config, sampler.layout, &mut policy, trace)?;
    let codec = MuLaw::new(config.stack.bins)?;
    let audio = AudioBuffer::new(config.sample_rate, codec.decode_all(&bins)?)?;
    Ok((audio, bins))
}

/// CSV of `sample,bin,amplitude` for debugging.
pub fn write_bin_trace(path: &Path, bins: &[usize], codec: &MuLaw) -> Result<(), SampleError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample,bin,amplitude")?;
    for (i, &b) in bins.iter().enumerate() {
        writeln!(w, "{i},{b},{}", codec.decode(b)?)?;
    }
    w.flush()?;
    Ok(())
}
