//! Chunked, teacher-forced training with content-only loss.

mod chunk;
mod dataset;

pub use chunk::{
    chunk_utterance, masked_loss, Chunk, ChunkLayout, CHUNK_FRAMES, CONTENT_FRAMES, FUTURE_FRAMES,
    HISTORY_FRAMES,
};
pub use dataset::{harmonic_signal, load_manifest, read_manifest, ManifestEntry, Utterance};

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditioning::{frame_embedding, upsample, ConditioningError, FEATURE_DIM};
use crate::config::{ConfigError, KeyValues};
use crate::neural::{
    adam_step, write_checkpoint, AdamState, BoundParams, Float, Graph, LearningRateSchedule,
    NeuralError, ParamStore, Tensor, Var,
};
use crate::wavenet::{stack_forward_rows, ModelConfig, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("utterance has no frames")]
    EmptyUtterance,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(
        "warm-up span of {span} samples is shorter than the receptive field of {receptive_field}"
    )]
    Warmup { span: usize, receptive_field: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: u32,
        batch: usize,
        detail: String,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Run settings. `hop_size` comes from the [`ModelConfig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub epochs: u32,
    pub seed: u64,
    pub batch_size: usize,
    pub schedule: LearningRateSchedule,
}

pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "seed",
    "batch_size",
    "learning_rate",
    "anneal_factor",
];

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            batch_size: 1,
            schedule: LearningRateSchedule::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let d = Self::default();
        let c = Self {
            epochs: kv.get_or("epochs", d.epochs)?,
            seed: kv.get_or("seed", d.seed)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            schedule: LearningRateSchedule::new(
                kv.get_or("learning_rate", d.schedule.initial_rate)?,
                kv.get_or("anneal_factor", d.schedule.anneal_factor)?,
            )
            .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        };
        if c.epochs < 1 || c.batch_size < 1 {
            return Err(ConfigError::Invalid(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(c)
    }
}

/// One line of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// Zero-based; the rate used is `schedule.rate(epoch)`.
    pub epoch: u32,
    /// Mean content cross-entropy over all content samples seen this epoch,
    /// measured before each batch's update.
    pub loss: f64,
    pub learning_rate: f64,
}

pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub adam: AdamState,
    pub trace: Vec<EpochRecord>,
}

/// Where to write per-epoch artifacts.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

impl TrainOutput {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("model.ckpt")
    }

    pub fn config_path(&self) -> PathBuf {
        self.dir.join("model.cfg")
    }

    pub fn trace_path(&self) -> PathBuf {
        self.dir.join("loss_trace.csv")
    }
}

/// Builds the mean content cross-entropy of one chunk. The stack runs only
/// up to the end of the content region and the head only over content rows;
/// later samples cannot influence content logits.
pub fn chunk_content_loss<T: Float>(
    g: &mut Graph<T>,
    params: &BoundParams,
    config: &ModelConfig,
    chunk: &Chunk,
) -> Result<Var, TrainError> {
    let content = chunk.content_samples();
    let logits = chunk_logits(g, params, config, chunk, content.clone())?;
    let targets = &chunk.bins[content];
    Ok(g.cross_entropy(logits, targets, None)?)
}

/// Logits for sample rows `rows` of the chunk window (`rows.end` bounds the
/// stack input).
pub fn chunk_logits<T: Float>(
    g: &mut Graph<T>,
    params: &BoundParams,
    config: &ModelConfig,
    chunk: &Chunk,
    rows: std::ops::Range<usize>,
) -> Result<Var, TrainError> {
    if chunk.hop != config.hop_size {
        return Err(TrainError::Length(format!(
            "chunk hop {} vs model hop {}",
            chunk.hop, config.hop_size
        )));
    }
    let frames = chunk.frames();
    let feats: Vec<T> = chunk.features.iter().map(|&v| T::lit(v as f64)).collect();
    let x = g.constant(Tensor::matrix(frames, FEATURE_DIM, feats)?);
    let emb = frame_embedding(g, params, x, &config.conditioning_shape())?;
    let cond = upsample(g, emb, chunk.hop)?;
    let end = rows.end;
    let cond = if end < chunk.samples() {
        g.slice_rows(cond, 0, end)?
    } else {
        cond
    };
    Ok(stack_forward_rows(
        g,
        params,
        &config.stack,
        &chunk.bins[..end],
        cond,
        rows,
    )?)
}

struct ChunkResult {
    loss: f64,
    weight: usize,
    grads: Vec<Tensor<f32>>,
}

fn chunk_gradients(
    params: &ParamStore<f32>,
    config: &ModelConfig,
    chunk: &Chunk,
) -> Result<ChunkResult, TrainError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let loss = chunk_content_loss(&mut g, &bound, config, chunk)?;
    let value = g.value(loss).data()[0] as f64;
    let mut grads = g.backward(loss)?;
    Ok(ChunkResult {
        loss: value,
        weight: chunk.content_frames * chunk.hop,
        grads: bound.collect(&g, &mut grads),
    })
}

/// Chunks every utterance; checks the warm-up span against the receptive field.
pub fn dataset_chunks(
    utterances: &[Utterance],
    config: &ModelConfig,
) -> Result<Vec<Chunk>, TrainError> {
    if utterances.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let layout = ChunkLayout::default();
    layout.check_warmup(config.hop_size, config.stack.receptive_field())?;
    let mut all = Vec::new();
    for u in utterances {
        if u.features.hop_size() != config.hop_size {
            return Err(TrainError::Dataset(format!(
                "utterance {}: feature hop {} vs model hop {}",
                u.id,
                u.features.hop_size(),
                config.hop_size
            )));
        }
        all.extend(chunk_utterance(
            &u.features,
            &u.bins,
            layout,
            config.stack.bins / 2,
        )?);
    }
    Ok(all)
}

/// Trains from `initial` (or a fresh seeded init). Deterministic for a fixed
/// seed: chunk order is a seeded shuffle per epoch, and per-chunk gradients
/// are reduced in batch order.
pub fn train(
    utterances: &[Utterance],
    config: &ModelConfig,
    run: &TrainRunConfig,
    initial: Option<(ParamStore<f32>, AdamState)>,
    output: Option<&TrainOutput>,
) -> Result<TrainOutcome, TrainError> {
    let chunks = dataset_chunks(utterances, config)?;
    let (mut params, mut adam) = match initial {
        Some(p) => p,
        None => {
            let p = crate::wavenet::init_params::<f32>(config, run.seed)?;
            let a = AdamState::new(&p);
            (p, a)
        }
    };
    if let Some(out) = output {
        std::fs::create_dir_all(&out.dir)?;
        std::fs::write(out.config_path(), config.to_text())?;
    }
    let mut trace = Vec::with_capacity(run.epochs as usize);
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    for epoch in 0..run.epochs {
        let rate = run.schedule.rate(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(
            run.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(epoch as u64),
        );
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut weight_sum) = (0.0f64, 0usize);
        for (b, batch) in order.chunks(run.batch_size).enumerate() {
            let results: Vec<ChunkResult> = batch
                .par_iter()
                .map(|&i| chunk_gradients(&params, config, &chunks[i]))
                .collect::<Result<_, _>>()?;
            if let Some(bad) = results.iter().position(|r| !r.loss.is_finite()) {
                let c = &chunks[batch[bad]];
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!(
                        "chunk with content frames {:?} has loss {}",
                        c.content_frame_range(),
                        results[bad].loss
                    ),
                });
            }
            let total: usize = results.iter().map(|r| r.weight).sum();
            let mut grads = params.zeros_like();
            for r in &results {
                let w = r.weight as f32 / total as f32;
                for (acc, gr) in grads.iter_mut().zip(&r.grads) {
                    for (a, &v) in acc.data_mut().iter_mut().zip(gr.data()) {
                        *a += w * v;
                    }
                }
                loss_sum += r.loss * r.weight as f64;
                weight_sum += r.weight;
            }
            adam_step(&mut params, &grads, &mut adam, rate)?;
        }
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / weight_sum as f64,
            learning_rate: rate,
        };
        log::info!(
            "epoch {} loss {:.5} lr {:.3e}",
            rec.epoch,
            rec.loss,
            rec.learning_rate
        );
        trace.push(rec);
        if let Some(out) = output {
            let tmp = out.dir.join("model.ckpt.tmp");
            write_checkpoint(&tmp, &params, Some(&adam))?;
            std::fs::rename(&tmp, out.checkpoint_path())?;
            write_loss_trace(&out.trace_path(), &trace)?;
        }
    }
    Ok(TrainOutcome {
        params,
        adam,
        trace,
    })
}

/// Teacher-forced mean content cross-entropy over every chunk of the data.
pub fn evaluate(
    params: &ParamStore<f32>,
    utterances: &[Utterance],
    config: &ModelConfig,
) -> Result<f64, TrainError> {
    let chunks = dataset_chunks(utterances, config)?;
    let losses: Vec<(f64, usize)> = chunks
        .par_iter()
        .map(|c| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, false);
            let l = chunk_content_loss(&mut g, &bound, config, c)?;
            Ok((g.value(l).data()[0] as f64, c.content_frames * c.hop))
        })
        .collect::<Result<_, TrainError>>()?;
    let total: usize = losses.iter().map(|l| l.1).sum();
    Ok(losses.iter().map(|(l, w)| l * *w as f64).sum::<f64>() / total as f64)
}

pub fn write_loss_trace(path: &Path, trace: &[EpochRecord]) -> Result<(), std::io::Error> {
    let mut f = File::create(path)?;
    writeln!(f, "epoch,loss,learning_rate")?;
    for r in trace {
        writeln!(f, "{},{},{}", r.epoch, r.loss, r.learning_rate)?;
    }
    Ok(())
}
