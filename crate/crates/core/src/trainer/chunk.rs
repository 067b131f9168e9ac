use crate::conditioning::{FrameFeatures, FEATURE_DIM};
use crate::neural::{Float, Graph, NeuralError, Var};

use super::TrainError;

pub const HISTORY_FRAMES: usize = 35;
pub const CONTENT_FRAMES: usize = 120;
pub const FUTURE_FRAMES: usize = 10;
pub const CHUNK_FRAMES: usize = HISTORY_FRAMES + CONTENT_FRAMES + FUTURE_FRAMES;

/// Frame window of one chunk: warm-up history, content (the only frames in
/// the loss), and look-ahead for the bi-directional conditioning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkLayout {
    pub history: usize,
    pub content: usize,
    pub future: usize,
}

impl Default for ChunkLayout {
    fn default() -> Self {
        Self {
            history: HISTORY_FRAMES,
            content: CONTENT_FRAMES,
            future: FUTURE_FRAMES,
        }
    }
}

impl ChunkLayout {
    pub fn frames(&self) -> usize {
        self.history + self.content + self.future
    }

    /// The warm-up region must cover the receptive field so that every
    /// content sample past the utterance start sees only real history.
    pub fn check_warmup(&self, hop: usize, receptive_field: usize) -> Result<(), TrainError> {
        if self.history * hop < receptive_field {
            return Err(TrainError::Warmup {
                span: self.history * hop,
                receptive_field,
            });
        }
        Ok(())
    }
}

/// One training or synthesis window.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    /// Utterance frame at the start of the window; negative inside the
    /// zero-padded region before the utterance.
    pub window_start: isize,
    pub content_start: usize,
    pub content_frames: usize,
    pub hop: usize,
    pub layout: ChunkLayout,
    /// `frames() × 88`; padded frames are all zero.
    pub features: Vec<f32>,
    /// Encoded audio, `frames() × hop`; padding is the centre bin.
    pub bins: Vec<usize>,
    /// 1 on content samples, 0 elsewhere.
    pub mask: Vec<f32>,
}

impl Chunk {
    /// Frames in this window: history + content + future. Shorter than the
    /// full layout only for a trailing partial chunk.
    pub fn frames(&self) -> usize {
        self.layout.history + self.content_frames + self.layout.future
    }

    pub fn samples(&self) -> usize {
        self.frames() * self.hop
    }

    /// Sample range of the content region within the window.
    pub fn content_samples(&self) -> std::ops::Range<usize> {
        let start = self.layout.history * self.hop;
        start..start + self.content_frames * self.hop
    }

    pub fn content_frame_range(&self) -> std::ops::Range<usize> {
        self.content_start..self.content_start + self.content_frames
    }
}

/// Splits an utterance into chunks whose content regions tile its frames.
/// `bins` must hold exactly `frames × hop` encoded samples.
pub fn chunk_utterance(
    features: &FrameFeatures,
    bins: &[usize],
    layout: ChunkLayout,
    center_bin: usize,
) -> Result<Vec<Chunk>, TrainError> {
    let (frames, hop) = (features.frames(), features.hop_size());
    if frames < 1 {
        return Err(TrainError::EmptyUtterance);
    }
    if bins.len() != frames * hop {
        return Err(TrainError::Length(format!(
            "{} samples for {frames} frames of {hop}",
            bins.len()
        )));
    }
    if layout.content < 1 {
        return Err(TrainError::Length(
            "content region must hold at least one frame".into(),
        ));
    }
    let mut chunks = Vec::new();
    let mut content_start = 0;
    while content_start < frames {
        let content_frames = layout.content.min(frames - content_start);
        let window_start = content_start as isize - layout.history as isize;
        let n = layout.history + content_frames + layout.future;
        let features = features.padded_rows(window_start, n);
        let mut chunk_bins = vec![center_bin; n * hop];
        for (j, b) in chunk_bins.iter_mut().enumerate() {
            let s = window_start * hop as isize + j as isize;
            if s >= 0 && (s as usize) < bins.len() {
                *b = bins[s as usize];
            }
        }
        let mut mask = vec![0.0; n * hop];
        mask[layout.history * hop..(layout.history + content_frames) * hop]
            .iter_mut()
            .for_each(|m| *m = 1.0);
        chunks.push(Chunk {
            window_start,
            content_start,
            content_frames,
            hop,
            layout,
            features,
            bins: chunk_bins,
            mask,
        });
        content_start += content_frames;
    }
    debug_assert!(chunks
        .iter()
        .all(|c| c.features.len() == c.frames() * FEATURE_DIM));
    Ok(chunks)
}

/// Mean cross-entropy over positions with nonzero mask. Positions with zero
/// mask contribute neither loss nor gradient.
pub fn masked_loss<T: Float>(
    g: &mut Graph<T>,
    logits: Var,
    targets: &[usize],
    mask: &[T],
) -> Result<Var, TrainError> {
    if mask.len() != targets.len() {
        return Err(TrainError::Length(format!(
            "{} mask entries for {} targets",
            mask.len(),
            targets.len()
        )));
    }
    if mask.iter().all(|&m| m == T::zero()) {
        return Err(TrainError::EmptyMask);
    }
    g.cross_entropy(logits, targets, Some(mask))
        .map_err(|e| match e {
            NeuralError::Shape(s) => TrainError::Length(s),
            other => TrainError::Neural(other),
        })
}
