//! Frame-level conditioning: stacked bi-directional LSTMs, an affine
//! reduction to the residual width, and repetition up to the sample rate.

mod features;

pub use features::{
    generate_synthetic_features, parse_features_text, read_features, read_features_text,
    write_features, FrameFeatures, PitchEstimate, PitchTracker, FEATURE_DIM, LINGUISTIC_DIMS,
    LOG_F0_COLUMN, VUV_COLUMN,
};

use rand::Rng;

use crate::neural::{
    init_uniform, BoundParams, Float, Graph, NeuralError, ParamStore, Tensor, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum ConditioningError {
    #[error("no frames to process")]
    Empty,
    #[error("hop size must be >= 1, got {0}")]
    InvalidHop(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid features: {0}")]
    Invalid(String),
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Widths of the conditioning sub-network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConditioningShape {
    pub input_dim: usize,
    /// Hidden size of each LSTM direction; layer outputs are twice this.
    pub hidden: usize,
    pub layers: usize,
    /// Width of the projected embedding (the residual channel count).
    pub output_dim: usize,
}

/// One direction's weights: `w_ih [d × 4H]`, `w_hh [H × 4H]`, `b [4H]`.
/// Gate blocks are ordered input, forget, cell, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

impl LstmParams {
    pub fn bind(p: &BoundParams, layer: usize, dir: &str) -> Result<Self, NeuralError> {
        Ok(Self {
            w_ih: p.var(&format!("cond.l{layer}.{dir}.w_ih"))?,
            w_hh: p.var(&format!("cond.l{layer}.{dir}.w_hh"))?,
            b: p.var(&format!("cond.l{layer}.{dir}.b"))?,
        })
    }
}

pub fn init_conditioning_params<T: Float, R: Rng>(
    store: &mut ParamStore<T>,
    shape: &ConditioningShape,
    rng: &mut R,
) -> Result<(), NeuralError> {
    let h = shape.hidden;
    for layer in 0..shape.layers {
        let d = if layer == 0 { shape.input_dim } else { 2 * h };
        for dir in ["fwd", "bwd"] {
            store.insert(
                format!("cond.l{layer}.{dir}.w_ih"),
                init_uniform(&[d, 4 * h], h, rng),
            )?;
            store.insert(
                format!("cond.l{layer}.{dir}.w_hh"),
                init_uniform(&[h, 4 * h], h, rng),
            )?;
            store.insert(
                format!("cond.l{layer}.{dir}.b"),
                init_uniform(&[4 * h], h, rng),
            )?;
        }
    }
    store.insert(
        "cond.proj.w",
        init_uniform(&[2 * h, shape.output_dim], 2 * h, rng),
    )?;
    store.insert("cond.proj.b", init_uniform(&[shape.output_dim], 2 * h, rng))?;
    Ok(())
}

fn lstm_direction<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    p: &LstmParams,
    reverse: bool,
) -> Result<Var, NeuralError> {
    let frames = g.value(x).rows();
    let h_dim = g.value(p.w_hh).rows();
    let pre_in = g.affine(x, p.w_ih, p.b)?;
    let mut h = g.constant(Tensor::zeros(&[1, h_dim]));
    let mut c = g.constant(Tensor::zeros(&[1, h_dim]));
    let mut outs = vec![h; frames];
    let order: Vec<usize> = if reverse {
        (0..frames).rev().collect()
    } else {
        (0..frames).collect()
    };
    for t in order {
        let xt = g.slice_rows(pre_in, t, 1)?;
        let hw = g.matmul(h, p.w_hh)?;
        let pre = g.add(xt, hw)?;
        let gi = g.slice_cols(pre, 0, h_dim)?;
        let gf = g.slice_cols(pre, h_dim, h_dim)?;
        let gg = g.slice_cols(pre, 2 * h_dim, h_dim)?;
        let go = g.slice_cols(pre, 3 * h_dim, h_dim)?;
        let i = g.sigmoid(gi);
        let f = g.sigmoid(gf);
        let cand = g.tanh(gg);
        let o = g.sigmoid(go);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        c = g.add(keep, write)?;
        let squashed = g.tanh(c);
        h = g.mul(o, squashed)?;
        outs[t] = h;
    }
    g.stack_rows(&outs)
}

/// Runs one LSTM forward and one backward over the `F × d` input and
/// concatenates their hidden states per frame (`F × 2H`, forward half first).
pub fn bilstm_layer<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<Var, ConditioningError> {
    if g.value(x).rows() == 0 {
        return Err(ConditioningError::Empty);
    }
    let d = g.value(x).cols();
    for p in [fwd, bwd] {
        if g.value(p.w_ih).rows() != d {
            return Err(ConditioningError::Dimension(format!(
                "input has {d} columns, w_ih expects {}",
                g.value(p.w_ih).rows()
            )));
        }
    }
    let hf = lstm_direction(g, x, fwd, false)?;
    let hb = lstm_direction(g, x, bwd, true)?;
    Ok(g.concat_cols(&[hf, hb])?)
}

/// Affine reduction of the stacked `F × 2H` hidden states to `F × r`.
pub fn project_embedding<T: Float>(
    g: &mut Graph<T>,
    stacked: Var,
    w: Var,
    b: Var,
) -> Result<Var, ConditioningError> {
    let (cols, rows) = (g.value(stacked).cols(), g.value(w).rows());
    if cols != rows {
        return Err(ConditioningError::Dimension(format!(
            "{cols} hidden columns vs projection with {rows} rows"
        )));
    }
    Ok(g.affine(stacked, w, b)?)
}

/// Nearest-neighbour repetition of frame rows to sample rows.
pub fn upsample<T: Float>(
    g: &mut Graph<T>,
    frame_embedding: Var,
    hop: usize,
) -> Result<Var, ConditioningError> {
    if hop < 1 {
        return Err(ConditioningError::InvalidHop(hop));
    }
    Ok(g.upsample(frame_embedding, hop)?)
}

/// Full frame-level path: bi-LSTM stack then projection, `F × 88 → F × r`.
pub fn frame_embedding<T: Float>(
    g: &mut Graph<T>,
    params: &BoundParams,
    frames: Var,
    shape: &ConditioningShape,
) -> Result<Var, ConditioningError> {
    if g.value(frames).cols() != shape.input_dim {
        return Err(ConditioningError::Dimension(format!(
            "features have {} columns, expected {}",
            g.value(frames).cols(),
            shape.input_dim
        )));
    }
    let mut h = frames;
    for layer in 0..shape.layers {
        let fwd = LstmParams::bind(params, layer, "fwd")?;
        let bwd = LstmParams::bind(params, layer, "bwd")?;
        h = bilstm_layer(g, h, &fwd, &bwd)?;
    }
    project_embedding(g, h, params.var("cond.proj.w")?, params.var("cond.proj.b")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lstm_leaves(g: &mut Graph<f64>, d: usize, h: usize, rng: &mut ChaCha8Rng) -> LstmParams {
        LstmParams {
            w_ih: g.param(init_uniform(&[d, 4 * h], h, rng)),
            w_hh: g.param(init_uniform(&[h, 4 * h], h, rng)),
            b: g.param(init_uniform(&[4 * h], h, rng)),
        }
    }

    #[test]
    fn zero_everything_gives_zero_output() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[5, 3]));
        let p = LstmParams {
            w_ih: g.constant(Tensor::zeros(&[3, 8])),
            w_hh: g.constant(Tensor::zeros(&[2, 8])),
            b: g.constant(Tensor::zeros(&[8])),
        };
        let y = bilstm_layer(&mut g, x, &p, &p).unwrap();
        assert_eq!(g.value(y).shape(), &[5, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_halves_match_with_shared_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::<f64>::new();
        let x = g.constant(init_uniform(&[1, 6], 1, &mut rng));
        let p = lstm_leaves(&mut g, 6, 5, &mut rng);
        let y = bilstm_layer(&mut g, x, &p, &p).unwrap();
        let row = g.value(y).row(0);
        assert_eq!(&row[..5], &row[5..]);
        assert!(row.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[0, 6]));
        let p = lstm_leaves(&mut g, 6, 5, &mut rng);
        assert!(matches!(
            bilstm_layer(&mut g, x, &p, &p),
            Err(ConditioningError::Empty)
        ));
    }

    #[test]
    fn identity_projection_copies_forward_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::<f64>::new();
        let h = 4;
        let stacked = g.constant(init_uniform(&[3, 2 * h], 1, &mut rng));
        let mut w = vec![0.0; 2 * h * h];
        for i in 0..h {
            w[i * h + i] = 1.0;
        }
        let w = g.constant(Tensor::matrix(2 * h, h, w).unwrap());
        let b = g.constant(Tensor::zeros(&[h]));
        let y = project_embedding(&mut g, stacked, w, b).unwrap();
        for f in 0..3 {
            assert_eq!(g.value(y).row(f), &g.value(stacked).row(f)[..h]);
        }
    }

    #[test]
    fn zero_projection_emits_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut g = Graph::<f64>::new();
        let stacked = g.constant(init_uniform(&[3, 8], 1, &mut rng));
        let w = g.constant(Tensor::zeros(&[8, 2]));
        let b = g.constant(Tensor::new(vec![2], vec![0.25, -1.5]).unwrap());
        let y = project_embedding(&mut g, stacked, w, b).unwrap();
        for f in 0..3 {
            assert_eq!(g.value(y).row(f), &[0.25, -1.5]);
        }
        let bad = g.constant(Tensor::zeros(&[7, 2]));
        assert!(project_embedding(&mut g, stacked, bad, b).is_err());
    }

    #[test]
    fn upsample_shapes_and_adjoint() {
        let mut g = Graph::<f64>::new();
        let e = g.param(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let u = upsample(&mut g, e, 120).unwrap();
        assert_eq!(g.value(u).shape(), &[360, 2]);
        for f in 0..3 {
            for j in 0..120 {
                assert_eq!(g.value(u).row(f * 120 + j), g.value(e).row(f));
            }
        }
        let s = g.sum(u);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(e).unwrap().data().iter().all(|&v| v == 120.0));
        assert!(matches!(
            upsample(&mut g, e, 0),
            Err(ConditioningError::InvalidHop(0))
        ));
    }

    #[test]
    fn full_shape_chain() {
        let shape = ConditioningShape {
            input_dim: FEATURE_DIM,
            hidden: 6,
            layers: 2,
            output_dim: 5,
        };
        let mut store = ParamStore::<f64>::new();
        init_conditioning_params(&mut store, &shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for frames in [1, 4] {
            let mut g = Graph::new();
            let p = store.bind(&mut g, false);
            let x = g.constant(Tensor::zeros(&[frames, FEATURE_DIM]));
            let e = frame_embedding(&mut g, &p, x, &shape).unwrap();
            assert_eq!(g.value(e).shape(), &[frames, 5]);
            let u = upsample(&mut g, e, 7).unwrap();
            assert_eq!(g.value(u).shape(), &[frames * 7, 5]);
        }
    }
}
