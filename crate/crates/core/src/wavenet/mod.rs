//! Dilated causal convolution stack with gated units, per-layer conditioning,
//! residual and skip paths, and a two-layer output head over μ-law bins.

mod stepper;

pub use stepper::IncrementalStack;

use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditioning::{
    init_conditioning_params, ConditioningError, ConditioningShape, FEATURE_DIM,
};
use crate::config::{ConfigError, KeyValues};
use crate::neural::{init_uniform, BoundParams, Float, Graph, NeuralError, ParamStore, Var};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("bin {bin} out of range for {bins} levels")]
    Bin { bin: usize, bins: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Shape of the convolution stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackConfig {
    pub blocks: usize,
    pub layers_per_block: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub bins: usize,
    pub kernel_size: usize,
}

impl StackConfig {
    pub fn num_layers(&self) -> usize {
        self.blocks * self.layers_per_block
    }

    /// Dilation of global layer `n`: doubles within a block, resets per block.
    pub fn dilation(&self, n: usize) -> usize {
        1 << (n % self.layers_per_block)
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self)
    }
}

/// Samples spanned by the convolutions: `1 + (K−1)·B·(2^L − 1)`. Because the
/// input is shifted by one, logit `t` sees samples `t−RF ..= t−1`.
pub fn receptive_field(c: &StackConfig) -> usize {
    1 + (c.kernel_size - 1) * c.blocks * ((1usize << c.layers_per_block) - 1)
}

/// Everything needed to rebuild a model from its checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub stack: StackConfig,
    pub sample_rate: u32,
    pub hop_size: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

pub const MODEL_KEYS: &[&str] = &[
    "blocks",
    "layers",
    "r",
    "s",
    "a",
    "kernel",
    "sample_rate",
    "hop_size",
    "lstm_hidden",
    "lstm_layers",
];

impl ModelConfig {
    /// Full-size configuration: 4×10 layers, 128 residual, 1024 skip and
    /// output bins, 24 kHz audio with a 5 ms hop.
    pub fn reference() -> Self {
        Self {
            stack: StackConfig {
                blocks: 4,
                layers_per_block: 10,
                residual_channels: 128,
                skip_channels: 1024,
                bins: 1024,
                kernel_size: 2,
            },
            sample_rate: 24_000,
            hop_size: 120,
            lstm_hidden: 128,
            lstm_layers: 2,
        }
    }

    /// Small configuration used by the overfit fixture.
    pub fn tiny() -> Self {
        Self {
            stack: StackConfig {
                blocks: 2,
                layers_per_block: 4,
                residual_channels: 16,
                skip_channels: 32,
                bins: 256,
                kernel_size: 2,
            },
            sample_rate: 8_000,
            hop_size: 40,
            lstm_hidden: 16,
            lstm_layers: 2,
        }
    }

    /// Missing keys fall back to [`ModelConfig::reference`]. Keys outside
    /// [`MODEL_KEYS`] are ignored so one file can also carry training keys.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let d = Self::reference();
        let c = Self {
            stack: StackConfig {
                blocks: kv.get_or("blocks", d.stack.blocks)?,
                layers_per_block: kv.get_or("layers", d.stack.layers_per_block)?,
                residual_channels: kv.get_or("r", d.stack.residual_channels)?,
                skip_channels: kv.get_or("s", d.stack.skip_channels)?,
                bins: kv.get_or("a", d.stack.bins)?,
                kernel_size: kv.get_or("kernel", d.stack.kernel_size)?,
            },
            sample_rate: kv.get_or("sample_rate", d.sample_rate)?,
            hop_size: kv.get_or("hop_size", d.hop_size)?,
            lstm_hidden: kv.get_or("lstm_hidden", d.lstm_hidden)?,
            lstm_layers: kv.get_or("lstm_layers", d.lstm_layers)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn to_text(&self) -> String {
        let s = &self.stack;
        format!(
            "blocks = {}\nlayers = {}\nr = {}\ns = {}\na = {}\nkernel = {}\nsample_rate = {}\nhop_size = {}\nlstm_hidden = {}\nlstm_layers = {}\n",
            s.blocks,
            s.layers_per_block,
            s.residual_channels,
            s.skip_channels,
            s.bins,
            s.kernel_size,
            self.sample_rate,
            self.hop_size,
            self.lstm_hidden,
            self.lstm_layers
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.stack;
        let positive = [
            ("blocks", s.blocks),
            ("layers", s.layers_per_block),
            ("r", s.residual_channels),
            ("s", s.skip_channels),
            ("kernel", s.kernel_size),
            ("hop_size", self.hop_size),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("sample_rate", self.sample_rate as usize),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{k} must be positive")));
        }
        if !(2..=65536).contains(&s.bins) {
            return Err(ConfigError::Invalid(format!(
                "a = {} must be in 2..=65536",
                s.bins
            )));
        }
        if s.layers_per_block > 20 {
            return Err(ConfigError::Invalid("layers per block above 20".into()));
        }
        Ok(())
    }

    pub fn conditioning_shape(&self) -> ConditioningShape {
        ConditioningShape {
            input_dim: FEATURE_DIM,
            hidden: self.lstm_hidden,
            layers: self.lstm_layers,
            output_dim: self.stack.residual_channels,
        }
    }
}

/// Inserts the convolution-stack parameters:
/// `stack.embed [a×r]`; per layer `stack.l{n}.conv [K×r×2r]`,
/// `cond_w [r×2r]`, `cond_b`, `res_w [r×r]`, `res_b`, `skip_w [r×s]`,
/// `skip_b`; head `head.w1 [s×s]`, `head.b1`, `head.w2 [s×a]`, `head.b2`.
pub fn init_stack_params<T: Float>(
    store: &mut ParamStore<T>,
    c: &StackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), NeuralError> {
    let (r, s, a, k) = (c.residual_channels, c.skip_channels, c.bins, c.kernel_size);
    store.insert("stack.embed", init_uniform(&[a, r], 1, rng))?;
    for n in 0..c.num_layers() {
        store.insert(
            format!("stack.l{n}.conv"),
            init_uniform(&[k, r, 2 * r], k * r, rng),
        )?;
        store.insert(
            format!("stack.l{n}.cond_w"),
            init_uniform(&[r, 2 * r], r, rng),
        )?;
        store.insert(format!("stack.l{n}.cond_b"), init_uniform(&[2 * r], r, rng))?;
        store.insert(format!("stack.l{n}.res_w"), init_uniform(&[r, r], r, rng))?;
        store.insert(format!("stack.l{n}.res_b"), init_uniform(&[r], r, rng))?;
        store.insert(format!("stack.l{n}.skip_w"), init_uniform(&[r, s], r, rng))?;
        store.insert(format!("stack.l{n}.skip_b"), init_uniform(&[s], r, rng))?;
    }
    store.insert("head.w1", init_uniform(&[s, s], s, rng))?;
    store.insert("head.b1", init_uniform(&[s], s, rng))?;
    store.insert("head.w2", init_uniform(&[s, a], s, rng))?;
    store.insert("head.b2", init_uniform(&[a], s, rng))?;
    Ok(())
}

/// Conditioning weights first, then the stack, all from one seeded stream.
pub fn init_params<T: Float>(
    config: &ModelConfig,
    seed: u64,
) -> Result<ParamStore<T>, NeuralError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    init_conditioning_params(&mut store, &config.conditioning_shape(), &mut rng)?;
    init_stack_params(&mut store, &config.stack, &mut rng)?;
    Ok(store)
}

/// Graph handles of one layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct LayerParams {
    pub conv: Var,
    pub cond_w: Var,
    pub cond_b: Var,
    pub res_w: Var,
    pub res_b: Var,
    pub skip_w: Var,
    pub skip_b: Var,
}

impl LayerParams {
    pub fn bind(p: &BoundParams, n: usize) -> Result<Self, NeuralError> {
        let v = |k: &str| p.var(&format!("stack.l{n}.{k}"));
        Ok(Self {
            conv: v("conv")?,
            cond_w: v("cond_w")?,
            cond_b: v("cond_b")?,
            res_w: v("res_w")?,
            res_b: v("res_b")?,
            skip_w: v("skip_w")?,
            skip_b: v("skip_b")?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    pub residual: Var,
    pub skip: Var,
}

/// `z = tanh(conv_f(x) + cond_f) ⊙ σ(conv_g(x) + cond_g)`, where the filter
/// and gate halves come from one `2r`-wide convolution and one affine map
/// of `cond`. Returns `x + z·W_res + b_res` and `z·W_skip + b_skip`.
pub fn gated_layer<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    cond: Var,
    p: &LayerParams,
    dilation: usize,
) -> Result<LayerOutput, ModelError> {
    let rows = g.value(x).rows();
    gated_layer_rows(g, x, cond, p, dilation, 0..rows)
}

/// As [`gated_layer`], with the skip output restricted to `skip_rows`.
fn gated_layer_rows<T: Float>(
    g: &mut Graph<T>,
    x: Var,
    cond: Var,
    p: &LayerParams,
    dilation: usize,
    skip_rows: Range<usize>,
) -> Result<LayerOutput, ModelError> {
    let (tx, tc) = (g.value(x).rows(), g.value(cond).rows());
    if tx != tc {
        return Err(ModelError::Length(format!(
            "{tx} input rows vs {tc} conditioning rows"
        )));
    }
    let r = g.value(x).cols();
    let conv = g.conv1d_causal(x, p.conv, dilation)?;
    let c = g.affine(cond, p.cond_w, p.cond_b)?;
    let pre = g.add(conv, c)?;
    let f = g.slice_cols(pre, 0, r)?;
    let gate = g.slice_cols(pre, r, r)?;
    let f = g.tanh(f);
    let gate = g.sigmoid(gate);
    let z = g.mul(f, gate)?;
    let res = g.affine(z, p.res_w, p.res_b)?;
    let residual = g.add(x, res)?;
    let zs = if skip_rows == (0..tx) {
        z
    } else {
        g.slice_rows(z, skip_rows.start, skip_rows.len())?
    };
    let skip = g.affine(zs, p.skip_w, p.skip_b)?;
    Ok(LayerOutput { residual, skip })
}

/// Bins fed to the network: position `t` holds `bins[t−1]`; position 0 holds
/// the centre bin.
pub fn shifted_inputs(bins: &[usize], n_bins: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(bins.len());
    if !bins.is_empty() {
        v.push(n_bins / 2);
        v.extend_from_slice(&bins[..bins.len() - 1]);
    }
    v
}

/// Teacher-forced logits `T × a` for encoded audio `bins` and per-sample
/// conditioning `cond` (`T × r`). Logit `t` depends on `bins[..t]` and
/// `cond[..=t]` only.
pub fn stack_forward<T: Float>(
    g: &mut Graph<T>,
    params: &BoundParams,
    config: &StackConfig,
    bins: &[usize],
    cond: Var,
) -> Result<Var, ModelError> {
    stack_forward_rows(g, params, config, bins, cond, 0..bins.len())
}

/// As [`stack_forward`] but only evaluates the skip paths and head on
/// `rows`, returning `rows.len() × a` logits. Row values are identical to
/// the corresponding rows of the full forward pass.
pub fn stack_forward_rows<T: Float>(
    g: &mut Graph<T>,
    params: &BoundParams,
    config: &StackConfig,
    bins: &[usize],
    cond: Var,
    rows: Range<usize>,
) -> Result<Var, ModelError> {
    let t = bins.len();
    if g.value(cond).rows() != t {
        return Err(ModelError::Length(format!(
            "{t} samples vs {} conditioning rows",
            g.value(cond).rows()
        )));
    }
    if rows.end > t || rows.is_empty() {
        return Err(ModelError::Length(format!(
            "output rows {rows:?} for {t} samples"
        )));
    }
    if let Some(&bad) = bins.iter().find(|&&b| b >= config.bins) {
        return Err(ModelError::Bin {
            bin: bad,
            bins: config.bins,
        });
    }
    let inputs = shifted_inputs(bins, config.bins);
    let mut x = g.embed(params.var("stack.embed")?, &inputs)?;
    let mut skip_sum: Option<Var> = None;
    for n in 0..config.num_layers() {
        let p = LayerParams::bind(params, n)?;
        let out = gated_layer_rows(g, x, cond, &p, config.dilation(n), rows.clone())?;
        x = out.residual;
        skip_sum = Some(match skip_sum {
            None => out.skip,
            Some(s) => g.add(s, out.skip)?,
        });
    }
    let h = g.relu(skip_sum.expect("at least one layer"));
    let h = g.affine(h, params.var("head.w1")?, params.var("head.b1")?)?;
    let h = g.relu(h);
    Ok(g.affine(h, params.var("head.w2")?, params.var("head.b2")?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn stack(blocks: usize, layers: usize, kernel: usize) -> StackConfig {
        StackConfig {
            blocks,
            layers_per_block: layers,
            residual_channels: 4,
            skip_channels: 8,
            bins: 8,
            kernel_size: kernel,
        }
    }

    #[test]
    fn receptive_field_arithmetic() {
        assert_eq!(receptive_field(&ModelConfig::reference().stack), 4093);
        assert_eq!(receptive_field(&stack(1, 1, 2)), 2);
        assert_eq!(receptive_field(&stack(2, 3, 2)), 15);
        assert_eq!(receptive_field(&stack(2, 4, 2)), 31);
    }

    #[test]
    fn dilations_reset_per_block() {
        let c = ModelConfig::reference().stack;
        let d: Vec<usize> = (0..c.num_layers()).map(|n| c.dilation(n)).collect();
        assert_eq!(&d[..11], &[1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1]);
        assert_eq!(d[39], 512);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = ModelConfig::tiny();
        let back = ModelConfig::from_key_values(&KeyValues::parse(&c.to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            ModelConfig::from_key_values(&KeyValues::default()).unwrap(),
            ModelConfig::reference()
        );
        assert!(ModelConfig::from_key_values(&KeyValues::parse("blocks = 0").unwrap()).is_err());
        assert!(ModelConfig::from_key_values(&KeyValues::parse("a = 1").unwrap()).is_err());
    }

    #[test]
    fn zero_parameters_pass_input_through() {
        let c = stack(1, 2, 2);
        let mut store = ParamStore::<f64>::new();
        init_stack_params(&mut store, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..store.len() {
            store
                .tensor_mut(i)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x =
            g.constant(Tensor::matrix(3, 4, (0..12).map(|v| v as f64 * 0.1).collect()).unwrap());
        let cond = g.constant(Tensor::matrix(3, 4, vec![0.3; 12]).unwrap());
        let out = gated_layer(&mut g, x, cond, &LayerParams::bind(&p, 0).unwrap(), 1).unwrap();
        assert_eq!(g.value(out.residual).data(), g.value(x).data());
        assert!(g.value(out.skip).data().iter().all(|&v| v == 0.0));

        let logits = stack_forward(&mut g, &p, &c, &[1, 2, 3], cond).unwrap();
        let loss = g.cross_entropy(logits, &[0, 4, 7], None).unwrap();
        assert!((g.value(loss).data()[0] - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn row_restricted_forward_matches_full() {
        let c = stack(2, 2, 2);
        let store: ParamStore<f64> = {
            let mut s = ParamStore::new();
            init_stack_params(&mut s, &c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            s
        };
        let bins: Vec<usize> = (0..20).map(|i| (i * 5) % 8).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let cond = g.constant(init_uniform(&[20, 4], 1, &mut ChaCha8Rng::seed_from_u64(9)));
        let full = stack_forward(&mut g, &p, &c, &bins, cond).unwrap();
        let part = stack_forward_rows(&mut g, &p, &c, &bins, cond, 5..12).unwrap();
        assert_eq!(g.value(part).data(), &g.value(full).data()[5 * 8..12 * 8]);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let c = stack(1, 1, 2);
        let mut store = ParamStore::<f64>::new();
        init_stack_params(&mut store, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let cond = g.constant(Tensor::zeros(&[4, 4]));
        assert!(matches!(
            stack_forward(&mut g, &p, &c, &[1, 2, 3], cond),
            Err(ModelError::Length(_))
        ));
        let cond = g.constant(Tensor::zeros(&[1, 4]));
        assert!(matches!(
            stack_forward(&mut g, &p, &c, &[9], cond),
            Err(ModelError::Bin { .. })
        ));
    }
}
