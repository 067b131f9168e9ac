//! Sample-at-a-time evaluation of the stack with per-layer ring buffers.
//! Uses the same row kernels, in the same order, as the graph forward pass,
//! so its logits equal [`super::stack_forward`] bit for bit.

use super::{ModelError, StackConfig};
use crate::neural::kernels::{self, accumulate_row};
use crate::neural::{affine_row, Float, NeuralError, ParamStore};

struct LayerWeights<'a, T> {
    conv: &'a [T],
    cond_w: &'a [T],
    cond_b: &'a [T],
    res_w: &'a [T],
    res_b: &'a [T],
    skip_w: &'a [T],
    skip_b: &'a [T],
    dilation: usize,
}

pub struct IncrementalStack<'a, T> {
    config: StackConfig,
    embed: &'a [T],
    layers: Vec<LayerWeights<'a, T>>,
    head: [&'a [T]; 4],
    /// Per layer, the last `(K−1)·d + 1` layer inputs.
    rings: Vec<Vec<T>>,
    steps: usize,
    x: Vec<T>,
    pre: Vec<T>,
    z: Vec<T>,
    res: Vec<T>,
    skip: Vec<T>,
    skip_sum: Vec<T>,
    hidden: Vec<T>,
}

impl<'a, T: Float> IncrementalStack<'a, T> {
    pub fn new(params: &'a ParamStore<T>, config: StackConfig) -> Result<Self, NeuralError> {
        let get = |name: String| params.require(&name).map(|t| t.data());
        let (r, s) = (config.residual_channels, config.skip_channels);
        let layers = (0..config.num_layers())
            .map(|n| {
                Ok(LayerWeights {
                    conv: get(format!("stack.l{n}.conv"))?,
                    cond_w: get(format!("stack.l{n}.cond_w"))?,
                    cond_b: get(format!("stack.l{n}.cond_b"))?,
                    res_w: get(format!("stack.l{n}.res_w"))?,
                    res_b: get(format!("stack.l{n}.res_b"))?,
                    skip_w: get(format!("stack.l{n}.skip_w"))?,
                    skip_b: get(format!("stack.l{n}.skip_b"))?,
                    dilation: config.dilation(n),
                })
            })
            .collect::<Result<Vec<_>, NeuralError>>()?;
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(NeuralError::Shape(format!(
                    "{name}: {got} values, expected {want}"
                )))
            }
        };
        for (n, l) in layers.iter().enumerate() {
            expect(
                &format!("stack.l{n}.conv"),
                l.conv.len(),
                config.kernel_size * r * 2 * r,
            )?;
            expect(&format!("stack.l{n}.skip_w"), l.skip_w.len(), r * s)?;
        }
        let embed = get("stack.embed".into())?;
        expect("stack.embed", embed.len(), config.bins * r)?;
        let head = [
            get("head.w1".into())?,
            get("head.b1".into())?,
            get("head.w2".into())?,
            get("head.b2".into())?,
        ];
        expect("head.w2", head[2].len(), s * config.bins)?;
        let rings = layers
            .iter()
            .map(|l| vec![T::zero(); ((config.kernel_size - 1) * l.dilation + 1) * r])
            .collect();
        Ok(Self {
            config,
            embed,
            layers,
            head,
            rings,
            steps: 0,
            x: vec![T::zero(); r],
            pre: vec![T::zero(); 2 * r],
            z: vec![T::zero(); r],
            res: vec![T::zero(); r],
            skip: vec![T::zero(); s],
            skip_sum: vec![T::zero(); s],
            hidden: vec![T::zero(); s],
        })
    }

    pub fn config(&self) -> &StackConfig {
        &self.config
    }

    /// Samples consumed since the last reset.
    pub fn position(&self) -> usize {
        self.steps
    }

    /// Clears history, as at the start of a fresh sequence.
    pub fn reset(&mut self) {
        for ring in &mut self.rings {
            ring.iter_mut().for_each(|v| *v = T::zero());
        }
        self.steps = 0;
    }

    /// Per-layer conditioning terms `cond · W_cond + b_cond` for one
    /// conditioning row, concatenated (`layers × 2r`). Rows repeat across a
    /// frame, so callers compute this once per frame.
    pub fn project_conditioning(&self, cond_row: &[T]) -> Vec<T> {
        let r2 = 2 * self.config.residual_channels;
        let mut out = vec![T::zero(); self.layers.len() * r2];
        for (l, o) in self.layers.iter().zip(out.chunks_mut(r2)) {
            affine_row(cond_row, l.cond_w, l.cond_b, o);
        }
        out
    }

    /// Consumes the network input for the current position (the previous
    /// sample's bin; the centre bin at position 0). With `logits` given, the
    /// skip paths and head run and write the `a` logits for this position.
    pub fn step(
        &mut self,
        input_bin: usize,
        cond_proj: &[T],
        logits: Option<&mut [T]>,
    ) -> Result<(), ModelError> {
        let c = self.config;
        let (r, k) = (c.residual_channels, c.kernel_size);
        if input_bin >= c.bins {
            return Err(ModelError::Bin {
                bin: input_bin,
                bins: c.bins,
            });
        }
        if cond_proj.len() != self.layers.len() * 2 * r {
            return Err(ModelError::Length(format!(
                "conditioning projection of {} values",
                cond_proj.len()
            )));
        }
        if let Some(out) = &logits {
            if out.len() != c.bins {
                return Err(ModelError::Length(format!(
                    "logit buffer of {} for {} bins",
                    out.len(),
                    c.bins
                )));
            }
        }
        let want = logits.is_some();
        let t = self.steps;
        self.x
            .copy_from_slice(&self.embed[input_bin * r..(input_bin + 1) * r]);
        for (n, (l, ring)) in self.layers.iter().zip(self.rings.iter_mut()).enumerate() {
            let slots = ring.len() / r;
            let slot = t % slots;
            ring[slot * r..(slot + 1) * r].copy_from_slice(&self.x);
            self.pre.iter_mut().for_each(|v| *v = T::zero());
            for tap in 0..k {
                let lag = (k - 1 - tap) * l.dilation;
                if lag > t {
                    continue;
                }
                let src = (t - lag) % slots;
                let w = &l.conv[tap * r * 2 * r..(tap + 1) * r * 2 * r];
                accumulate_row(&ring[src * r..(src + 1) * r], w, 2 * r, &mut self.pre);
            }
            for (p, &cv) in self
                .pre
                .iter_mut()
                .zip(&cond_proj[n * 2 * r..(n + 1) * 2 * r])
            {
                *p = *p + cv;
            }
            for i in 0..r {
                self.z[i] = self.pre[i].tanh() * kernels::sigmoid(self.pre[r + i]);
            }
            affine_row(&self.z, l.res_w, l.res_b, &mut self.res);
            for (x, &rv) in self.x.iter_mut().zip(&self.res) {
                *x = *x + rv;
            }
            if want {
                if n == 0 {
                    affine_row(&self.z, l.skip_w, l.skip_b, &mut self.skip_sum);
                } else {
                    affine_row(&self.z, l.skip_w, l.skip_b, &mut self.skip);
                    for (a, &b) in self.skip_sum.iter_mut().zip(&self.skip) {
                        *a = *a + b;
                    }
                }
            }
        }
        self.steps += 1;
        if let Some(out) = logits {
            let relu = |v: &mut T| {
                if !(*v > T::zero()) {
                    *v = T::zero()
                }
            };
            self.skip_sum.iter_mut().for_each(relu);
            affine_row(&self.skip_sum, self.head[0], self.head[1], &mut self.hidden);
            self.hidden.iter_mut().for_each(relu);
            affine_row(&self.hidden, self.head[2], self.head[3], out);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init_stack_params, stack_forward};
    use super::*;
    use crate::neural::{init_uniform, Graph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_graph_forward_exactly() {
        let c = StackConfig {
            blocks: 2,
            layers_per_block: 3,
            residual_channels: 4,
            skip_channels: 6,
            bins: 8,
            kernel_size: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::<f64>::new();
        init_stack_params(&mut store, &c, &mut rng).unwrap();
        let t = 40;
        let bins: Vec<usize> = (0..t).map(|_| rng.random_range(0..8)).collect();
        let cond = init_uniform::<f64, _>(&[t, 4], 1, &mut rng);

        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let cv = g.constant(cond.clone());
        let logits = stack_forward(&mut g, &p, &c, &bins, cv).unwrap();

        let mut st = IncrementalStack::new(&store, c).unwrap();
        let mut out = vec![0.0; 8];
        for i in 0..t {
            let input = if i == 0 { 4 } else { bins[i - 1] };
            let proj = st.project_conditioning(cond.row(i));
            st.step(input, &proj, Some(&mut out)).unwrap();
            assert_eq!(&out[..], g.value(logits).row(i), "position {i}");
        }
    }
}
