//! Finite-difference gradient checks (64-bit, h = 1e-5, tolerance 1e-4).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssws::conditioning::{
    bilstm_layer, frame_embedding, project_embedding, upsample, LstmParams, FEATURE_DIM,
};
use ssws::neural::{check_gradients, Graph, NeuralError, ParamStore, Tensor, Var};
use ssws::wavenet::{
    gated_layer, init_params, stack_forward, LayerParams, ModelConfig, StackConfig,
};

const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    // Keep away from 0 so relu's kink is never inside ±h.
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces `x` to a scalar with fixed random weights so every output
/// element carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var, NeuralError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = rand_tensor(&mut rng, g.value(x).shape());
    let w = g.constant(w);
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

fn check<F>(name: &str, shapes: &[&[usize]], build: F)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NeuralError>,
{
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let report = check_gradients(&inputs, &build).unwrap();
        let err = report.max_relative_error();
        assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn elementwise_and_dense_ops() {
    check("matmul", &[&[3, 4], &[4, 5]], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted_sum(g, y, 1)
    });
    check("add_bias", &[&[3, 4], &[4]], |g, v| {
        let y = g.add_bias(v[0], v[1])?;
        weighted_sum(g, y, 2)
    });
    check("affine", &[&[3, 4], &[4, 2], &[2]], |g, v| {
        let y = g.affine(v[0], v[1], v[2])?;
        weighted_sum(g, y, 3)
    });
    check("add", &[&[3, 4], &[3, 4]], |g, v| {
        let y = g.add(v[0], v[1])?;
        weighted_sum(g, y, 4)
    });
    check("mul", &[&[3, 4], &[3, 4]], |g, v| {
        let y = g.mul(v[0], v[1])?;
        weighted_sum(g, y, 5)
    });
    check("sigmoid", &[&[3, 4]], |g, v| {
        let y = g.sigmoid(v[0]);
        weighted_sum(g, y, 6)
    });
    check("tanh", &[&[3, 4]], |g, v| {
        let y = g.tanh(v[0]);
        weighted_sum(g, y, 7)
    });
    check("relu", &[&[3, 4]], |g, v| {
        let y = g.relu(v[0]);
        weighted_sum(g, y, 8)
    });
    check("scale", &[&[3, 4]], |g, v| {
        let y = g.scale(v[0], -1.7);
        weighted_sum(g, y, 9)
    });
    check("softmax", &[&[3, 5]], |g, v| {
        let y = g.softmax(v[0]);
        weighted_sum(g, y, 10)
    });
    check("sum", &[&[2, 3]], |g, v| Ok(g.sum(v[0])));
}

#[test]
fn structural_ops() {
    for dilation in [1, 2, 3] {
        check(
            &format!("conv1d_causal d={dilation}"),
            &[&[7, 3], &[2, 3, 4]],
            |g, v| {
                let y = g.conv1d_causal(v[0], v[1], dilation)?;
                weighted_sum(g, y, 11)
            },
        );
    }
    check("conv1d_causal k=3", &[&[6, 2], &[3, 2, 2]], |g, v| {
        let y = g.conv1d_causal(v[0], v[1], 2)?;
        weighted_sum(g, y, 12)
    });
    check("embed", &[&[5, 3]], |g, v| {
        let y = g.embed(v[0], &[4, 0, 4, 2])?;
        weighted_sum(g, y, 13)
    });
    check("upsample", &[&[3, 2]], |g, v| {
        let y = g.upsample(v[0], 4)?;
        weighted_sum(g, y, 14)
    });
    check("concat_cols", &[&[3, 2], &[3, 4]], |g, v| {
        let y = g.concat_cols(&[v[0], v[1], v[0]])?;
        weighted_sum(g, y, 15)
    });
    check("slice_cols", &[&[3, 5]], |g, v| {
        let y = g.slice_cols(v[0], 1, 3)?;
        weighted_sum(g, y, 16)
    });
    check("slice_rows", &[&[5, 3]], |g, v| {
        let y = g.slice_rows(v[0], 2, 2)?;
        weighted_sum(g, y, 17)
    });
    check("stack_rows", &[&[1, 3], &[2, 3]], |g, v| {
        let y = g.stack_rows(&[v[0], v[1], v[0]])?;
        weighted_sum(g, y, 18)
    });
    check("cross_entropy", &[&[4, 6]], |g, v| {
        g.cross_entropy(v[0], &[0, 5, 2, 2], None)
    });
    check("cross_entropy weighted", &[&[4, 6]], |g, v| {
        g.cross_entropy(v[0], &[1, 3, 0, 4], Some(&[0.0, 1.0, 1.0, 0.5]))
    });
}

#[test]
fn lstm_projection_and_upsampling() {
    let (f, d, h) = (4, 5, 3);
    check(
        "bilstm",
        &[
            &[f, d],
            &[d, 4 * h],
            &[h, 4 * h],
            &[4 * h],
            &[d, 4 * h],
            &[h, 4 * h],
            &[4 * h],
        ],
        |g, v| {
            let fwd = LstmParams {
                w_ih: v[1],
                w_hh: v[2],
                b: v[3],
            };
            let bwd = LstmParams {
                w_ih: v[4],
                w_hh: v[5],
                b: v[6],
            };
            let y = bilstm_layer(g, v[0], &fwd, &bwd)
                .map_err(|e| NeuralError::InvalidArgument(e.to_string()))?;
            weighted_sum(g, y, 20)
        },
    );
    check(
        "projection + upsample",
        &[&[3, 6], &[6, 4], &[4]],
        |g, v| {
            let e = project_embedding(g, v[0], v[1], v[2])
                .map_err(|e| NeuralError::InvalidArgument(e.to_string()))?;
            let u = upsample(g, e, 3).map_err(|e| NeuralError::InvalidArgument(e.to_string()))?;
            weighted_sum(g, u, 21)
        },
    );
}

#[test]
fn gated_residual_layer() {
    let (t, r, s) = (6, 3, 4);
    let shapes: [&[usize]; 9] = [
        &[t, r],
        &[t, r],
        &[2, r, 2 * r],
        &[r, 2 * r],
        &[2 * r],
        &[r, r],
        &[r],
        &[r, s],
        &[s],
    ];
    check("gated layer", &shapes, |g, v| {
        let p = LayerParams {
            conv: v[2],
            cond_w: v[3],
            cond_b: v[4],
            res_w: v[5],
            res_b: v[6],
            skip_w: v[7],
            skip_b: v[8],
        };
        let out = gated_layer(g, v[0], v[1], &p, 2)
            .map_err(|e| NeuralError::InvalidArgument(e.to_string()))?;
        let a = weighted_sum(g, out.residual, 22)?;
        let b = weighted_sum(g, out.skip, 23)?;
        g.add(a, b)
    });
}

/// 1×2 layers, r = 4, s = 8, a = 8, joint with a small conditioning net.
fn tiny_model() -> ModelConfig {
    ModelConfig {
        stack: StackConfig {
            blocks: 1,
            layers_per_block: 2,
            residual_channels: 4,
            skip_channels: 8,
            bins: 8,
            kernel_size: 2,
        },
        sample_rate: 8000,
        hop_size: 2,
        lstm_hidden: 2,
        lstm_layers: 2,
    }
}

#[test]
fn full_tiny_model() {
    let config = tiny_model();
    let store: ParamStore<f64> = init_params(&config, 5).unwrap();
    let frames = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let feats = rand_tensor(&mut rng, &[frames, FEATURE_DIM]);
    let bins: Vec<usize> = (0..frames * config.hop_size)
        .map(|_| rng.random_range(0..8))
        .collect();
    let inputs: Vec<Tensor<f64>> = store.iter().map(|(_, t)| t.clone()).collect();
    let report = check_gradients(&inputs, |g, vars| {
        let p = store.bind_vars(vars)?;
        let x = g.constant(feats.clone());
        let wrap = |e: &dyn std::fmt::Display| NeuralError::InvalidArgument(e.to_string());
        let e = frame_embedding(g, &p, x, &config.conditioning_shape()).map_err(|e| wrap(&e))?;
        let c = upsample(g, e, config.hop_size).map_err(|e| wrap(&e))?;
        let logits = stack_forward(g, &p, &config.stack, &bins, c).map_err(|e| wrap(&e))?;
        g.cross_entropy(logits, &bins, None)
    })
    .unwrap();
    for ((name, _), err) in store.iter().zip(&report.relative_errors) {
        assert!(*err < TOL, "{name}: relative error {err:e}");
    }
    assert_eq!(report.relative_errors.len(), store.len());
}
