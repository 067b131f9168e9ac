//! Gumbel sampling statistics and agreement between the incremental
//! sampler and the batch (training) forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ssws::codec::MuLaw;
use ssws::conditioning::{generate_synthetic_features, FrameFeatures};
use ssws::neural::{Graph, ParamStore};
use ssws::sampler::{
    generate, gumbel_sample, synthesize, BinPolicy, SampleError, SamplerConfig, SynthTrace,
};
use ssws::trainer::{chunk_logits, chunk_utterance, harmonic_signal, ChunkLayout};
use ssws::wavenet::{init_params, ModelConfig, StackConfig};

/// Softmax computed independently of the library.
fn softmax_oracle(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Pearson goodness-of-fit p-value.
fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    ChiSquared::new((counts.len() - 1) as f64).unwrap().sf(stat)
}

#[test]
fn gumbel_draws_follow_softmax() {
    let mut gen = ChaCha8Rng::seed_from_u64(11);
    for case in 0..5u64 {
        let k = 8 + 4 * case as usize;
        let logits: Vec<f64> = (0..k).map(|_| gen.random_range(-2.0..2.0)).collect();
        let probs = softmax_oracle(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let mut counts = vec![0u64; k];
        for _ in 0..100_000 {
            counts[gumbel_sample(&logits, &mut rng).unwrap()] += 1;
        }
        let p = chi_square_p(&counts, &probs);
        assert!(p > 1e-3, "case {case}: chi-square p = {p:e}");
    }
}

#[test]
fn gumbel_rejects_bad_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        gumbel_sample::<f64, _>(&[], &mut rng),
        Err(SampleError::Empty)
    ));
    assert!(matches!(
        gumbel_sample(&[0.0, f64::NAN], &mut rng),
        Err(SampleError::NonFiniteLogit(1))
    ));
    // Overwhelming logit always wins.
    let mut l = vec![0.0f32; 64];
    l[17] = 80.0;
    assert!((0..1000).all(|_| gumbel_sample(&l, &mut rng).unwrap() == 17));
}

fn small_config(bins: usize) -> ModelConfig {
    ModelConfig {
        stack: StackConfig {
            blocks: 2,
            layers_per_block: 4,
            residual_channels: 8,
            skip_channels: 16,
            bins,
            kernel_size: 2,
        },
        sample_rate: 8000,
        hop_size: 4,
        lstm_hidden: 4,
        lstm_layers: 2,
    }
}

fn features(config: &ModelConfig, frames: usize, seed: u64) -> (FrameFeatures, Vec<usize>) {
    let secs = (frames * config.hop_size) as f64 / config.sample_rate as f64;
    let audio = harmonic_signal(config.sample_rate, secs, 200.0, &[0.5, 0.25]);
    let f = generate_synthetic_features(&audio, config.hop_size, seed).unwrap();
    let bins = MuLaw::new(config.stack.bins)
        .unwrap()
        .encode_all(&audio.samples()[..f.samples()])
        .unwrap();
    (f, bins)
}

#[test]
fn degenerate_head_forces_one_bin() {
    let config = small_config(1024);
    let mut params: ParamStore<f32> = init_params(&config, 2).unwrap();
    params.get_mut("head.w2").unwrap().data_mut().fill(0.0);
    let b2 = params.get_mut("head.b2").unwrap().data_mut();
    b2.fill(0.0);
    b2[512] = 60.0;
    let (f, _) = features(&config, 50, 1);
    let (audio, bins) = synthesize(&f, &params, &config, &SamplerConfig::default(), None).unwrap();
    assert_eq!(bins.len(), 200);
    assert!(bins.iter().all(|&b| b == 512));
    let expected = MuLaw::new(1024).unwrap().decode(512).unwrap() as f32;
    assert!(audio.samples().iter().all(|&s| s == expected));
}

/// Feeds back the recorded bins and remembers every logit vector.
struct TeacherForcing {
    truth: Vec<usize>,
    seen: Vec<Option<Vec<f64>>>,
}

impl BinPolicy<f64> for TeacherForcing {
    fn choose(&mut self, logits: &[f64], position: usize) -> Result<usize, SampleError> {
        assert!(
            self.seen[position].is_none(),
            "position {position} visited twice"
        );
        self.seen[position] = Some(logits.to_vec());
        Ok(self.truth[position])
    }
}

#[test]
fn incremental_sampler_matches_training_forward() {
    let config = small_config(32);
    let params: ParamStore<f64> = init_params(&config, 9).unwrap();
    // 300 frames: two full chunks and a partial one.
    let (f, truth) = features(&config, 300, 4);
    let layout = ChunkLayout::default();
    let mut policy = TeacherForcing {
        truth: truth.clone(),
        seen: vec![None; truth.len()],
    };
    let mut trace = SynthTrace::default();
    let out = generate(&f, &params, &config, layout, &mut policy, Some(&mut trace)).unwrap();
    assert_eq!(out, truth);
    assert_eq!(trace.chunks.len(), 3);

    let chunks = chunk_utterance(&f, &truth, layout, config.stack.bins / 2).unwrap();
    let mut worst = 0.0f64;
    for chunk in &chunks {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let rows = chunk.content_samples();
        let logits = chunk_logits(&mut g, &bound, &config, chunk, rows.clone()).unwrap();
        let batch = g.value(logits);
        let offset = chunk.window_start * config.hop_size as isize;
        for (i, r) in rows.enumerate() {
            let s = (offset + r as isize) as usize;
            let inc = policy.seen[s].as_ref().unwrap();
            for (a, b) in inc.iter().zip(batch.row(i)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(policy.seen.iter().all(Option::is_some));
    assert!(worst < 1e-9, "max |incremental − batch| = {worst:e}");
}

#[test]
fn warm_up_continues_previous_chunk() {
    let config = small_config(64);
    let params: ParamStore<f32> = init_params(&config, 3).unwrap();
    let (f, _) = features(&config, 280, 2);
    let mut trace = SynthTrace::default();
    let sampler = SamplerConfig {
        seed: 5,
        ..Default::default()
    };
    let (_, bins) = synthesize(&f, &params, &config, &sampler, Some(&mut trace)).unwrap();
    let hop = config.hop_size;
    let history = sampler.layout.history * hop;
    assert_eq!(
        trace
            .chunks
            .iter()
            .map(|c| c.content_start_frame)
            .collect::<Vec<_>>(),
        vec![0, 120, 240]
    );
    assert!(trace.chunks[0]
        .warmup_bins
        .iter()
        .all(|&b| b == config.stack.bins / 2));
    for w in trace.chunks.windows(2) {
        let prev = &w[0].content_bins;
        assert_eq!(w[1].warmup_bins, prev[prev.len() - history..]);
    }
    let joined: Vec<usize> = trace
        .chunks
        .iter()
        .flat_map(|c| c.content_bins.iter().copied())
        .collect();
    assert_eq!(joined, bins);
    // Same seed, same audio.
    let (_, again) = synthesize(&f, &params, &config, &sampler, None).unwrap();
    assert_eq!(again, bins);
}
