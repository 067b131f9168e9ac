//! Trainer behaviour on small fixtures.

use ssws::codec::MuLaw;
use ssws::conditioning::generate_synthetic_features;
use ssws::neural::{read_checkpoint, AdamState, LearningRateSchedule, ParamStore};
use ssws::trainer::{
    evaluate, harmonic_signal, train, TrainError, TrainOutput, TrainRunConfig, Utterance,
};
use ssws::wavenet::{init_params, ModelConfig};

fn fixture(config: &ModelConfig, secs: f64) -> Vec<Utterance> {
    let audio = harmonic_signal(config.sample_rate, secs, 200.0, &[0.5, 0.25, 0.125]);
    let feats = generate_synthetic_features(&audio, config.hop_size, 0).unwrap();
    vec![Utterance::from_audio(
        "fx",
        "test",
        &audio,
        feats,
        &MuLaw::new(config.stack.bins).unwrap(),
    )
    .unwrap()]
}

fn run(epochs: u32, batch_size: usize) -> TrainRunConfig {
    TrainRunConfig {
        epochs,
        seed: 3,
        batch_size,
        schedule: LearningRateSchedule::new(3e-3, 0.99).unwrap(),
    }
}

fn max_abs_diff(a: &ParamStore<f32>, b: &ParamStore<f32>, name: &str) -> f32 {
    let (x, y) = (a.get(name).unwrap().data(), b.get(name).unwrap().data());
    x.iter()
        .zip(y)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f32::max)
}

#[test]
fn identical_runs_give_identical_traces() {
    let config = ModelConfig::tiny();
    let data = fixture(&config, 0.75);
    let a = train(&data, &config, &run(2, 2), None, None).unwrap();
    let b = train(&data, &config, &run(2, 2), None, None).unwrap();
    assert_eq!(a.trace, b.trace);
    for (name, t) in a.params.iter() {
        assert_eq!(t, b.params.get(name).unwrap(), "{name}");
    }
    let mut other = run(2, 2);
    other.seed = 4;
    assert_ne!(
        train(&data, &config, &other, None, None).unwrap().trace,
        a.trace
    );
}

#[test]
fn conditioning_is_trained_jointly() {
    let config = ModelConfig::tiny();
    let data = fixture(&config, 0.5);
    let init: ParamStore<f32> = init_params(&config, 3).unwrap();
    let out = train(&data, &config, &run(1, 1), None, None).unwrap();
    for name in [
        "cond.l0.fwd.w_ih",
        "cond.l1.bwd.w_hh",
        "cond.proj.w",
        "stack.l0.cond_w",
        "head.w2",
    ] {
        assert!(
            max_abs_diff(&init, &out.params, name) > 0.0,
            "{name} did not move"
        );
    }
}

#[test]
fn loss_falls_and_artifacts_are_written() {
    let config = ModelConfig::tiny();
    let data = fixture(&config, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let output = TrainOutput {
        dir: dir.path().join("run"),
    };
    let out = train(&data, &config, &run(8, 1), None, Some(&output)).unwrap();
    let first = out.trace[0].loss;
    let last = out.trace.last().unwrap().loss;
    assert!(last < first, "loss {first} → {last}");
    assert!((out.trace[1].learning_rate - 3e-3 * 0.99).abs() < 1e-15);
    let (params, adam) = read_checkpoint(&output.checkpoint_path()).unwrap();
    assert!(adam.is_some());
    assert_eq!(params.get("head.w2"), out.params.get("head.w2"));
    assert_eq!(ModelConfig::load(&output.config_path()).unwrap(), config);
    let trace = std::fs::read_to_string(output.trace_path()).unwrap();
    assert_eq!(trace.lines().count(), 9);
    assert!(trace.starts_with("epoch,loss,learning_rate\n"));
    let held = evaluate(&out.params, &data, &config).unwrap();
    assert!(held.is_finite() && held < first);
}

#[test]
fn resuming_from_state_continues() {
    let config = ModelConfig::tiny();
    let data = fixture(&config, 0.5);
    let a = train(&data, &config, &run(1, 1), None, None).unwrap();
    let steps = a.adam.step_count;
    let b = train(
        &data,
        &config,
        &run(1, 1),
        Some((a.params.clone(), a.adam.clone())),
        None,
    )
    .unwrap();
    assert!(b.adam.step_count > steps);
    assert!(max_abs_diff(&a.params, &b.params, "head.w2") > 0.0);
}

#[test]
fn warm_up_shorter_than_receptive_field_is_rejected() {
    let mut config = ModelConfig::tiny();
    config.hop_size = 2;
    config.stack.layers_per_block = 6; // RF 127 > 35 · 2
    let data = fixture(&config, 0.25);
    assert!(matches!(
        train(&data, &config, &run(1, 1), None, None),
        Err(TrainError::Warmup { .. })
    ));
}

#[test]
fn non_finite_loss_aborts() {
    let config = ModelConfig::tiny();
    let data = fixture(&config, 0.25);
    let mut params: ParamStore<f32> = init_params(&config, 3).unwrap();
    params.get_mut("head.b2").unwrap().data_mut()[0] = f32::NAN;
    let adam = AdamState::new(&params);
    let err = train(&data, &config, &run(1, 1), Some((params, adam)), None)
        .err()
        .unwrap();
    assert!(
        matches!(err, TrainError::NonFiniteLoss { epoch: 0, .. }),
        "{err}"
    );
}
