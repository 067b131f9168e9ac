//! Shared fixtures: a synthetic rater that drives an evaluation store
//! through its public API.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use ssws::mushra::Assignment;
use ssws::service::{EvalStore, NextScreen, RatingSubmission, ServiceError};

/// True quality per system; listeners see it through Gaussian-ish noise.
pub fn quality(system: &str) -> f64 {
    match system {
        "recordings" => 82.0,
        "SSWS" => 71.0,
        "hybrid" => 63.0,
        "SPSS" => 48.0,
        _ => 50.0,
    }
}

/// Deterministic score for one (listener, utterance, system).
pub fn synthetic_score(listener: &str, utterance: &str, system: &str) -> i64 {
    let digest = Sha256::digest(format!("{listener}|{utterance}|{system}"));
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    // Sum of uniforms: roughly normal with sd 8.
    let noise: f64 = (0..12).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 4.0;
    (quality(system) + noise).round().clamp(0.0, 100.0) as i64
}

/// Rates every screen of every listener, mapping blinded slots back to
/// systems through the assignment (which a real listener never sees).
/// Returns the number of screens submitted.
pub fn rate_everything(
    store: &mut EvalStore,
    assignment: &Assignment,
) -> Result<usize, ServiceError> {
    let mut submitted = 0;
    for l in &assignment.listeners {
        loop {
            match store.next_screen(&l.listener_id)? {
                NextScreen::Done { .. } => break,
                NextScreen::Screen {
                    screen_id,
                    utterance_id,
                    slots,
                    ..
                } => {
                    let screen = l
                        .screens
                        .iter()
                        .find(|s| s.screen_id == screen_id)
                        .expect("assigned screen");
                    let scores: BTreeMap<String, i64> = slots
                        .iter()
                        .zip(&screen.system_order)
                        .map(|(slot, sys)| {
                            (
                                slot.slot.clone(),
                                synthetic_score(&l.listener_id, &utterance_id, sys),
                            )
                        })
                        .collect();
                    store.submit_ratings(
                        &l.listener_id,
                        RatingSubmission {
                            screen_id,
                            scores,
                            flags: vec![],
                        },
                    )?;
                    submitted += 1;
                }
            }
        }
    }
    Ok(submitted)
}
