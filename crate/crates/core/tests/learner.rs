mod common;

use common::{params, random_transitions};
use ecrl::learner::{standard_normal, LambdaMode, SacLearner};
use ecrl::Transition;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn target_networks_drift_geometrically() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut l = SacLearner::new(4, 2, &params(&[8, 8], LambdaMode::Unshaped), &mut rng);
    let fresh = SacLearner::new(4, 2, &params(&[8, 8], LambdaMode::Unshaped), &mut rng);
    l.targets = fresh.critics.clone();
    let target0 = l.targets.clone();
    let tau = l.tau_soft;
    for k in 1..=50i32 {
        l.soft_update(tau);
        let keep = (1.0 - tau).powi(k);
        for j in 0..2 {
            let critic = l.critics[j].mlp.to_flat();
            let start = target0[j].mlp.to_flat();
            for ((t, c), t0) in l.targets[j].mlp.to_flat().iter().zip(&critic).zip(&start) {
                let expected = (1.0 - keep) * c + keep * t0;
                assert!((t - expected).abs() <= 1e-12, "k={k}: {t} vs {expected}");
            }
        }
    }
}

#[test]
fn critic_loss_is_non_increasing_on_a_fixed_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut l = SacLearner::new(4, 2, &params(&[4, 4], LambdaMode::Unshaped), &mut rng);
    let transitions = random_transitions(16, 4, 2, &mut rng);
    let refs: Vec<&Transition> = transitions.iter().collect();
    let batch = l.batch(&refs);
    let y = Array1::from_shape_fn(batch.len(), |i| if i % 2 == 0 { 1.0 } else { -0.5 });
    let mut previous = [f64::INFINITY; 2];
    for step in 0..100 {
        let losses = l.update_critics(&batch, &y).unwrap();
        for j in 0..2 {
            assert!(losses[j] <= previous[j], "critic {j} step {step}: {} > {}", losses[j], previous[j]);
        }
        previous = losses;
    }
}

/// Runs 100 updates on a replay of zero-cost, zero-multiplier transitions and
/// records every target and loss bit pattern.
fn trace_updates(mode: LambdaMode) -> (Vec<u64>, u64) {
    let mut init = ChaCha8Rng::seed_from_u64(13);
    let mut l = SacLearner::new(4, 2, &params(&[8, 8], mode), &mut init);
    let mut data = random_transitions(64, 4, 2, &mut init);
    for t in &mut data {
        t.cost = 0.0;
        t.lambda = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut bits = Vec::new();
    for step in 0..100 {
        let refs: Vec<&Transition> = (0..16).map(|i| &data[(step * 7 + i * 3) % data.len()]).collect();
        let batch = l.batch(&refs);
        let next_noise = standard_normal(batch.len(), 2, &mut rng);
        let y = l.sac_target(&batch, &next_noise).unwrap();
        bits.extend(y.iter().map(|v| v.to_bits()));
        let critic = l.update_critics(&batch, &y).unwrap();
        bits.extend(critic.iter().map(|v| v.to_bits()));
        let noise = standard_normal(batch.len(), 2, &mut rng);
        bits.push(l.update_actor(&batch, &noise).unwrap().to_bits());
        l.soft_update(l.tau_soft);
    }
    (bits, l.cost_reads)
}

#[test]
fn zero_cost_zero_lambda_reduces_to_plain_sac() {
    let (plain, plain_reads) = trace_updates(LambdaMode::Unshaped);
    let (shaped, shaped_reads) = trace_updates(LambdaMode::PerTransition);
    assert_eq!(plain_reads, 0);
    assert_eq!(shaped_reads, 100);
    assert_eq!(plain, shaped);
}

#[test]
fn update_runs_target_critics_actor_in_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut l = SacLearner::new(4, 2, &params(&[8, 8], LambdaMode::PerTransition), &mut rng);
    let data = random_transitions(8, 4, 2, &mut rng);
    let refs: Vec<&Transition> = data.iter().collect();
    let before = l.clone();
    let stats = l.update(&refs, &mut rng).unwrap();
    assert!(stats.critic_loss.iter().all(|x| x.is_finite()));
    assert_ne!(l.policy, before.policy);
    assert_ne!(l.critics, before.critics);
    assert_ne!(l.targets, before.targets);
    assert_eq!(l.multiplier, before.multiplier);
}
