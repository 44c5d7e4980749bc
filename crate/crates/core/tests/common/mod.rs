//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use ecrl::learner::{standard_normal, Batch, LambdaMode, LearnerParams, SacLearner};
use ecrl::net::Mlp;
use ecrl::Transition;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const FD_FLOOR: f64 = 1e-6;

pub fn params(hidden: &[usize], mode: LambdaMode) -> LearnerParams {
    LearnerParams {
        hidden: hidden.to_vec(),
        alpha: 0.1,
        gamma: 0.99,
        tau_soft: 0.005,
        lr_actor: 1e-3,
        lr_critic: 1e-3,
        lambda_init: 0.5,
        eta: 1e-5,
        lambda_mode: mode,
    }
}

pub fn random_transitions(n: usize, obs_dim: usize, act_dim: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            state: (0..obs_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            action: (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            next_state: (0..obs_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            reward: rng.random_range(-1.0..1.0),
            cost: rng.random_range(0.0..1.0),
            done: rng.random_bool(0.2),
            lambda: rng.random_range(0.0..2.0),
        })
        .collect()
}

/// Central difference of `f` around `net`'s parameters, coordinate by coordinate.
pub fn numeric_gradient(net: &Mlp, mut f: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.to_flat();
    let mut probe = net.clone();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] = base[i] + FD_STEP;
        probe.set_flat(&x).unwrap();
        let up = f(&probe);
        x[i] = base[i] - FD_STEP;
        probe.set_flat(&x).unwrap();
        let down = f(&probe);
        grad.push((up - down) / (2.0 * FD_STEP));
    }
    grad
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR))
        .fold(0.0, f64::max)
}

/// Worst relative error per graph over one random trial.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientErrors {
    pub actor: f64,
    pub critic: f64,
    pub target_policy: f64,
    pub target_critics: f64,
}

impl GradientErrors {
    pub fn max(&self) -> f64 {
        self.actor.max(self.critic).max(self.target_policy).max(self.target_critics)
    }
}

/// Finite-difference check of the actor loss, critic loss and target graphs on
/// an <8,8> learner with PointGoal dimensions.
pub fn gradient_trial(seed: u64) -> GradientErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obs_dim, act_dim) = (4, 2);
    let learner = SacLearner::new(obs_dim, act_dim, &params(&[8, 8], LambdaMode::PerTransition), &mut rng);
    let transitions = random_transitions(6, obs_dim, act_dim, &mut rng);
    let refs: Vec<&Transition> = transitions.iter().collect();
    let batch: Batch = learner.batch(&refs);
    let noise: Array2<f64> = standard_normal(batch.len(), act_dim, &mut rng);

    let (_, actor_grad) = learner.actor_loss(&batch, &noise);
    let actor_numeric = numeric_gradient(&learner.policy.mlp, |m| {
        let mut l = learner.clone();
        l.policy.mlp = m.clone();
        l.actor_loss(&batch, &noise).0
    });

    let y = ndarray::Array1::from_shape_fn(batch.len(), |i| (i as f64 - 2.0) * 0.7);
    let (_, critic_grad) = learner.critic_loss(1, &batch, &y);
    let critic_numeric = numeric_gradient(&learner.critics[1].mlp, |m| {
        let mut l = learner.clone();
        l.critics[1].mlp = m.clone();
        l.critic_loss(1, &batch, &y).0
    });

    let sum_target = |l: &mut SacLearner| l.sac_target(&batch, &noise).unwrap().sum();
    let target_grad = learner.sac_target_gradient(&batch, &noise);
    let policy_numeric = numeric_gradient(&learner.policy.mlp, |m| {
        let mut l = learner.clone();
        l.policy.mlp = m.clone();
        sum_target(&mut l)
    });
    let mut target_critics = 0.0f64;
    for j in 0..2 {
        let numeric = numeric_gradient(&learner.targets[j].mlp, |m| {
            let mut l = learner.clone();
            l.targets[j].mlp = m.clone();
            sum_target(&mut l)
        });
        target_critics = target_critics.max(max_relative_error(&target_grad.critics[j].to_flat(), &numeric));
    }

    GradientErrors {
        actor: max_relative_error(&actor_grad.to_flat(), &actor_numeric),
        critic: max_relative_error(&critic_grad.to_flat(), &critic_numeric),
        target_policy: max_relative_error(&target_grad.policy.to_flat(), &policy_numeric),
        target_critics,
    }
}

/// Reference ordering for stochastic ranking with a deterministic tolerate
/// probability: `p_f = 1` sorts by reward, `p_f = 0` puts feasible individuals
/// first by reward and then infeasible ones by penalty. Ties keep input order.
pub fn reference_rank(evals: &[(f64, f64)], p_f: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..evals.len()).collect();
    if p_f >= 1.0 {
        order.sort_by(|&a, &b| evals[b].0.total_cmp(&evals[a].0));
    } else {
        order.sort_by(|&a, &b| {
            let (ra, pa) = evals[a];
            let (rb, pb) = evals[b];
            if pa == 0.0 && pb == 0.0 {
                rb.total_cmp(&ra)
            } else {
                pa.total_cmp(&pb)
            }
        });
    }
    order
}

/// Random `(reward, penalty)` population of size 1..=8; about half feasible.
pub fn random_population(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mu = rng.random_range(1..=8);
    (0..mu)
        .map(|_| {
            let reward = rng.random_range(-100.0..100.0);
            let penalty = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..1.0) };
            (reward, penalty)
        })
        .collect()
}
