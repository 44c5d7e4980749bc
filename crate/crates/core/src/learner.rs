//! Soft actor-critic with twin critics, trained on reward reshaped by a
//! Lagrange multiplier, plus the learner's own multiplier schedule.
//!
//! The critic target for a transition `(s, a, s', r, c, lambda, done)` is
//!
//! ```text
//! y = r - lambda * c + gamma * (1 - done) * (min_j Qt_j(s', a') - alpha * log pi(a' | s'))
//! ```
//!
//! with `a' ~ pi(. | s')` drawn by reparameterization. Which `lambda` is used
//! depends on [`LambdaMode`].

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::Transition;
use crate::error::{check_finite, Result};
use crate::multiplier::MultiplierState;
use crate::net::{concat_columns, log_one_minus_tanh_sq, MlpCache, MlpGrad, PolicyBatch, PolicyNet, QNet, RmsScaler};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Source of the multiplier used to reshape rewards in the critic target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    /// Plain SAC: the cost column is never read.
    Unshaped,
    /// The multiplier stored with each transition.
    PerTransition,
    /// A constant multiplier.
    Fixed(f64),
    /// The learner's current multiplier.
    Current,
}

/// A minibatch laid out as row-major matrices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub rewards: Array1<f64>,
    /// Zero-filled when the batch was built without reading costs.
    pub costs: Array1<f64>,
    pub lambdas: Array1<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(transitions: &[&Transition], read_costs: bool) -> Self {
        let n = transitions.len();
        assert!(n > 0, "empty minibatch");
        let obs_dim = transitions[0].state.len();
        let act_dim = transitions[0].action.len();
        let rows = |f: &dyn Fn(&Transition) -> &[f64], dim: usize| {
            let flat: Vec<f64> = transitions.iter().flat_map(|t| f(t).iter().copied()).collect();
            Array2::from_shape_vec((n, dim), flat).expect("consistent transition dimensions")
        };
        let col = |f: &dyn Fn(&Transition) -> f64| transitions.iter().map(|t| f(t)).collect::<Array1<f64>>();
        Self {
            obs: rows(&|t| &t.state, obs_dim),
            actions: rows(&|t| &t.action, act_dim),
            next_obs: rows(&|t| &t.next_state, obs_dim),
            rewards: col(&|t| t.reward),
            costs: if read_costs {
                col(&|t| t.cost)
            } else {
                Array1::zeros(n)
            },
            lambdas: col(&|t| t.lambda),
            dones: col(&|t| if t.done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Forward record of `obs -> policy -> squashed action -> twin critics`.
pub struct SquashedGraph {
    policy: PolicyBatch,
    noise: Array2<f64>,
    pre_squash: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    critic_caches: [MlpCache; 2],
    /// `min_j Q_j` per row.
    pub min_q: Array1<f64>,
    /// Which critic attained the minimum (ties go to the first).
    argmin: Vec<usize>,
}

/// Gradients of a scalar built from a [`SquashedGraph`].
pub struct SquashedGrads {
    pub policy: MlpGrad,
    pub critics: [MlpGrad; 2],
}

pub fn squashed_forward(policy: &PolicyNet, critics: [&QNet; 2], obs: &Array2<f64>, noise: &Array2<f64>) -> SquashedGraph {
    let pb = policy.forward_batch(obs);
    let std = pb.log_std.mapv(f64::exp);
    let pre_squash = &pb.mean + &(&std * noise);
    let actions = pre_squash.mapv(f64::tanh);
    let mut log_density = Array2::zeros(pre_squash.raw_dim());
    ndarray::Zip::from(&mut log_density)
        .and(noise)
        .and(&pb.log_std)
        .and(&pre_squash)
        .for_each(|o, &z, &ls, &u| *o = -0.5 * z * z - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u));
    let log_prob = log_density.sum_axis(Axis(1));

    let input = concat_columns(obs, &actions);
    let critic_caches = [critics[0].mlp.forward_cached(&input), critics[1].mlp.forward_cached(&input)];
    let q1 = critic_caches[0].output.column(0);
    let q2 = critic_caches[1].output.column(0);
    let argmin: Vec<usize> = q1.iter().zip(q2.iter()).map(|(a, b)| usize::from(b < a)).collect();
    let min_q = q1.iter().zip(q2.iter()).map(|(a, b)| a.min(*b)).collect();
    SquashedGraph {
        policy: pb,
        noise: noise.clone(),
        pre_squash,
        actions,
        log_prob,
        critic_caches,
        min_q,
        argmin,
    }
}

/// Backward pass for `sum_i d_min[i] * min_q[i] + d_logp[i] * log_prob[i]`.
pub fn squashed_backward(
    policy: &PolicyNet,
    critics: [&QNet; 2],
    graph: &SquashedGraph,
    d_min: &Array1<f64>,
    d_logp: &Array1<f64>,
) -> SquashedGrads {
    let rows = d_min.len();
    let act_dim = policy.act_dim;
    let obs_dim = policy.obs_dim();

    let mut critic_grads = Vec::with_capacity(2);
    let mut d_action = Array2::<f64>::zeros((rows, act_dim));
    for (j, critic) in critics.iter().enumerate() {
        let mut g_out = Array2::zeros((rows, 1));
        for i in 0..rows {
            if graph.argmin[i] == j {
                g_out[[i, 0]] = d_min[i];
            }
        }
        let (grad, g_in) = critic.mlp.backward(&graph.critic_caches[j], &g_out);
        d_action += &g_in.slice(ndarray::s![.., obs_dim..]);
        critic_grads.push(grad);
    }

    // d log_prob / d u = 2 tanh(u); d log_prob / d log_std (direct) = -1
    let mut d_pre = Array2::zeros((rows, act_dim));
    ndarray::Zip::indexed(&mut d_pre)
        .and(&d_action)
        .and(&graph.actions)
        .for_each(|(i, _), o, &da, &a| *o = da * (1.0 - a * a) + d_logp[i] * 2.0 * a);
    let std = graph.policy.log_std.mapv(f64::exp);
    let mut d_log_std = &d_pre * &std * &graph.noise;
    for (i, mut row) in d_log_std.rows_mut().into_iter().enumerate() {
        row -= d_logp[i];
    }
    debug_assert_eq!(graph.pre_squash.dim(), d_pre.dim());
    let policy_grad = policy.backward(&graph.policy, &d_pre, &d_log_std);
    let [c0, c1]: [MlpGrad; 2] = critic_grads.try_into().ok().expect("two critics");
    SquashedGrads {
        policy: policy_grad,
        critics: [c0, c1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: [f64; 2],
    pub actor_loss: f64,
    pub target_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SacLearner {
    pub policy: PolicyNet,
    pub critics: [QNet; 2],
    pub targets: [QNet; 2],
    pub multiplier: MultiplierState,
    pub alpha: f64,
    pub gamma: f64,
    pub tau_soft: f64,
    pub lambda_mode: LambdaMode,
    pub actor_opt: RmsScaler,
    pub critic_opts: [RmsScaler; 2],
    /// Number of minibatches whose cost column was read.
    pub cost_reads: u64,
}

#[derive(Debug, Clone)]
pub struct LearnerParams {
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub tau_soft: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lambda_init: f64,
    pub eta: f64,
    pub lambda_mode: LambdaMode,
}

impl SacLearner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, params: &LearnerParams, rng: &mut R) -> Self {
        let policy = PolicyNet::new(obs_dim, &params.hidden, act_dim, rng);
        let critics = [
            QNet::new(obs_dim, act_dim, &params.hidden, rng),
            QNet::new(obs_dim, act_dim, &params.hidden, rng),
        ];
        let targets = critics.clone();
        let actor_opt = RmsScaler::new(params.lr_actor, policy.mlp.param_count());
        let critic_opts = [
            RmsScaler::new(params.lr_critic, critics[0].mlp.param_count()),
            RmsScaler::new(params.lr_critic, critics[1].mlp.param_count()),
        ];
        Self {
            policy,
            critics,
            targets,
            multiplier: MultiplierState::new(params.lambda_init, params.eta),
            alpha: params.alpha,
            gamma: params.gamma,
            tau_soft: params.tau_soft,
            lambda_mode: params.lambda_mode,
            actor_opt,
            critic_opts,
            cost_reads: 0,
        }
    }

    pub fn reads_costs(&self) -> bool {
        self.lambda_mode != LambdaMode::Unshaped
    }

    /// Multiplier the learner's own transitions are tagged with.
    pub fn transition_lambda(&self) -> f64 {
        match self.lambda_mode {
            LambdaMode::Unshaped => 0.0,
            LambdaMode::Fixed(l) => l,
            LambdaMode::PerTransition | LambdaMode::Current => self.multiplier.value,
        }
    }

    pub fn batch(&self, transitions: &[&Transition]) -> Batch {
        Batch::from_transitions(transitions, self.reads_costs())
    }

    /// Reshaped immediate reward per row.
    fn shaped_rewards(&mut self, batch: &Batch) -> Array1<f64> {
        match self.lambda_mode {
            LambdaMode::Unshaped => batch.rewards.clone(),
            mode => {
                self.cost_reads += 1;
                let lambdas = match mode {
                    LambdaMode::PerTransition => batch.lambdas.clone(),
                    LambdaMode::Fixed(l) => Array1::from_elem(batch.len(), l),
                    _ => Array1::from_elem(batch.len(), self.multiplier.value),
                };
                &batch.rewards - &(&lambdas * &batch.costs)
            }
        }
    }

    fn target_graph(&self, batch: &Batch, noise: &Array2<f64>) -> SquashedGraph {
        squashed_forward(&self.policy, [&self.targets[0], &self.targets[1]], &batch.next_obs, noise)
    }

    /// Critic regression targets; `noise` drives `a' ~ pi(. | s')`.
    pub fn sac_target(&mut self, batch: &Batch, noise: &Array2<f64>) -> Result<Array1<f64>> {
        let shaped = self.shaped_rewards(batch);
        let graph = self.target_graph(batch, noise);
        let bootstrap = &graph.min_q - &(self.alpha * &graph.log_prob);
        let y = shaped + &(self.gamma * &(&bootstrap * &batch.dones.mapv(|d| 1.0 - d)));
        check_finite("sac_target", y.iter().copied())?;
        Ok(y)
    }

    /// Gradient of `sum(y)` w.r.t. the policy and target critics.
    pub fn sac_target_gradient(&self, batch: &Batch, noise: &Array2<f64>) -> SquashedGrads {
        let graph = self.target_graph(batch, noise);
        let d_min = batch.dones.mapv(|d| self.gamma * (1.0 - d));
        let d_logp = &d_min * -self.alpha;
        squashed_backward(&self.policy, [&self.targets[0], &self.targets[1]], &graph, &d_min, &d_logp)
    }

    /// Mean squared error of critic `j` against `y`, and its gradient.
    pub fn critic_loss(&self, j: usize, batch: &Batch, y: &Array1<f64>) -> (f64, MlpGrad) {
        let input = concat_columns(&batch.obs, &batch.actions);
        let cache = self.critics[j].mlp.forward_cached(&input);
        let residual = y - &cache.output.column(0);
        let n = batch.len() as f64;
        let loss = residual.mapv(|r| r * r).sum() / n;
        let g_out = (residual.mapv(|r| -2.0 * r / n)).insert_axis(Axis(1));
        let (grad, _) = self.critics[j].mlp.backward(&cache, &g_out);
        (loss, grad)
    }

    /// One optimizer step on both critics. Returns the pre-step losses.
    pub fn update_critics(&mut self, batch: &Batch, y: &Array1<f64>) -> Result<[f64; 2]> {
        let mut losses = [0.0; 2];
        for j in 0..2 {
            let (loss, grad) = self.critic_loss(j, batch, y);
            check_finite("critic_loss", [loss])?;
            grad.check_finite("critic_grad")?;
            self.critic_opts[j].step(&mut self.critics[j].mlp, &grad);
            losses[j] = loss;
        }
        Ok(losses)
    }

    /// Actor objective to minimize, `mean(alpha * log pi(a|s) - min_j Q_j(s, a))`,
    /// and its gradient w.r.t. the policy.
    pub fn actor_loss(&self, batch: &Batch, noise: &Array2<f64>) -> (f64, MlpGrad) {
        let critics = [&self.critics[0], &self.critics[1]];
        let graph = squashed_forward(&self.policy, critics, &batch.obs, noise);
        let n = batch.len() as f64;
        let loss = (self.alpha * &graph.log_prob - &graph.min_q).sum() / n;
        let d_min = Array1::from_elem(batch.len(), -1.0 / n);
        let d_logp = Array1::from_elem(batch.len(), self.alpha / n);
        let grads = squashed_backward(&self.policy, critics, &graph, &d_min, &d_logp);
        (loss, grads.policy)
    }

    /// One optimizer step on the policy; critics are untouched.
    pub fn update_actor(&mut self, batch: &Batch, noise: &Array2<f64>) -> Result<f64> {
        let (loss, grad) = self.actor_loss(batch, noise);
        check_finite("actor_loss", [loss])?;
        grad.check_finite("actor_grad")?;
        self.actor_opt.step(&mut self.policy.mlp, &grad);
        Ok(loss)
    }

    /// `target <- (1 - tau) * target + tau * critic`.
    pub fn soft_update(&mut self, tau: f64) {
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            t.mlp.blend_from(&c.mlp, tau);
        }
    }

    /// Full gradient step on a sampled minibatch: target, critics, actor, targets.
    pub fn update<R: Rng + ?Sized>(&mut self, transitions: &[&Transition], rng: &mut R) -> Result<UpdateStats> {
        let batch = self.batch(transitions);
        let act_dim = self.policy.act_dim;
        let next_noise = standard_normal(batch.len(), act_dim, rng);
        let y = self.sac_target(&batch, &next_noise)?;
        let critic_loss = self.update_critics(&batch, &y)?;
        let noise = standard_normal(batch.len(), act_dim, rng);
        let actor_loss = self.update_actor(&batch, &noise)?;
        self.soft_update(self.tau_soft);
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            target_mean: y.mean().unwrap_or(0.0),
        })
    }

    /// Projected dual step on the learner's multiplier from its episodic constraint.
    pub fn update_multiplier(&mut self, j_c: f64, eps: f64) -> f64 {
        update_learner_multiplier(&mut self.multiplier, j_c, eps)
    }

    /// Stochastic action for experience collection.
    pub fn explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.policy.act_dim).map(|_| StandardNormal.sample(rng)).collect();
        self.policy.sample_action(obs, &noise).expect("observation matches policy").0
    }
}

/// `lambda <- max(lambda + eta * (j_c - eps), 0)`.
pub fn update_learner_multiplier(multiplier: &mut MultiplierState, j_c: f64, eps: f64) -> f64 {
    multiplier.ascend(j_c - eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(mode: LambdaMode) -> LearnerParams {
        LearnerParams {
            hidden: vec![8, 8],
            alpha: 0.1,
            gamma: 0.99,
            tau_soft: 0.005,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            lambda_init: 0.001,
            eta: 1e-5,
            lambda_mode: mode,
        }
    }

    fn transition(reward: f64, cost: f64, lambda: f64, done: bool) -> Transition {
        Transition {
            state: vec![0.1, -0.2, 0.3],
            action: vec![0.5],
            next_state: vec![0.2, 0.1, -0.4],
            reward,
            cost,
            done,
            lambda,
        }
    }

    #[test]
    fn gamma_zero_target_is_shaped_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::PerTransition), &mut rng);
        l.gamma = 0.0;
        let ts = [transition(1.5, 0.4, 0.5, false), transition(-1.0, 1.0, 2.0, false)];
        let refs: Vec<_> = ts.iter().collect();
        let batch = l.batch(&refs);
        let y = l.sac_target(&batch, &standard_normal(2, 1, &mut rng)).unwrap();
        assert_eq!(y.to_vec(), vec![1.5 - 0.5 * 0.4, -1.0 - 2.0 * 1.0]);
    }

    #[test]
    fn done_cancels_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::PerTransition), &mut rng);
        let t = transition(1.0, 0.5, 2.0, true);
        let batch = l.batch(&[&t]);
        let y = l.sac_target(&batch, &standard_normal(1, 1, &mut rng)).unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn unshaped_never_reads_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        let t = transition(1.0, 0.9, 3.0, true);
        let batch = l.batch(&[&t]);
        assert_eq!(batch.costs[0], 0.0);
        let y = l.sac_target(&batch, &standard_normal(1, 1, &mut rng)).unwrap();
        assert_eq!(y[0], 1.0);
        assert_eq!(l.cost_reads, 0);
    }

    #[test]
    fn fixed_and_current_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = transition(1.0, 0.5, 7.0, true);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::Fixed(10.0)), &mut rng);
        let y = l.sac_target(&l.batch(&[&t]), &Array2::zeros((1, 1))).unwrap();
        assert_eq!(y[0], 1.0 - 10.0 * 0.5);
        l.lambda_mode = LambdaMode::Current;
        l.multiplier.value = 0.5;
        let y = l.sac_target(&l.batch(&[&t]), &Array2::zeros((1, 1))).unwrap();
        assert_eq!(y[0], 0.75);
        assert_eq!(l.cost_reads, 2);
    }

    #[test]
    fn single_transition_critic_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        let t = transition(1.0, 0.0, 0.0, true);
        let batch = l.batch(&[&t]);
        let q = l.critics[0].mlp.forward(&concat_columns(&batch.obs, &batch.actions))[[0, 0]];
        let y = Array1::from_elem(1, 0.7);
        let (loss, _) = l.critic_loss(0, &batch, &y);
        assert!((loss - (0.7 - q).powi(2)).abs() < 1e-14);

        let y = Array1::from_elem(1, q);
        let (loss, grad) = l.critic_loss(0, &batch, &y);
        assert_eq!(loss, 0.0);
        assert!(grad.params().all(|g| *g == 0.0));
    }

    #[test]
    fn soft_update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        for p in l.critics[0].mlp.params_mut() {
            *p = 2.0;
        }
        for p in l.targets[0].mlp.params_mut() {
            *p = 0.0;
        }
        let before = l.targets.clone();
        l.soft_update(0.0);
        assert_eq!(l.targets, before);
        l.soft_update(0.5);
        assert!(l.targets[0].mlp.params().all(|p| *p == 1.0));
        l.soft_update(1.0);
        assert_eq!(l.targets[0], l.critics[0]);
    }

    #[test]
    fn constant_critics_and_zero_alpha_leave_actor_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        l.alpha = 0.0;
        for c in &mut l.critics {
            for layer in &mut c.mlp.layers {
                layer.weight.fill(0.0);
            }
        }
        let t = transition(0.0, 0.0, 0.0, false);
        let batch = l.batch(&[&t, &t]);
        let before = l.policy.clone();
        let noise = standard_normal(2, 1, &mut rng);
        let (_, grad) = l.actor_loss(&batch, &noise);
        assert!(grad.params().all(|g| *g == 0.0));
        l.update_actor(&batch, &noise).unwrap();
        assert_eq!(l.policy, before);
    }

    #[test]
    fn identical_critics_match_single_critic_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        l.critics[1] = l.critics[0].clone();
        let t = transition(0.0, 0.0, 0.0, false);
        let batch = l.batch(&[&t]);
        let noise = Array2::from_elem((1, 1), 0.3);
        let (loss, _) = l.actor_loss(&batch, &noise);
        let (action, log_prob) = l.policy.sample_action(&t.state, &[0.3]).unwrap();
        let expected = l.alpha * log_prob - l.critics[0].value(&t.state, &action);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn learner_multiplier_examples() {
        let mut m = MultiplierState::new(0.001, 1e-5);
        assert_eq!(update_learner_multiplier(&mut m, 0.5, 0.4), 0.001 + 1e-5 * (0.5 - 0.4));
        let mut m = MultiplierState::new(0.0, 1.0);
        assert_eq!(update_learner_multiplier(&mut m, 0.3, 0.4), 0.0);
        let mut m = MultiplierState::new(0.25, 1.0);
        assert_eq!(update_learner_multiplier(&mut m, 0.4, 0.4), 0.25);
    }

    #[test]
    fn explore_stays_in_open_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = SacLearner::new(3, 1, &params(LambdaMode::Unshaped), &mut rng);
        for _ in 0..100 {
            let a = l.explore(&[0.3, 0.2, 0.1], &mut rng);
            assert!(a[0] > -1.0 && a[0] < 1.0);
        }
    }
}
