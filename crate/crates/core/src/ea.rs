//! The evolutionary half: constraint penalty, stochastic ranking, variation,
//! elitism and learner injection.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::multiplier::MultiplierState;
use crate::net::{Genome, PolicyNet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub j_r: f64,
    pub j_c: f64,
}

/// One actor of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub multiplier: MultiplierState,
    pub last_eval: Option<EvalSummary>,
}

/// Sum of squared constraint violations, `sum_i max(0, j_c[i] - eps[i])^2`.
pub fn penalty(j_c: &[f64], epsilons: &[f64]) -> Result<f64> {
    if j_c.len() != epsilons.len() {
        return Err(Error::Dimension {
            what: "penalty epsilons",
            expected: j_c.len(),
            got: epsilons.len(),
        });
    }
    Ok(j_c
        .iter()
        .zip(epsilons)
        .map(|(c, e)| (c - e).max(0.0).powi(2))
        .sum())
}

/// Uniform draw from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.random();
        if z > 0.0 {
            return z;
        }
    }
}

/// Stochastic ranking of `(reward, penalty)` pairs.
///
/// Runs `mu` sweeps of adjacent comparisons over an index permutation. Each
/// comparison draws a fresh `zeta`; the pair is compared on reward (higher
/// first) when both penalties are zero or `zeta < p_f`, and on penalty
/// (lower first) otherwise. Returns indices, best first.
pub fn stochastic_rank<R: Rng + ?Sized>(evals: &[(f64, f64)], p_f: f64, rng: &mut R) -> Vec<usize> {
    stochastic_rank_with(evals, p_f, || open_unit(rng))
}

/// [`stochastic_rank`] with an explicit `zeta` source, called once per comparison.
pub fn stochastic_rank_with<F: FnMut() -> f64>(evals: &[(f64, f64)], p_f: f64, mut zeta: F) -> Vec<usize> {
    let mu = evals.len();
    let mut order: Vec<usize> = (0..mu).collect();
    for _ in 0..mu {
        for j in 0..mu.saturating_sub(1) {
            let z = zeta();
            let (r_a, phi_a) = evals[order[j]];
            let (r_b, phi_b) = evals[order[j + 1]];
            let swap = if (phi_a == 0.0 && phi_b == 0.0) || z < p_f {
                r_a < r_b
            } else {
                phi_a > phi_b
            };
            if swap {
                order.swap(j, j + 1);
            }
        }
    }
    order
}

/// Uniform crossover: each coordinate of `child_a` comes from `a` where the
/// mask is true and from `b` otherwise; `child_b` takes the other parent.
pub fn crossover_with_mask(a: &Genome, b: &Genome, mask: &[bool]) -> Result<(Genome, Genome)> {
    if a.len() != b.len() || mask.len() != a.len() {
        return Err(Error::Dimension {
            what: "crossover parents",
            expected: a.len(),
            got: if a.len() != b.len() { b.len() } else { mask.len() },
        });
    }
    let (mut ca, mut cb) = (Vec::with_capacity(a.len()), Vec::with_capacity(a.len()));
    for ((&x, &y), &from_a) in a.0.iter().zip(&b.0).zip(mask) {
        if from_a {
            ca.push(x);
            cb.push(y);
        } else {
            ca.push(y);
            cb.push(x);
        }
    }
    Ok((Genome(ca), Genome(cb)))
}

pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Result<(Genome, Genome)> {
    let mask: Vec<bool> = (0..a.len()).map(|_| rng.random_bool(0.5)).collect();
    crossover_with_mask(a, b, &mask)
}

/// Gaussian mutation over a random coordinate subset, with occasional resets.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    /// Fraction of coordinates perturbed (at least one).
    pub fraction: f64,
    /// Noise std is `noise_scale * (0.1 * |x| + 1e-3)`.
    pub noise_scale: f64,
    /// Chance that a selected coordinate is redrawn from its init range instead.
    pub reset_prob: f64,
    /// Per-coordinate half-width of the uniform init distribution.
    pub reset_bounds: Vec<f64>,
}

impl Mutation {
    pub fn uniform(len: usize, bound: f64) -> Self {
        Self {
            fraction: 0.1,
            noise_scale: 1.0,
            reset_prob: 0.05,
            reset_bounds: vec![bound; len],
        }
    }

    /// Reset bounds matching [`crate::net::Mlp::new`]'s init for this policy.
    pub fn for_policy(policy: &PolicyNet) -> Self {
        let bounds = policy
            .mlp
            .layers
            .iter()
            .flat_map(|l| {
                let b = 1.0 / (l.weight.nrows() as f64).sqrt();
                std::iter::repeat_n(b, l.weight.len() + l.bias.len())
            })
            .collect();
        Self {
            reset_bounds: bounds,
            ..Self::uniform(0, 0.0)
        }
    }
}

/// With probability `1 - p_m` returns the genome unchanged; otherwise perturbs it.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, p_m: f64, params: &Mutation, rng: &mut R) -> Genome {
    let mut out = genome.clone();
    if genome.is_empty() || !rng.random_bool(p_m) {
        return out;
    }
    let n = genome.len();
    let count = ((params.fraction * n as f64).ceil() as usize).clamp(1, n);
    for k in index::sample(rng, n, count) {
        let x = &mut out.0[k];
        if rng.random_bool(params.reset_prob) {
            let bound = params.reset_bounds.get(k).copied().unwrap_or(1.0);
            if bound > 0.0 {
                *x = rng.random_range(-bound..=bound);
            }
        } else {
            let std = params.noise_scale * (0.1 * x.abs() + 1e-3);
            let z: f64 = StandardNormal.sample(rng);
            *x += std * z;
        }
    }
    out
}

/// Size-3 tournament over ranked positions; the lower index wins.
pub fn tournament<R: Rng + ?Sized>(len: usize, rng: &mut R) -> usize {
    (0..3).map(|_| rng.random_range(0..len)).min().unwrap()
}

/// Builds the next population from a ranked one (index 0 best).
///
/// The first `elites` individuals are copied unchanged. The remaining slots
/// are filled with mutated crossover children of tournament-selected parents;
/// each child inherits the multiplier of the parent it takes its mask from.
pub fn evolve_generation<R: Rng + ?Sized>(
    ranked: &[Individual],
    elites: usize,
    p_m: f64,
    mutation: &Mutation,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let mu = ranked.len();
    assert!(elites < mu, "elite count {elites} must be below population size {mu}");
    let mut next: Vec<Individual> = ranked[..elites].to_vec();
    while next.len() < mu {
        let a = &ranked[tournament(mu, rng)];
        let b = &ranked[tournament(mu, rng)];
        let (ca, cb) = crossover(&a.genome, &b.genome, rng)?;
        for (child, parent) in [(ca, a), (cb, b)] {
            if next.len() < mu {
                next.push(Individual {
                    genome: mutate(&child, p_m, mutation, rng),
                    multiplier: parent.multiplier,
                    last_eval: None,
                });
            }
        }
    }
    Ok(next)
}

/// Copies the learner into the last (lowest ranked) slot and moves that
/// slot's multiplier by `eta * mean(batch - eps)`, projected at zero.
/// Returns the new multiplier value.
pub fn inject_learner(
    population: &mut [Individual],
    learner: &Genome,
    constraint_batch: &[f64],
    eps: f64,
    eta: f64,
) -> Result<f64> {
    if constraint_batch.is_empty() {
        return Err(Error::EmptyBuffer("constraint batch"));
    }
    let slot = population.last_mut().expect("non-empty population");
    let violation = constraint_batch.iter().map(|j| j - eps).sum::<f64>() / constraint_batch.len() as f64;
    slot.genome = learner.clone();
    slot.multiplier.eta = eta;
    slot.last_eval = None;
    Ok(slot.multiplier.ascend(violation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn individual(tag: f64, lambda: f64) -> Individual {
        Individual {
            genome: Genome(vec![tag; 4]),
            multiplier: MultiplierState::new(lambda, 0.1),
            last_eval: None,
        }
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(&[0.4], &[0.4]).unwrap(), 0.0);
        assert!((penalty(&[0.5], &[0.4]).unwrap() - 0.01).abs() < 1e-15);
        assert!((penalty(&[0.5, 0.3], &[0.4, 0.4]).unwrap() - 0.01).abs() < 1e-15);
        assert!(penalty(&[0.5], &[0.4, 0.4]).is_err());
    }

    #[test]
    fn all_feasible_sorts_by_reward_for_any_zeta() {
        let evals = [(1.0, 0.0), (5.0, 0.0), (3.0, 0.0), (-2.0, 0.0)];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(stochastic_rank(&evals, 0.45, &mut rng), vec![1, 2, 0, 3]);
        }
    }

    #[test]
    fn p_f_one_ignores_penalty() {
        let evals = [(1.0, 0.5), (5.0, 0.9), (3.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(stochastic_rank(&evals, 1.0, &mut rng), vec![1, 2, 0]);
    }

    #[test]
    fn p_f_zero_hand_example() {
        let evals = [(5.0, 0.2), (3.0, 0.1), (9.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(stochastic_rank(&evals, 0.0, &mut rng), vec![2, 1, 0]);
    }

    #[test]
    fn zeta_drawn_once_per_comparison() {
        for mu in 1..7 {
            let evals: Vec<_> = (0..mu).map(|i| (i as f64, 0.1)).collect();
            let mut calls = 0;
            stochastic_rank_with(&evals, 0.5, || {
                calls += 1;
                0.3
            });
            assert_eq!(calls, mu * (mu - 1));
        }
    }

    #[test]
    fn ties_do_not_swap() {
        let evals = [(1.0, 0.0), (1.0, 0.0), (0.0, 0.3), (0.0, 0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(stochastic_rank(&evals, 0.0, &mut rng), vec![0, 1, 2, 3]);
    }

    #[test]
    fn crossover_examples() {
        let a = Genome(vec![1.0, 2.0, 3.0]);
        let b = Genome(vec![-1.0, -2.0, -3.0]);
        let (ca, cb) = crossover_with_mask(&a, &b, &[true; 3]).unwrap();
        assert_eq!((ca, cb), (a.clone(), b.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ca, cb) = crossover(&a, &a, &mut rng).unwrap();
        assert_eq!((ca, cb), (a.clone(), a.clone()));
        assert!(crossover(&a, &Genome(vec![0.0]), &mut rng).is_err());
    }

    #[test]
    fn mutation_identities() {
        let g = Genome((0..50).map(|i| i as f64 * 0.1).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = Mutation::uniform(50, 0.5);
        assert_eq!(mutate(&g, 0.0, &params, &mut rng), g);
        let silent = Mutation {
            noise_scale: 0.0,
            reset_prob: 0.0,
            ..params
        };
        assert_eq!(mutate(&g, 1.0, &silent, &mut rng), g);
    }

    #[test]
    fn mutation_changes_something() {
        let g = Genome(vec![0.0; 3]);
        let params = Mutation::uniform(3, 0.5);
        for seed in 0..2000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_ne!(mutate(&g, 1.0, &params, &mut rng), g, "seed {seed}");
        }
    }

    #[test]
    fn reset_bounds_follow_layers() {
        let p = PolicyNet::zeros(4, &[16], 1);
        let m = Mutation::for_policy(&p);
        assert_eq!(m.reset_bounds.len(), p.mlp.param_count());
        assert_eq!(m.reset_bounds[0], 0.5);
        assert_eq!(*m.reset_bounds.last().unwrap(), 0.25);
    }

    #[test]
    fn last_slot_only_when_one_offspring() {
        let ranked: Vec<_> = (0..5).map(|i| individual(i as f64, i as f64 * 0.1)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let next = evolve_generation(&ranked, 4, 0.9, &Mutation::uniform(4, 0.5), &mut rng).unwrap();
        assert_eq!(next.len(), 5);
        assert_eq!(&next[..4], &ranked[..4]);
    }

    #[test]
    fn evolve_is_deterministic() {
        let ranked: Vec<_> = (0..6).map(|i| individual(i as f64, 0.5)).collect();
        let params = Mutation::uniform(4, 0.5);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            evolve_generation(&ranked, 2, 0.9, &params, &mut rng).unwrap()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn offspring_inherit_parent_multipliers() {
        let ranked: Vec<_> = (0..6).map(|i| individual(i as f64, i as f64 / 10.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let silent = Mutation {
            noise_scale: 0.0,
            reset_prob: 0.0,
            ..Mutation::uniform(4, 0.5)
        };
        let next = evolve_generation(&ranked, 1, 1.0, &silent, &mut rng).unwrap();
        for child in &next[1..] {
            // every genome coordinate is some parent's tag; the multiplier
            // belongs to one of the population's parents
            assert!(ranked.iter().any(|p| p.multiplier == child.multiplier));
            assert!(child.genome.0.iter().all(|x| (0..6).any(|i| *x == i as f64)));
        }
    }

    #[test]
    fn injection_examples() {
        let mut pop = vec![individual(0.0, 0.9), individual(1.0, 0.5)];
        let learner = Genome(vec![7.0; 4]);
        let lam = inject_learner(&mut pop, &learner, &[0.6, 0.8], 0.4, 0.1).unwrap();
        assert!((lam - 0.53).abs() < 1e-15);
        assert_eq!(pop[1].genome, learner);
        assert_eq!(pop[0].multiplier.value, 0.9);

        let lam = inject_learner(&mut pop, &learner, &[0.4, 0.4], 0.4, 0.1).unwrap();
        assert!((lam - 0.53).abs() < 1e-15);

        pop[1].multiplier.value = 0.01;
        assert_eq!(inject_learner(&mut pop, &learner, &[0.1], 0.4, 1.0).unwrap(), 0.0);
        assert!(inject_learner(&mut pop, &learner, &[], 0.4, 1.0).is_err());
    }
}
