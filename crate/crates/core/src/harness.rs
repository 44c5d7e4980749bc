//! The training loop, the baseline and ablation variants, and run logging.
//!
//! One generation runs, in order: population evaluation (transitions into the
//! replay buffer, episodic constraints into the constraint buffers), ranking,
//! variation of the non-elite slots, the learner's own collection rollout,
//! gradient updates, the learner multiplier step, periodic injection of the
//! learner into the lowest-ranked slot, and finally a deterministic report
//! evaluation of the learner.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::buffers::{constraint_buffer, replay_buffer, ConstraintBuffer, GenerationalConstraintBuffer, ReplayBuffer};
use crate::checkpoint::{Checkpoint, Entry};
use crate::config::{Config, LearnerJcSource};
use crate::ea::{self, EvalSummary, Individual, Mutation};
use crate::env::{Env, EvalResult};
use crate::error::{Error, Result};
use crate::learner::{LambdaMode, LearnerParams, SacLearner};
use crate::multiplier::MultiplierState;
use crate::net::{Genome, PolicyNet};

/// Default fixed multiplier of `sr_shape`.
pub const SR_SHAPE_LAMBDA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Ecrl,
    Erl,
    ErlShape(f64),
    Rcpo,
    RcpoErl,
    Sr,
    SrShape(f64),
    BcOnly,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownVariant(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<f64>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        if arg.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
            return Err(unknown());
        }
        match (name.to_ascii_lowercase().replace('-', "_").as_str(), arg) {
            ("ecrl", None) => Ok(Self::Ecrl),
            ("erl", None) => Ok(Self::Erl),
            ("erl_shape", Some(l)) => Ok(Self::ErlShape(l)),
            ("rcpo", None) => Ok(Self::Rcpo),
            ("rcpo_erl", None) => Ok(Self::RcpoErl),
            ("sr", None) => Ok(Self::Sr),
            ("sr_shape", l) => Ok(Self::SrShape(l.unwrap_or(SR_SHAPE_LAMBDA))),
            ("bc_only", None) => Ok(Self::BcOnly),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ecrl => f.write_str("ecrl"),
            Self::Erl => f.write_str("erl"),
            Self::ErlShape(l) => write!(f, "erl_shape:{l}"),
            Self::Rcpo => f.write_str("rcpo"),
            Self::RcpoErl => f.write_str("rcpo_erl"),
            Self::Sr => f.write_str("sr"),
            Self::SrShape(l) => write!(f, "sr_shape:{l}"),
            Self::BcOnly => f.write_str("bc_only"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ranking {
    /// Stochastic ranking with the configured tolerate probability.
    Stochastic,
    /// Sort by reward only.
    RewardOnly,
}

/// Multiplier attached to the transitions of population actors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopulationLambda {
    Zero,
    Fixed(f64),
    /// Each individual's own evolving multiplier.
    Own,
    /// The learner's multiplier at sampling time.
    Learner,
}

/// Which parts of the algorithm a variant switches on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wiring {
    pub population: bool,
    pub ranking: Ranking,
    pub target_lambda: LambdaMode,
    pub population_lambda: PopulationLambda,
    /// Learner multiplier follows projected dual ascent on its own constraint.
    pub learner_multiplier: bool,
    /// Constraint buffer feeds the injected individual's multiplier update.
    pub constraint_buffer: bool,
}

impl Variant {
    pub fn wiring(self) -> Wiring {
        use PopulationLambda as P;
        let w = |population, ranking, target_lambda, population_lambda, learner_multiplier, constraint_buffer| Wiring {
            population,
            ranking,
            target_lambda,
            population_lambda,
            learner_multiplier,
            constraint_buffer,
        };
        match self {
            Self::Ecrl => w(true, Ranking::Stochastic, LambdaMode::PerTransition, P::Own, true, true),
            Self::Erl => w(true, Ranking::RewardOnly, LambdaMode::Unshaped, P::Zero, false, false),
            Self::ErlShape(l) => w(true, Ranking::RewardOnly, LambdaMode::Fixed(l), P::Fixed(l), false, false),
            Self::Rcpo => w(false, Ranking::RewardOnly, LambdaMode::Current, P::Learner, true, false),
            Self::RcpoErl => w(true, Ranking::RewardOnly, LambdaMode::Current, P::Learner, true, false),
            Self::Sr => w(true, Ranking::Stochastic, LambdaMode::Unshaped, P::Zero, false, false),
            Self::SrShape(l) => w(true, Ranking::Stochastic, LambdaMode::Fixed(l), P::Fixed(l), false, false),
            Self::BcOnly => w(true, Ranking::RewardOnly, LambdaMode::PerTransition, P::Own, true, true),
        }
    }

    /// Name safe for file paths (`:` replaced).
    pub fn file_stem(self) -> String {
        self.to_string().replace(':', "-")
    }
}

pub const CSV_HEADER: &str =
    "gen,steps,pop_jr_mean,pop_jr_max,pop_jc_mean,learner_jr,learner_jc,lambda_learner,lambda_pop_mean,feasible_count,wall_s";

/// One generation of the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub gen: usize,
    pub steps: u64,
    pub pop_jr_mean: f64,
    pub pop_jr_max: f64,
    pub pop_jc_mean: f64,
    pub learner_jr: f64,
    pub learner_jc: f64,
    pub lambda_learner: f64,
    pub lambda_pop_mean: f64,
    pub feasible_count: usize,
    pub wall_s: f64,
    /// Gradient steps taken this generation.
    pub gradient_steps: usize,
    /// Mean of the generational constraint buffer before it was emptied.
    pub generational_jc_mean: f64,
    pub injected: bool,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.gen,
            self.steps,
            self.pop_jr_mean,
            self.pop_jr_max,
            self.pop_jc_mean,
            self.learner_jr,
            self.learner_jc,
            self.lambda_learner,
            self.lambda_pop_mean,
            self.feasible_count,
            self.wall_s
        )
    }

    /// Equality on every column except wall time.
    pub fn same_outcome(&self, other: &LogRow) -> bool {
        let bits = |r: &LogRow| {
            [
                r.pop_jr_mean,
                r.pop_jr_max,
                r.pop_jc_mean,
                r.learner_jr,
                r.learner_jc,
                r.lambda_learner,
                r.lambda_pop_mean,
                r.generational_jc_mean,
            ]
            .map(f64::to_bits)
        };
        self.gen == other.gen
            && self.steps == other.steps
            && self.feasible_count == other.feasible_count
            && self.gradient_steps == other.gradient_steps
            && self.injected == other.injected
            && bits(self) == bits(other)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.to_csv())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn same_outcome(&self, other: &RunLog) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_outcome(b))
    }

    pub fn total_steps(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.steps)
    }
}

/// SplitMix64 finalizer, used to derive independent episode seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn episode_seed(run_seed: u64, domain: u64, gen: usize, slot: usize, rollout: usize) -> u64 {
    mix(mix(mix(mix(run_seed ^ (domain << 56)) ^ gen as u64) ^ slot as u64) ^ rollout as u64)
}

const DOMAIN_POPULATION: u64 = 1;
const DOMAIN_LEARNER: u64 = 2;
const DOMAIN_REPORT: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-generation facts recorded for tests and diagnostics.
#[derive(Debug, Clone, Default)]
pub struct GenerationTrace {
    /// Rank order of the evaluated population (indices into the old population).
    pub order: Vec<usize>,
    pub ranked_genomes: Vec<Genome>,
    pub penalties: Vec<f64>,
    pub generational_len_at_start: usize,
    pub injected: bool,
    /// Multipliers attached to the transitions stored this generation, per episode.
    pub stored_lambdas: Vec<f64>,
    /// Multiplier each population actor had when it was evaluated.
    pub actor_lambdas: Vec<f64>,
    pub trajectory_steps: u64,
}

/// Mutable state of one training run.
pub struct Trainer {
    pub config: Config,
    pub variant: Variant,
    pub wiring: Wiring,
    pub env: Env,
    pub learner: SacLearner,
    pub population: Vec<Individual>,
    pub replay: ReplayBuffer,
    pub constraints: ConstraintBuffer,
    pub generational: GenerationalConstraintBuffer,
    pub generation: usize,
    pub steps: u64,
    pub log: RunLog,
    pub last_trace: GenerationTrace,
    /// Top individual of the most recent stochastic ranking.
    pub best: Option<Individual>,
    template: PolicyNet,
    mutation: Mutation,
    rng_rank: ChaCha8Rng,
    rng_vary: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
    rng_explore: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        let config = config.validate()?;
        let variant = config.variant();
        let wiring = variant.wiring();
        let env = Env::with_step_cap(config.env(), config.step_cap);
        let spec = env.spec();

        let mut rng_init = stream(config.seed, 0);
        let learner = SacLearner::new(
            spec.obs_dim,
            spec.act_dim,
            &LearnerParams {
                hidden: config.hidden.clone(),
                alpha: config.sac_alpha,
                gamma: config.gamma,
                tau_soft: config.tau_soft,
                lr_actor: config.lr_actor,
                lr_critic: config.lr_critic,
                lambda_init: config.learner_lambda_init,
                eta: config.eta,
                lambda_mode: wiring.target_lambda,
            },
            &mut rng_init,
        );
        let template = learner.policy.clone();
        let population = if wiring.population {
            (0..config.population_size)
                .map(|_| {
                    let genome = PolicyNet::new(spec.obs_dim, &config.hidden, spec.act_dim, &mut rng_init).flatten();
                    let value = match wiring.population_lambda {
                        PopulationLambda::Own => ea::open_unit(&mut rng_init),
                        PopulationLambda::Fixed(l) => l,
                        PopulationLambda::Zero | PopulationLambda::Learner => 0.0,
                    };
                    Individual {
                        genome,
                        multiplier: MultiplierState::new(value, config.eta),
                        last_eval: None,
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| Error::config("workers", e.to_string()))?,
            )
        } else {
            None
        };

        Ok(Self {
            mutation: Mutation::for_policy(&template),
            replay: replay_buffer(config.replay_capacity),
            constraints: constraint_buffer(config.constraint_capacity),
            generational: GenerationalConstraintBuffer::default(),
            rng_rank: stream(config.seed, 1),
            rng_vary: stream(config.seed, 2),
            rng_sample: stream(config.seed, 3),
            rng_explore: stream(config.seed, 4),
            generation: 0,
            steps: 0,
            log: RunLog::default(),
            last_trace: GenerationTrace::default(),
            best: None,
            config,
            variant,
            wiring,
            env,
            learner,
            population,
            template,
            pool,
        })
    }

    fn actor_lambda(&self, individual: &Individual) -> f64 {
        match self.wiring.population_lambda {
            PopulationLambda::Zero => 0.0,
            PopulationLambda::Fixed(l) => l,
            PopulationLambda::Own => individual.multiplier.value,
            PopulationLambda::Learner => self.learner.multiplier.value,
        }
    }

    fn evaluate_population(&self) -> Result<Vec<EvalResult>> {
        let gen = self.generation;
        let eval_one = |(slot, ind): (usize, &Individual)| -> Result<EvalResult> {
            let policy = self.template.unflatten(&ind.genome)?;
            let seeds: Vec<u64> = (0..self.config.rollouts_per_eval)
                .map(|r| episode_seed(self.config.seed, DOMAIN_POPULATION, gen, slot, r))
                .collect();
            self.env.evaluate(&seeds, self.actor_lambda(ind), |obs| policy.act(obs))
        };
        match &self.pool {
            Some(pool) => pool.install(|| self.population.par_iter().enumerate().map(eval_one).collect()),
            None => self.population.iter().enumerate().map(eval_one).collect(),
        }
    }

    fn penalty_of(&self, j_c: f64) -> f64 {
        ea::penalty(&[j_c], &[self.config.epsilon]).expect("single constraint")
    }

    /// Deterministic evaluation of the learner on fresh seeds.
    pub fn report_learner(&self) -> Result<EvalResult> {
        let seeds: Vec<u64> = (0..self.config.report_episodes)
            .map(|r| episode_seed(self.config.seed, DOMAIN_REPORT, self.generation, 0, r))
            .collect();
        let policy = &self.learner.policy;
        self.env.evaluate(&seeds, self.learner.multiplier.value, |obs| policy.act(obs))
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.generations || self.steps >= self.config.step_budget
    }

    /// Runs one generation and appends its log row.
    pub fn step_generation(&mut self) -> Result<&LogRow> {
        let gen = self.generation + 1;
        self.run_generation().map_err(|e| Error::Generation {
            generation: gen,
            source: Box::new(e),
        })?;
        Ok(self.log.rows.last().expect("row just pushed"))
    }

    fn run_generation(&mut self) -> Result<()> {
        let started = Instant::now();
        self.generation += 1;
        let gen = self.generation;
        let mut trace = GenerationTrace {
            generational_len_at_start: self.generational.len(),
            ..GenerationTrace::default()
        };
        assert!(self.generational.is_empty(), "generational constraint buffer not emptied");
        let mut episodes = 0usize;

        // Population evaluation and storage.
        let evals = if self.wiring.population {
            self.evaluate_population()?
        } else {
            Vec::new()
        };
        let mut pop_stats = Vec::with_capacity(evals.len());
        for (ind, ev) in self.population.iter_mut().zip(evals) {
            trace.actor_lambdas.push(ev.lambda);
            episodes += ev.trajectories.len();
            let steps = ev.steps() as u64;
            self.steps += steps;
            trace.trajectory_steps += steps;
            for trajectory in ev.trajectories {
                trace.stored_lambdas.extend(trajectory.first().map(|t| t.lambda));
                self.replay.extend(trajectory);
            }
            if self.wiring.constraint_buffer {
                self.constraints.push(ev.j_c);
            }
            self.generational.push(ev.j_c);
            let summary = EvalSummary { j_r: ev.j_r, j_c: ev.j_c };
            ind.last_eval = Some(summary);
            pop_stats.push(summary);
        }

        // Ranking and variation.
        if self.wiring.population {
            let scored: Vec<(f64, f64)> = pop_stats.iter().map(|s| (s.j_r, self.penalty_of(s.j_c))).collect();
            let p_f = match self.wiring.ranking {
                Ranking::Stochastic => self.config.tolerate_prob,
                Ranking::RewardOnly => 1.0,
            };
            let order = ea::stochastic_rank(&scored, p_f, &mut self.rng_rank);
            let ranked: Vec<Individual> = order.iter().map(|&i| self.population[i].clone()).collect();
            self.best = Some(ranked[0].clone());
            trace.penalties = scored.iter().map(|s| s.1).collect();
            trace.ranked_genomes = ranked.iter().map(|i| i.genome.clone()).collect();
            trace.order = order;
            self.population = ea::evolve_generation(
                &ranked,
                self.config.elite_count,
                self.config.mutation_prob,
                &self.mutation,
                &mut self.rng_vary,
            )?;
        }

        // Learner's own collection rollouts (stochastic policy).
        let learner_lambda = self.learner.transition_lambda();
        let seeds: Vec<u64> = (0..self.config.rollouts_per_eval)
            .map(|r| episode_seed(self.config.seed, DOMAIN_LEARNER, gen, 0, r))
            .collect();
        let collected = {
            let learner = &self.learner;
            let rng = &mut self.rng_explore;
            self.env.evaluate(&seeds, learner_lambda, |obs| learner.explore(obs, rng))?
        };
        episodes += collected.trajectories.len();
        let learner_steps = collected.steps() as u64;
        self.steps += learner_steps;
        trace.trajectory_steps += learner_steps;
        let learner_jc = collected.j_c;
        for trajectory in collected.trajectories {
            trace.stored_lambdas.extend(trajectory.first().map(|t| t.lambda));
            self.replay.extend(trajectory);
        }
        if self.wiring.constraint_buffer {
            self.constraints.push(learner_jc);
        }
        self.generational.push(learner_jc);

        // Gradient updates, one round per episode collected.
        let mut gradient_steps = 0;
        if self.replay.len() >= self.config.replay_batch {
            for _ in 0..episodes * self.config.updates_per_round {
                let batch = self.replay.sample(self.config.replay_batch, &mut self.rng_sample)?;
                self.learner.update(&batch, &mut self.rng_sample)?;
                gradient_steps += 1;
            }
        }

        if self.wiring.learner_multiplier {
            let j_c = match self.config.learner_jc_source {
                LearnerJcSource::Own => learner_jc,
                LearnerJcSource::Generational => self.generational.mean().unwrap_or(learner_jc),
            };
            self.learner.update_multiplier(j_c, self.config.epsilon);
        }

        // Periodic injection into the lowest-ranked slot.
        if self.wiring.population && gen % self.config.sync_period == 0 {
            let learner_genome = self.learner.policy.flatten();
            if self.wiring.constraint_buffer {
                let batch: Vec<f64> = self
                    .constraints
                    .sample(self.config.constraint_batch, &mut self.rng_sample)?
                    .into_iter()
                    .copied()
                    .collect();
                ea::inject_learner(
                    &mut self.population,
                    &learner_genome,
                    &batch,
                    self.config.epsilon,
                    self.config.eta,
                )?;
            } else {
                let slot = self.population.last_mut().expect("non-empty population");
                slot.genome = learner_genome;
                slot.last_eval = None;
            }
            trace.injected = true;
        }

        let report = self.report_learner()?;
        let n = pop_stats.len() as f64;
        let mean_or_nan = |xs: &mut dyn Iterator<Item = f64>| if n > 0.0 { xs.sum::<f64>() / n } else { f64::NAN };
        let row = LogRow {
            gen,
            steps: self.steps,
            pop_jr_mean: mean_or_nan(&mut pop_stats.iter().map(|s| s.j_r)),
            pop_jr_max: pop_stats.iter().map(|s| s.j_r).fold(f64::NAN, f64::max),
            pop_jc_mean: mean_or_nan(&mut pop_stats.iter().map(|s| s.j_c)),
            learner_jr: report.j_r,
            learner_jc: report.j_c,
            lambda_learner: self.learner.multiplier.value,
            lambda_pop_mean: if self.population.is_empty() {
                f64::NAN
            } else {
                self.population.iter().map(|i| i.multiplier.value).sum::<f64>() / self.population.len() as f64
            },
            feasible_count: pop_stats.iter().filter(|s| s.j_c <= self.config.epsilon).count(),
            wall_s: started.elapsed().as_secs_f64(),
            gradient_steps,
            generational_jc_mean: self.generational.mean().unwrap_or(f64::NAN),
            injected: trace.injected,
        };
        self.generational.clear();
        self.last_trace = trace;
        self.log.rows.push(row);
        Ok(())
    }

    /// Runs until the generation count or step budget is exhausted.
    pub fn run(&mut self) -> Result<&RunLog> {
        while !self.is_finished() {
            self.step_generation()?;
        }
        Ok(&self.log)
    }

    /// Writes the learner and best-individual checkpoints into `dir`.
    pub fn save_checkpoints(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.learner.to_checkpoint().save(&dir.join("learner.ckpt"))?;
        if let Some(best) = &self.best {
            let mut ck = Checkpoint::default();
            let policy = self.template.unflatten(&best.genome)?;
            ck.push("policy", Entry::Net(policy.mlp));
            ck.push("lambda", Entry::Scalar(best.multiplier.value));
            ck.save(&dir.join("best.ckpt"))?;
        }
        Ok(())
    }
}

/// Trains one run to completion.
pub fn train(config: Config) -> Result<(RunLog, Trainer)> {
    let mut trainer = Trainer::new(config)?;
    trainer.run()?;
    Ok((trainer.log.clone(), trainer))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub variant: String,
    pub seed: u64,
    pub status: String,
    pub csv_path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.splitn(4, ',').collect();
            match fields.as_slice() {
                [variant, seed, status, csv] => Ok(ManifestEntry {
                    variant: variant.to_string(),
                    seed: seed
                        .parse()
                        .map_err(|_| Error::config("manifest", format!("bad seed in `{line}`")))?,
                    status: status.to_string(),
                    csv_path: PathBuf::from(csv),
                }),
                _ => Err(Error::config("manifest", format!("malformed line `{line}`"))),
            }
        })
        .collect()
}

fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.variant, e.seed, e.status, e.csv_path.display()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Trains every (variant, seed) pair into `out_dir`, one CSV per run, and
/// writes `manifest.csv`. Runs already marked `ok` with an existing CSV are
/// skipped. Failed runs are recorded and do not stop the others. Up to
/// `parallel` runs execute concurrently.
pub fn run_experiment_matrix(
    base: &Config,
    variants: &[Variant],
    seeds: &[u64],
    out_dir: &Path,
    parallel: usize,
) -> Result<Vec<ManifestEntry>> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    std::fs::create_dir_all(out_dir)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let previous = if manifest_path.exists() {
        read_manifest(&manifest_path)?
    } else {
        Vec::new()
    };

    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|v| seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let run_job = |&(variant, seed): &(Variant, u64)| -> ManifestEntry {
        let csv_path = out_dir.join(format!("{}_seed{seed}.csv", variant.file_stem()));
        let done = previous.iter().any(|e| {
            e.variant == variant.to_string() && e.seed == seed && e.status == "ok" && e.csv_path.exists()
        });
        let status = if done {
            "ok".to_string()
        } else {
            let mut config = base.clone();
            config.variant_name = variant.to_string();
            config.seed = seed;
            config.workers = 1;
            match train(config).and_then(|(log, _)| log.save_csv(&csv_path)) {
                Ok(()) => "ok".to_string(),
                Err(e) => format!("failed: {}", e.to_string().replace([',', '\n'], ";")),
            }
        };
        ManifestEntry {
            variant: variant.to_string(),
            seed,
            status,
            csv_path,
        }
    };
    let entries: Vec<ManifestEntry> = if parallel > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(|| jobs.par_iter().map(run_job).collect())
    } else {
        jobs.iter().map(run_job).collect()
    };
    write_manifest(&manifest_path, &entries)?;
    Ok(entries)
}

/// Parses a RunLog CSV written by [`RunLog::write_csv`] into named columns.
pub fn read_runlog_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::config("runlog", format!("unexpected header in {}", path.display())));
    }
    let names: Vec<&str> = header.split(',').collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        for (col, field) in columns.iter_mut().zip(line.split(',')) {
            col.push(
                field
                    .parse()
                    .map_err(|_| Error::config("runlog", format!("bad value `{field}`")))?,
            );
        }
    }
    Ok(names.into_iter().map(String::from).zip(columns).collect())
}

/// Mean/min/max of one metric across seeds, per generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantCurves {
    pub variant: String,
    pub seeds: usize,
    /// Metric name and band; generations are truncated to the shortest run.
    pub metrics: Vec<(String, Band)>,
}

/// Aggregates the successful runs of a manifest per variant.
pub fn aggregate(entries: &[ManifestEntry]) -> Result<Vec<VariantCurves>> {
    let mut variants: Vec<String> = Vec::new();
    for e in entries {
        if !variants.contains(&e.variant) {
            variants.push(e.variant.clone());
        }
    }
    let mut out = Vec::new();
    for variant in variants {
        let runs = entries
            .iter()
            .filter(|e| e.variant == variant && e.status == "ok")
            .map(|e| read_runlog_columns(&e.csv_path))
            .collect::<Result<Vec<_>>>()?;
        if runs.is_empty() {
            continue;
        }
        let len = runs.iter().map(|r| r[0].1.len()).min().unwrap_or(0);
        let metrics = runs[0]
            .iter()
            .enumerate()
            .map(|(m, (name, _))| {
                let mut band = Band {
                    mean: Vec::with_capacity(len),
                    min: Vec::with_capacity(len),
                    max: Vec::with_capacity(len),
                };
                for g in 0..len {
                    let values: Vec<f64> = runs.iter().map(|r| r[m].1[g]).collect();
                    band.mean.push(values.iter().sum::<f64>() / values.len() as f64);
                    band.min.push(values.iter().copied().fold(f64::INFINITY, f64::min));
                    band.max.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                }
                (name.clone(), band)
            })
            .collect();
        out.push(VariantCurves {
            variant,
            seeds: runs.len(),
            metrics,
        });
    }
    Ok(out)
}

/// Writes `variant,gen,metric,mean,min,max` rows.
pub fn write_aggregate<W: Write>(mut out: W, curves: &[VariantCurves]) -> Result<()> {
    writeln!(out, "variant,gen,metric,mean,min,max")?;
    for c in curves {
        let gens = &c.metrics.iter().find(|(n, _)| n == "gen").expect("gen column").1.mean;
        for (name, band) in c.metrics.iter().filter(|(n, _)| n != "gen") {
            for (g, gen) in gens.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.variant, gen, name, band.mean[g], band.min[g], band.max[g]
                )?;
            }
        }
    }
    Ok(())
}
