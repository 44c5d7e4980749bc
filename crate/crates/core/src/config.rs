//! Experiment configuration.
//!
//! The on-disk format is flat: one `key = value` per line, `#` starts a
//! comment, blank lines are ignored. Every key that [`Config::set`] accepts
//! may appear; anything else is rejected so that typos surface immediately.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::harness::Variant;

/// Where the learner's multiplier update takes its episodic constraint from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerJcSource {
    /// The learner's own collection rollout of the current generation.
    Own,
    /// Mean of the generational constraint buffer.
    Generational,
}

impl FromStr for LearnerJcSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own" => Ok(Self::Own),
            "generational" => Ok(Self::Generational),
            other => Err(Error::config(
                "learner_jc_source",
                format!("expected `own` or `generational`, got `{other}`"),
            )),
        }
    }
}

impl LearnerJcSource {
    fn as_str(self) -> &'static str {
        match self {
            Self::Own => "own",
            Self::Generational => "generational",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub generations: usize,
    pub population_size: usize,
    pub elite_count: usize,
    pub mutation_prob: f64,
    pub sync_period: usize,
    pub tolerate_prob: f64,
    pub epsilon: f64,
    pub sac_alpha: f64,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub eta: f64,
    pub replay_capacity: usize,
    pub replay_batch: usize,
    pub constraint_capacity: usize,
    pub constraint_batch: usize,
    pub rollouts_per_eval: usize,
    pub env_name: String,
    pub variant_name: String,
    pub seed: u64,

    /// Hidden layer widths shared by actors and critics.
    pub hidden: Vec<usize>,
    /// Training stops after the generation in which this many environment
    /// steps have been consumed (whichever of this and `generations` is first).
    pub step_budget: u64,
    pub step_cap: usize,
    pub tau_soft: f64,
    pub learner_lambda_init: f64,
    /// Gradient steps per update round. One round is run per episode
    /// collected in a generation.
    pub updates_per_round: usize,
    /// Deterministic episodes used for each learner report row.
    pub report_episodes: usize,
    pub workers: usize,
    pub learner_jc_source: LearnerJcSource,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            generations: 1000,
            population_size: 10,
            elite_count: 1,
            mutation_prob: 0.9,
            sync_period: 1,
            tolerate_prob: 0.45,
            epsilon: 0.4,
            sac_alpha: 0.1,
            gamma: 0.99,
            lr_actor: 1e-4,
            lr_critic: 3e-4,
            eta: 1e-5,
            replay_capacity: 100_000,
            replay_batch: 256,
            constraint_capacity: 100,
            constraint_batch: 32,
            rollouts_per_eval: 1,
            env_name: "point_goal".to_string(),
            variant_name: "ecrl".to_string(),
            seed: 0,
            hidden: vec![256, 256],
            step_budget: 200_000,
            step_cap: 400,
            tau_soft: 0.005,
            learner_lambda_init: 0.001,
            updates_per_round: 1,
            report_episodes: 5,
            workers: 1,
            learner_jc_source: LearnerJcSource::Own,
        }
    }
}

/// Every key accepted by [`Config::set`], in serialization order.
pub const KEYS: &[&str] = &[
    "generations",
    "population_size",
    "elite_count",
    "mutation_prob",
    "sync_period",
    "tolerate_prob",
    "epsilon",
    "sac_alpha",
    "gamma",
    "lr_actor",
    "lr_critic",
    "eta",
    "replay_capacity",
    "replay_batch",
    "constraint_capacity",
    "constraint_batch",
    "rollouts_per_eval",
    "env_name",
    "variant_name",
    "seed",
    "hidden",
    "step_budget",
    "step_cap",
    "tau_soft",
    "learner_lambda_init",
    "updates_per_round",
    "report_episodes",
    "workers",
    "learner_jc_source",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

impl Config {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "generations" => self.generations = parse_num(key, value)?,
            "population_size" => self.population_size = parse_num(key, value)?,
            "elite_count" => self.elite_count = parse_num(key, value)?,
            "mutation_prob" => self.mutation_prob = parse_num(key, value)?,
            "sync_period" => self.sync_period = parse_num(key, value)?,
            "tolerate_prob" => self.tolerate_prob = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "sac_alpha" => self.sac_alpha = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "lr_actor" => self.lr_actor = parse_num(key, value)?,
            "lr_critic" => self.lr_critic = parse_num(key, value)?,
            "eta" => self.eta = parse_num(key, value)?,
            "replay_capacity" => self.replay_capacity = parse_num(key, value)?,
            "replay_batch" => self.replay_batch = parse_num(key, value)?,
            "constraint_capacity" => self.constraint_capacity = parse_num(key, value)?,
            "constraint_batch" => self.constraint_batch = parse_num(key, value)?,
            "rollouts_per_eval" => self.rollouts_per_eval = parse_num(key, value)?,
            "env_name" => self.env_name = value.to_string(),
            "variant_name" => self.variant_name = value.to_string(),
            "seed" => self.seed = parse_num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|w| parse_num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "step_budget" => self.step_budget = parse_num(key, value)?,
            "step_cap" => self.step_cap = parse_num(key, value)?,
            "tau_soft" => self.tau_soft = parse_num(key, value)?,
            "learner_lambda_init" => self.learner_lambda_init = parse_num(key, value)?,
            "updates_per_round" => self.updates_per_round = parse_num(key, value)?,
            "report_episodes" => self.report_episodes = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "learner_jc_source" => self.learner_jc_source = value.parse()?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "generations" => self.generations.to_string(),
            "population_size" => self.population_size.to_string(),
            "elite_count" => self.elite_count.to_string(),
            "mutation_prob" => self.mutation_prob.to_string(),
            "sync_period" => self.sync_period.to_string(),
            "tolerate_prob" => self.tolerate_prob.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "sac_alpha" => self.sac_alpha.to_string(),
            "gamma" => self.gamma.to_string(),
            "lr_actor" => self.lr_actor.to_string(),
            "lr_critic" => self.lr_critic.to_string(),
            "eta" => self.eta.to_string(),
            "replay_capacity" => self.replay_capacity.to_string(),
            "replay_batch" => self.replay_batch.to_string(),
            "constraint_capacity" => self.constraint_capacity.to_string(),
            "constraint_batch" => self.constraint_batch.to_string(),
            "rollouts_per_eval" => self.rollouts_per_eval.to_string(),
            "env_name" => self.env_name.clone(),
            "variant_name" => self.variant_name.clone(),
            "seed" => self.seed.to_string(),
            "hidden" => self
                .hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "step_budget" => self.step_budget.to_string(),
            "step_cap" => self.step_cap.to_string(),
            "tau_soft" => self.tau_soft.to_string(),
            "learner_lambda_init" => self.learner_lambda_init.to_string(),
            "updates_per_round" => self.updates_per_round.to_string(),
            "report_episodes" => self.report_episodes.to_string(),
            "workers" => self.workers.to_string(),
            "learner_jc_source" => self.learner_jc_source.as_str().to_string(),
            _ => unreachable!("get called with unknown key {key}"),
        }
    }

    /// Parses the `key = value` text format on top of the defaults.
    /// The result is not validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            config.set(key.trim(), value)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes every field; `parse(to_text())` yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    /// Applies `--key value` pairs (leading dashes optional).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut it = args.iter();
        while let Some(key) = it.next() {
            let key = key.as_ref().trim_start_matches('-');
            let value = it
                .next()
                .ok_or_else(|| Error::config(key, "override is missing a value"))?;
            self.set(&key.replace('-', "_"), value.as_ref())?;
        }
        Ok(())
    }

    /// Checks every invariant, reporting the first violation by field name.
    pub fn validate(self) -> Result<Self> {
        fn require(ok: bool, field: &str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, reason))
            }
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();

        require(self.generations > 0, "generations", "must be positive")?;
        require(self.population_size > 0, "population_size", "must be positive")?;
        require(
            self.elite_count < self.population_size,
            "elite_count",
            "must be smaller than population_size",
        )?;
        require(
            (0.0..=1.0).contains(&self.mutation_prob),
            "mutation_prob",
            "must lie in [0, 1]",
        )?;
        require(self.sync_period > 0, "sync_period", "must be positive")?;
        require(
            self.tolerate_prob > 0.0 && self.tolerate_prob < 1.0,
            "tolerate_prob",
            "must lie in the open interval (0, 1)",
        )?;
        require(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon",
            "must be non-negative",
        )?;
        require(positive(self.sac_alpha), "sac_alpha", "must be positive")?;
        require((0.0..1.0).contains(&self.gamma), "gamma", "must lie in [0, 1)")?;
        require(positive(self.lr_actor), "lr_actor", "must be positive")?;
        require(positive(self.lr_critic), "lr_critic", "must be positive")?;
        require(positive(self.eta), "eta", "must be positive")?;
        require(self.replay_capacity > 0, "replay_capacity", "must be positive")?;
        require(self.replay_batch > 0, "replay_batch", "must be positive")?;
        require(
            self.replay_batch <= self.replay_capacity,
            "replay_batch",
            "must not exceed replay_capacity",
        )?;
        require(self.constraint_capacity > 0, "constraint_capacity", "must be positive")?;
        require(self.constraint_batch > 0, "constraint_batch", "must be positive")?;
        require(
            self.constraint_batch <= self.constraint_capacity,
            "constraint_batch",
            "must not exceed constraint_capacity",
        )?;
        require(self.rollouts_per_eval > 0, "rollouts_per_eval", "must be positive")?;
        self.env_name.parse::<EnvKind>().map_err(|_| {
            Error::config("env_name", format!("unknown environment `{}`", self.env_name))
        })?;
        self.variant_name.parse::<Variant>().map_err(|_| {
            Error::config("variant_name", format!("unknown variant `{}`", self.variant_name))
        })?;
        require(
            !self.hidden.is_empty() && self.hidden.iter().all(|&w| w > 0),
            "hidden",
            "needs at least one positive width",
        )?;
        require(self.step_cap > 0, "step_cap", "must be positive")?;
        require(
            self.tau_soft >= 0.0 && self.tau_soft <= 1.0,
            "tau_soft",
            "must lie in [0, 1]",
        )?;
        require(
            self.learner_lambda_init >= 0.0 && self.learner_lambda_init.is_finite(),
            "learner_lambda_init",
            "must be non-negative",
        )?;
        require(self.report_episodes > 0, "report_episodes", "must be positive")?;
        require(self.workers > 0, "workers", "must be positive")?;
        Ok(self)
    }

    pub fn env(&self) -> EnvKind {
        self.env_name.parse().expect("validated env_name")
    }

    pub fn variant(&self) -> Variant {
        self.variant_name.parse().expect("validated variant_name")
    }
}
