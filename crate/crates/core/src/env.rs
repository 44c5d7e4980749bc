//! Deterministic constrained continuous-control environments.
//!
//! Both tasks charge the same per-step cost: the mean absolute (clipped)
//! action coordinate, so the episodic constraint of a trajectory is its
//! average applied torque and always lies in `[0, 1]`.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub step_cap: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    /// Point mass pushed towards a fixed goal at (5, 0).
    PointGoal,
    /// Torque-limited pendulum starting near the bottom.
    PendulumSwing,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_goal" => Ok(Self::PointGoal),
            "pendulum_swing" => Ok(Self::PendulumSwing),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PointGoal => "point_goal",
            Self::PendulumSwing => "pendulum_swing",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            Self::PointGoal => EnvSpec {
                obs_dim: 4,
                act_dim: 2,
                step_cap: 400,
                dt: 0.05,
            },
            Self::PendulumSwing => EnvSpec {
                obs_dim: 3,
                act_dim: 1,
                step_cap: 400,
                dt: 0.05,
            },
        }
    }
}

const GOAL: [f64; 2] = [5.0, 0.0];
const GOAL_RADIUS: f64 = 0.1;
const GOAL_BONUS: f64 = 10.0;
const GRAVITY: f64 = 9.81;
const MAX_SPEED: f64 = 8.0;

/// Physical state plus the step counter.
///
/// PointGoal stores `(x, y, vx, vy)`, PendulumSwing stores `(theta, theta_dot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub physics: Vec<f64>,
    pub step_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

/// One environment step, tagged with the multiplier of the actor that took it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub j_r: f64,
    pub j_c: f64,
    pub trajectories: Vec<Vec<Transition>>,
    pub lambda: f64,
}

impl EvalResult {
    pub fn steps(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }
}

/// Per-step cost: mean absolute action coordinate after clipping to `[-1, 1]`.
pub fn torque_cost(action: &[f64]) -> f64 {
    action.iter().map(|a| a.clamp(-1.0, 1.0).abs()).sum::<f64>() / action.len() as f64
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    theta - 2.0 * PI * ((theta - PI) / (2.0 * PI)).ceil()
}

/// An environment instance: a task plus its episode step cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Env {
    pub kind: EnvKind,
    pub step_cap: usize,
}

impl Env {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            step_cap: kind.spec().step_cap,
        }
    }

    pub fn with_step_cap(kind: EnvKind, step_cap: usize) -> Self {
        Self { kind, step_cap }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            step_cap: self.step_cap,
            ..self.kind.spec()
        }
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        let physics = match self.kind {
            EnvKind::PointGoal => vec![0.0; 4],
            EnvKind::PendulumSwing => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let theta = rng.random_range(PI - 0.1..=PI + 0.1);
                vec![theta, 0.0]
            }
        };
        EnvState {
            physics,
            step_count: 0,
        }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        match self.kind {
            EnvKind::PointGoal => state.physics.clone(),
            EnvKind::PendulumSwing => {
                let (theta, omega) = (state.physics[0], state.physics[1]);
                vec![theta.cos(), theta.sin(), omega]
            }
        }
    }

    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<StepOutcome> {
        let spec = self.spec();
        if action.len() != spec.act_dim {
            return Err(Error::Dimension {
                what: "action",
                expected: spec.act_dim,
                got: action.len(),
            });
        }
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let cost = torque_cost(&a);
        let dt = spec.dt;
        let step_count = state.step_count + 1;

        let (physics, reward, terminal) = match self.kind {
            EnvKind::PointGoal => {
                let s = &state.physics;
                let vx = 0.9 * s[2] + dt * a[0] * 10.0;
                let vy = 0.9 * s[3] + dt * a[1] * 10.0;
                let x = s[0] + dt * vx;
                let y = s[1] + dt * vy;
                let dist = ((x - GOAL[0]).powi(2) + (y - GOAL[1]).powi(2)).sqrt();
                let reached = dist < GOAL_RADIUS;
                let mut reward = -dist / 10.0;
                if reached {
                    reward += GOAL_BONUS;
                }
                (vec![x, y, vx, vy], reward, reached)
            }
            EnvKind::PendulumSwing => {
                let (theta, omega) = (state.physics[0], state.physics[1]);
                let torque = 2.0 * a[0];
                let reward = -(wrap_angle(theta).powi(2) + 0.1 * omega * omega + 0.001 * torque * torque);
                let accel = -(3.0 * GRAVITY / 2.0) * (theta + PI).sin() + 3.0 * torque;
                let omega = (omega + dt * accel).clamp(-MAX_SPEED, MAX_SPEED);
                let theta = theta + dt * omega;
                (vec![theta, omega], reward, false)
            }
        };

        Ok(StepOutcome {
            state: EnvState {
                physics,
                step_count,
            },
            reward,
            cost,
            done: terminal || step_count >= self.step_cap,
        })
    }

    /// Runs one episode from `reset(seed)`, choosing actions with `policy`.
    ///
    /// Stored actions are the clipped ones, and every transition carries `lambda`.
    pub fn rollout<F>(&self, seed: u64, lambda: f64, mut policy: F) -> Result<Vec<Transition>>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut state = self.reset(seed);
        let mut obs = self.observe(&state);
        let mut trajectory = Vec::new();
        loop {
            let action: Vec<f64> = policy(&obs).iter().map(|a| a.clamp(-1.0, 1.0)).collect();
            let out = self.step(&state, &action)?;
            let next_obs = self.observe(&out.state);
            trajectory.push(Transition {
                state: std::mem::replace(&mut obs, next_obs.clone()),
                action,
                next_state: next_obs,
                reward: out.reward,
                cost: out.cost,
                done: out.done,
                lambda,
            });
            state = out.state;
            if out.done {
                return Ok(trajectory);
            }
        }
    }

    /// Evaluates a policy over one rollout per seed.
    ///
    /// `j_r` is the mean undiscounted return; `j_c` is the mean over rollouts
    /// of each rollout's per-step average cost.
    pub fn evaluate<F>(&self, seeds: &[u64], lambda: f64, mut policy: F) -> Result<EvalResult>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        assert!(!seeds.is_empty(), "evaluate needs at least one rollout seed");
        let trajectories = seeds
            .iter()
            .map(|&seed| self.rollout(seed, lambda, &mut policy))
            .collect::<Result<Vec<_>>>()?;
        let j_r = running_mean(trajectories.iter().map(|t| t.iter().map(|tr| tr.reward).sum::<f64>()));
        let j_c = running_mean(trajectories.iter().map(|t| episodic_constraint(t)));
        Ok(EvalResult {
            j_r,
            j_c,
            trajectories,
            lambda,
        })
    }
}

/// Incremental mean; exact for constant sequences, so a policy applying a
/// constant torque of 0.4 reports exactly 0.4. Zero for an empty sequence.
pub fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (k + 1) as f64;
    }
    mean
}

/// Average per-step cost over one trajectory.
pub fn episodic_constraint(trajectory: &[Transition]) -> f64 {
    running_mean(trajectory.iter().map(|t| t.cost))
}

/// Writes a trajectory as CSV: `step,s0..,a0..,reward,cost,done`.
pub fn write_trajectory_csv<W: Write>(mut out: W, trajectory: &[Transition]) -> Result<()> {
    let (obs_dim, act_dim) = match trajectory.first() {
        Some(t) => (t.state.len(), t.action.len()),
        None => (0, 0),
    };
    let mut header = vec!["step".to_string()];
    header.extend((0..obs_dim).map(|i| format!("s{i}")));
    header.extend((0..act_dim).map(|i| format!("a{i}")));
    header.extend(["reward", "cost", "done"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for (step, t) in trajectory.iter().enumerate() {
        let mut row = vec![step.to_string()];
        row.extend(t.state.iter().map(f64::to_string));
        row.extend(t.action.iter().map(f64::to_string));
        row.push(t.reward.to_string());
        row.push(t.cost.to_string());
        row.push(u8::from(t.done).to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
