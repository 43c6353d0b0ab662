//! Closed-form continuous-control tasks.
//!
//! Every task takes actions normalized to `[-1, 1]` per dimension (out of
//! range values are clipped) and rescales them internally.

mod mountain_car;
mod pendulum;
mod reacher;

pub use mountain_car::MountainCarContinuous;
pub use pendulum::Pendulum;
pub use reacher::Reacher2d;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_NAMES: [&str; 3] = ["pendulum", "reacher2d", "mountaincar-c"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Observation indices that carry velocities.
    pub velocity_indices: Vec<usize>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.velocity_indices.iter().any(|&i| i >= self.obs_dim) {
            return Err(Error::Config(format!(
                "{}: velocity index outside observation",
                self.name
            )));
        }
        let bounds_ok = self.action_low.len() == self.act_dim
            && self.action_high.len() == self.act_dim
            && self
                .action_low
                .iter()
                .zip(&self.action_high)
                .all(|(l, h)| l.is_finite() && h.is_finite() && l < h);
        if !bounds_ok {
            return Err(Error::Config(format!("{}: bad action bounds", self.name)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("EnvSpec serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True termination: the bootstrap value is zero.
    pub terminal: bool,
    /// Time-limit cutoff: the episode stops but the value is bootstrapped.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode with its initial state drawn from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Errors if the episode already ended.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Observation indices that carry velocities.
    fn velocity_mask(&self) -> &[usize] {
        &self.spec().velocity_indices
    }
}

/// Builds an environment from its registry name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "reacher2d" => Ok(Box::new(Reacher2d::new())),
        "mountaincar-c" => Ok(Box::new(MountainCarContinuous::new())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

pub fn env_spec(name: &str) -> Result<EnvSpec> {
    make_env(name).map(|e| e.spec().clone())
}

/// Episode bookkeeping shared by the tasks.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub started: bool,
    pub finished: bool,
}

impl EpisodeClock {
    pub fn reset(&mut self) {
        *self = Self {
            steps: 0,
            started: true,
            finished: false,
        };
    }

    pub fn check_can_step(&self, name: &str) -> Result<()> {
        if !self.started {
            return Err(Error::Contract(format!("{name}: step before reset")));
        }
        if self.finished {
            return Err(Error::Contract(format!("{name}: step after episode end without reset")));
        }
        Ok(())
    }

    /// Records a step; returns the truncation flag (only when not terminal).
    pub fn tick(&mut self, terminal: bool, limit: usize) -> bool {
        self.steps += 1;
        let truncated = !terminal && self.steps >= limit;
        self.finished = terminal || truncated;
        truncated
    }
}

pub(crate) fn clip_action(action: &[f64], dim: usize, name: &str) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::Dimension(format!(
            "{name}: action has {} entries, expected {dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::NonFinite(format!("{name} action")));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}
