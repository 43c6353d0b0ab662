use rand::Rng;

use super::{clip_action, Env, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seeding::rng_from;

const MIN_POS: f64 = -1.2;
const MAX_POS: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POS: f64 = 0.45;
const POWER: f64 = 0.0015;

/// Continuous mountain car. Observation `(position, velocity)`.
#[derive(Debug, Clone)]
pub struct MountainCarContinuous {
    spec: EnvSpec,
    pos: f64,
    vel: f64,
    clock: EpisodeClock,
}

impl Default for MountainCarContinuous {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCarContinuous {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "mountaincar-c".into(),
                obs_dim: 2,
                act_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                velocity_indices: vec![1],
                max_episode_steps: 999,
            },
            pos: 0.0,
            vel: 0.0,
            clock: EpisodeClock::default(),
        }
    }

    pub fn reset_to(&mut self, pos: f64, vel: f64) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.clock.reset();
        vec![self.pos, self.vel]
    }
}

impl Env for MountainCarContinuous {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let pos = rng.random_range(-0.6..-0.4);
        self.reset_to(pos, 0.0)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.check_can_step(&self.spec.name)?;
        let force = clip_action(action, 1, &self.spec.name)?[0];
        self.vel += force * POWER - 0.0025 * (3.0 * self.pos).cos();
        self.vel = self.vel.clamp(-MAX_SPEED, MAX_SPEED);
        self.pos = (self.pos + self.vel).clamp(MIN_POS, MAX_POS);
        if self.pos == MIN_POS && self.vel < 0.0 {
            self.vel = 0.0;
        }
        let terminal = self.pos >= GOAL_POS;
        let mut reward = -0.1 * force * force;
        if terminal {
            reward += 100.0;
        }
        let truncated = self.clock.tick(terminal, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: vec![self.pos, self.vel],
            reward,
            terminal,
            truncated,
        })
    }
}
