use rand::Rng;

use super::{clip_action, Env, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seeding::rng_from;

const DT: f64 = 0.05;
const MAX_SPEED: f64 = 2.0;
const GOAL_RADIUS: f64 = 0.05;
const GOAL_BONUS: f64 = 10.0;

/// Point mass in the plane steered towards a target by acceleration.
///
/// Observation `(p_x, p_y, v_x, v_y, t_x, t_y)`.
#[derive(Debug, Clone)]
pub struct Reacher2d {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    target: [f64; 2],
    clock: EpisodeClock,
}

impl Default for Reacher2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Reacher2d {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "reacher2d".into(),
                obs_dim: 6,
                act_dim: 2,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                velocity_indices: vec![2, 3],
                max_episode_steps: 300,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            target: [0.0; 2],
            clock: EpisodeClock::default(),
        }
    }

    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2], target: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.target = target;
        self.clock.reset();
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.target[0],
            self.target[1],
        ]
    }

    fn distance(&self) -> f64 {
        ((self.pos[0] - self.target[0]).powi(2) + (self.pos[1] - self.target[1]).powi(2)).sqrt()
    }
}

impl Env for Reacher2d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let mut draw = || [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let pos = draw();
        let target = draw();
        self.reset_to(pos, [0.0; 2], target)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.check_can_step(&self.spec.name)?;
        let a = clip_action(action, 2, &self.spec.name)?;
        for (i, ai) in a.iter().enumerate() {
            self.pos[i] += self.vel[i] * DT;
            self.vel[i] = (self.vel[i] + ai * DT).clamp(-MAX_SPEED, MAX_SPEED);
        }
        let dist = self.distance();
        let terminal = dist < GOAL_RADIUS;
        let mut reward = -dist - 0.01 * (a[0] * a[0] + a[1] * a[1]);
        if terminal {
            reward += GOAL_BONUS;
        }
        let truncated = self.clock.tick(terminal, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }
}
