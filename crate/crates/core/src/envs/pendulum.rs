use std::f64::consts::PI;

use rand::Rng;

use super::{clip_action, Env, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seeding::rng_from;

const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;

/// Wraps an angle into `[-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid maps +π to −π; keep the sign of the input there.
    if w == -PI && theta > 0.0 {
        PI
    } else {
        w
    }
}

/// Inverted-pendulum swing-up. `θ = 0` is upright.
///
/// Observation `(cos θ, sin θ, θ̇)`; action `a ∈ [-1, 1]` is torque `2a`.
/// The reward is the negative quadratic cost of the state before the step.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                obs_dim: 3,
                act_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                velocity_indices: vec![2],
                max_episode_steps: 200,
            },
            theta: 0.0,
            theta_dot: 0.0,
            clock: EpisodeClock::default(),
        }
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.clock.reset();
        self.observe()
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.check_can_step(&self.spec.name)?;
        let a = clip_action(action, 1, &self.spec.name)?;
        let torque = MAX_TORQUE * a[0];
        let angle = wrap_angle(self.theta);
        let cost = angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque;

        let accel = 3.0 * G / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * torque;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;

        let truncated = self.clock.tick(false, self.spec.max_episode_steps);
        Ok(StepResult {
            observation: self.observe(),
            reward: -cost,
            terminal: false,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut env = Pendulum::new();
        let a = env.reset(42);
        let b = env.reset(42);
        assert_eq!(a, b);
        assert_ne!(a, env.reset(43));
    }

    #[test]
    fn initial_states_lie_on_unit_circle_and_in_range() {
        let mut env = Pendulum::new();
        for seed in 0..1000 {
            let obs = env.reset(seed);
            assert!((obs[0] * obs[0] + obs[1] * obs[1] - 1.0).abs() < 1e-12);
            let (theta, theta_dot) = env.state();
            assert!((-PI..PI).contains(&theta));
            assert!((-1.0..1.0).contains(&theta_dot));
        }
    }

    #[test]
    fn upright_rest_is_equilibrium() {
        let mut env = Pendulum::new();
        env.reset_to(0.0, 0.0);
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(env.state(), (0.0, 0.0));
    }

    #[test]
    fn hanging_rest_costs_pi_squared() {
        let mut env = Pendulum::new();
        env.reset_to(PI, 0.0);
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(r.reward, -PI * PI);
        // sin(π) is not exactly zero in floating point.
        assert!(env.state().1.abs() < 1e-14);
    }

    #[test]
    fn one_euler_step_from_horizontal() {
        let mut env = Pendulum::new();
        env.reset_to(PI / 2.0, 0.0);
        env.step(&[0.0]).unwrap();
        let (theta, theta_dot) = env.state();
        assert!((theta_dot - 0.75).abs() < 1e-15);
        assert!((theta - (PI / 2.0 + 0.05 * 0.75)).abs() < 1e-15);
    }

    #[test]
    fn action_is_clipped() {
        let mut a = Pendulum::new();
        let mut b = Pendulum::new();
        a.reset_to(0.3, 0.1);
        b.reset_to(0.3, 0.1);
        assert_eq!(a.step(&[5.0]).unwrap(), b.step(&[1.0]).unwrap());
    }

    #[test]
    fn truncates_at_200() {
        let mut env = Pendulum::new();
        env.reset(0);
        for i in 1..=200 {
            let r = env.step(&[0.0]).unwrap();
            assert!(!r.terminal);
            assert_eq!(r.truncated, i == 200);
        }
    }

    #[test]
    fn unforced_energy_drift_is_bounded() {
        // E = θ̇²/2 + (3g/2l)·cos θ is conserved by the continuous dynamics.
        // One semi-implicit step with force f = 15 sin θ changes it by
        // −h²f²/2 − 7.5·cos ξ·h²θ̇'², so |ΔE| ≤ h²(f²/2 + 7.5·θ̇'²).
        let energy = |(t, td): (f64, f64)| 0.5 * td * td + 15.0 * t.cos();
        let h = 0.05;
        let mut env = Pendulum::new();
        for seed in 0..50 {
            env.reset(seed);
            let (mut theta, mut theta_dot) = env.state();
            for _ in 0..200 {
                let before = energy(env.state());
                let force = 15.0 * theta.sin();
                env.step(&[0.0]).unwrap();
                // Hand-rolled semi-implicit Euler oracle.
                theta_dot += force * h;
                theta += theta_dot * h;
                if theta_dot.abs() >= 8.0 {
                    break;
                }
                assert_eq!(env.state(), (theta, theta_dot));
                let drift = energy(env.state()) - before;
                let bound = h * h * (0.5 * force * force + 7.5 * theta_dot * theta_dot);
                assert!(drift.abs() <= bound + 1e-12, "drift {drift} > {bound}");
            }
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }
}
