use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffPolicyAlgo {
    Td3,
    Sac,
}

/// Hyper-parameters of TD3/SAC and their n-step variants (`n > 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffPolicyConfig {
    pub algo: OffPolicyAlgo,
    /// Bootstrapping horizon; `1` is the vanilla algorithm.
    pub n: usize,
    pub gamma: f64,
    /// Entropy weight (SAC only).
    pub alpha: f64,
    /// Target-network averaging coefficient.
    pub polyak: f64,
    pub pi_lr: f64,
    pub q_lr: f64,
    pub batch_size: usize,
    /// Uniform-random actions before this many env steps.
    pub start_steps: usize,
    pub update_after: usize,
    pub update_every: usize,
    /// Critic updates per actor update (TD3 only).
    pub policy_delay: usize,
    pub target_noise: f64,
    pub noise_clip: f64,
    /// Exploration noise std (TD3 only).
    pub act_noise: f64,
    pub hidden: Vec<usize>,
    pub replay_size: usize,
}

impl OffPolicyConfig {
    pub fn td3() -> Self {
        Self {
            algo: OffPolicyAlgo::Td3,
            n: 1,
            gamma: 0.99,
            alpha: 0.0,
            polyak: 0.995,
            pi_lr: 1e-3,
            q_lr: 1e-3,
            batch_size: 100,
            start_steps: 1000,
            update_after: 1000,
            update_every: 50,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            act_noise: 0.1,
            hidden: vec![256, 256],
            replay_size: crate::replay::DEFAULT_CAPACITY,
        }
    }

    pub fn sac() -> Self {
        Self {
            algo: OffPolicyAlgo::Sac,
            alpha: 0.2,
            policy_delay: 1,
            ..Self::td3()
        }
    }

    pub fn for_algo(algo: OffPolicyAlgo) -> Self {
        match algo {
            OffPolicyAlgo::Td3 => Self::td3(),
            OffPolicyAlgo::Sac => Self::sac(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return fail("n must be >= 1".into());
        }
        if self.algo == OffPolicyAlgo::Td3 && self.alpha != 0.0 {
            return fail(format!("TD3 requires alpha = 0, got {}", self.alpha));
        }
        if !(self.alpha >= 0.0) {
            return fail(format!("alpha = {} must be >= 0", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return fail(format!("polyak = {} outside [0, 1]", self.polyak));
        }
        if !(self.pi_lr > 0.0 && self.q_lr > 0.0) {
            return fail("learning rates must be > 0".into());
        }
        if self.batch_size == 0 || self.update_every == 0 || self.policy_delay == 0 {
            return fail("batch_size, update_every and policy_delay must be > 0".into());
        }
        if self.replay_size == 0 {
            return fail("replay_size must be > 0".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be > 0".into());
        }
        if self.target_noise < 0.0 || self.noise_clip < 0.0 || self.act_noise < 0.0 {
            return fail("noise scales must be >= 0".into());
        }
        Ok(())
    }
}
