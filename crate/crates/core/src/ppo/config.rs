use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Return estimator feeding the advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnMode {
    /// Exponentially weighted λ-return.
    Lambda,
    /// Fixed `n`-step return.
    Nstep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub return_mode: ReturnMode,
    /// Horizon for [`ReturnMode::Nstep`]; ignored otherwise.
    pub n: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub clip_eps: f64,
    pub pi_lr: f64,
    pub v_lr: f64,
    pub steps_per_epoch: usize,
    pub train_pi_iters: usize,
    pub train_v_iters: usize,
    pub target_kl: f64,
    pub hidden: Vec<usize>,
    /// Initial state-independent log standard deviation.
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            return_mode: ReturnMode::Lambda,
            n: 1,
            lambda: 0.97,
            gamma: 0.99,
            clip_eps: 0.2,
            pi_lr: 3e-4,
            v_lr: 1e-3,
            steps_per_epoch: 4000,
            train_pi_iters: 80,
            train_v_iters: 80,
            target_kl: 0.01,
            hidden: vec![64, 64],
            log_std_init: -0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.clip_eps > 0.0) {
            return fail(format!("clip_eps = {} must be > 0", self.clip_eps));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        if !(self.pi_lr > 0.0 && self.v_lr > 0.0) {
            return fail("learning rates must be > 0".into());
        }
        if self.return_mode == ReturnMode::Nstep && self.n == 0 {
            return fail("n-step PPO needs n >= 1".into());
        }
        if self.steps_per_epoch == 0 {
            return fail("steps_per_epoch must be > 0".into());
        }
        if !(self.target_kl >= 0.0) {
            return fail(format!("target_kl = {} must be >= 0", self.target_kl));
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be > 0".into());
        }
        Ok(())
    }
}
