//! Observation transforms that turn an MDP task into a POMDP.
//!
//! | mode | observation seen by the agent                               |
//! |------|-------------------------------------------------------------|
//! | MDP  | unchanged                                                   |
//! | RV   | velocity entries removed                                    |
//! | FLK  | whole vector zeroed with probability `p_flk`                |
//! | RN   | `N(0, sigma_rn²)` noise added to every entry                |
//! | RSM  | each entry independently zeroed with probability `p_rsm`    |
//!
//! Rewards, termination and dynamics are never touched. The transform draws
//! from its own RNG stream so the same env seed yields the same physics in
//! every mode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvSpec, StepResult};
use crate::error::{Error, Result};
use crate::seeding::{rng_from, Rng as SeedRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PomdpMode {
    Mdp,
    Rv,
    Flk,
    Rn,
    Rsm,
}

impl PomdpMode {
    pub const ALL: [PomdpMode; 5] = [
        PomdpMode::Mdp,
        PomdpMode::Rv,
        PomdpMode::Flk,
        PomdpMode::Rn,
        PomdpMode::Rsm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PomdpMode::Mdp => "mdp",
            PomdpMode::Rv => "rv",
            PomdpMode::Flk => "flk",
            PomdpMode::Rn => "rn",
            PomdpMode::Rsm => "rsm",
        }
    }

    /// Label used in tables: `MDP`, `POMDP-RV`, ...
    pub fn label(self) -> String {
        match self {
            PomdpMode::Mdp => "MDP".into(),
            other => format!("POMDP-{}", other.as_str().to_uppercase()),
        }
    }
}

impl fmt::Display for PomdpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PomdpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let key = lower.strip_prefix("pomdp-").unwrap_or(&lower);
        PomdpMode::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown pomdp mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapperConfig {
    #[serde(rename = "pomdp_mode")]
    pub mode: PomdpMode,
    pub p_flk: f64,
    pub sigma_rn: f64,
    pub p_rsm: f64,
}

impl Default for WrapperConfig {
    fn default() -> Self {
        Self::new(PomdpMode::Mdp)
    }
}

impl WrapperConfig {
    pub fn new(mode: PomdpMode) -> Self {
        Self {
            mode,
            p_flk: 0.2,
            sigma_rn: 0.1,
            p_rsm: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        prob("p_flk", self.p_flk)?;
        prob("p_rsm", self.p_rsm)?;
        if !(self.sigma_rn >= 0.0 && self.sigma_rn.is_finite()) {
            return Err(Error::Config(format!("sigma_rn = {} must be >= 0", self.sigma_rn)));
        }
        Ok(())
    }
}

/// Applies the configured transform to one true observation.
pub fn wrap_observation<R: Rng + ?Sized>(
    obs: &[f64],
    cfg: &WrapperConfig,
    velocity_mask: &[usize],
    rng: &mut R,
) -> Vec<f64> {
    match cfg.mode {
        PomdpMode::Mdp => obs.to_vec(),
        PomdpMode::Rv => {
            if velocity_mask.is_empty() {
                log::warn!("POMDP-RV with an empty velocity mask is the MDP");
            }
            obs.iter()
                .enumerate()
                .filter(|(i, _)| !velocity_mask.contains(i))
                .map(|(_, &v)| v)
                .collect()
        }
        PomdpMode::Flk => {
            if rng.random::<f64>() < cfg.p_flk {
                vec![0.0; obs.len()]
            } else {
                obs.to_vec()
            }
        }
        PomdpMode::Rn => {
            // sigma_rn is validated non-negative and finite.
            let noise = Normal::new(0.0, cfg.sigma_rn).expect("valid sigma_rn");
            obs.iter().map(|&v| v + noise.sample(rng)).collect()
        }
        PomdpMode::Rsm => obs
            .iter()
            .map(|&v| if rng.random::<f64>() < cfg.p_rsm { 0.0 } else { v })
            .collect(),
    }
}

pub fn wrapped_obs_dim(spec: &EnvSpec, cfg: &WrapperConfig) -> usize {
    match cfg.mode {
        PomdpMode::Rv => spec.obs_dim - spec.velocity_indices.len(),
        _ => spec.obs_dim,
    }
}

/// An environment whose observations pass through a [`WrapperConfig`].
pub struct PomdpEnv {
    env: Box<dyn Env>,
    cfg: WrapperConfig,
    rng: SeedRng,
    obs_dim: usize,
}

impl PomdpEnv {
    /// `wrapper_seed` seeds the transform's RNG; env resets are seeded
    /// separately through [`PomdpEnv::reset`].
    pub fn new(env: Box<dyn Env>, cfg: WrapperConfig, wrapper_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = wrapped_obs_dim(env.spec(), &cfg);
        Ok(Self {
            env,
            cfg,
            rng: rng_from(wrapper_seed),
            obs_dim,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn config(&self) -> &WrapperConfig {
        &self.cfg
    }

    /// Dimension of the transformed observation.
    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.env.spec().act_dim
    }

    fn transform(&mut self, obs: &[f64]) -> Vec<f64> {
        let mask = &self.env.spec().velocity_indices;
        wrap_observation(obs, &self.cfg, mask, &mut self.rng)
    }

    pub fn reset(&mut self, env_seed: u64) -> Vec<f64> {
        let obs = self.env.reset(env_seed);
        self.transform(&obs)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let mut r = self.env.step(action)?;
        r.observation = self.transform(&r.observation);
        Ok(r)
    }
}
