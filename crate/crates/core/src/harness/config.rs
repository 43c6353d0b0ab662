use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::env_spec;
use crate::error::{Error, Result};
use crate::offpolicy::OffPolicyConfig;
use crate::ppo::{PpoConfig, ReturnMode};
use crate::wrappers::{PomdpMode, WrapperConfig};

/// Version string stamped into every run directory and emitted artifact.
pub const CODE_VERSION: &str = concat!("po-suite ", env!("CARGO_PKG_VERSION"));

/// Algorithm families as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Td3,
    Mtd3,
    Sac,
    Msac,
    Ppo,
    PpoN,
    /// Uniform random actions; a learning-free baseline.
    Random,
}

impl Algo {
    pub const ALL: [Algo; 7] = [
        Algo::Td3,
        Algo::Mtd3,
        Algo::Sac,
        Algo::Msac,
        Algo::Ppo,
        Algo::PpoN,
        Algo::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Td3 => "td3",
            Algo::Mtd3 => "mtd3",
            Algo::Sac => "sac",
            Algo::Msac => "msac",
            Algo::Ppo => "ppo",
            Algo::PpoN => "ppo-n",
            Algo::Random => "random",
        }
    }

    /// True for the variants parameterized by a bootstrapping horizon.
    pub fn takes_n(self) -> bool {
        matches!(self, Algo::Mtd3 | Algo::Msac | Algo::PpoN)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let key = if lower == "ppon" { "ppo-n" } else { lower.as_str() };
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == key)
            .ok_or_else(|| Error::UnknownAlgo(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AgentConfig {
    Offpolicy(OffPolicyConfig),
    Ppo(PpoConfig),
    Random,
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: String,
    #[serde(flatten)]
    pub wrapper: WrapperConfig,
    pub algo: Algo,
    pub agent: AgentConfig,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Interaction budget per task at desk scale.
pub fn default_total_steps(env: &str) -> usize {
    match env {
        "reacher2d" => 150_000,
        _ => 100_000,
    }
}

pub const DEFAULT_EVAL_EVERY: usize = 2000;
pub const DEFAULT_EVAL_EPISODES: usize = 5;

impl RunConfig {
    /// Library defaults for `algo` on `env`. `n` must be 1 for algorithms
    /// without a horizon parameter.
    pub fn new(env: &str, mode: PomdpMode, algo: Algo, n: usize, seed: u64, out_dir: PathBuf) -> Result<Self> {
        env_spec(env)?;
        if n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if !algo.takes_n() && n != 1 {
            return Err(Error::Config(format!(
                "{algo} is a one-step method; use the multi-step variant for n = {n}"
            )));
        }
        let agent = match algo {
            Algo::Td3 | Algo::Mtd3 => AgentConfig::Offpolicy(OffPolicyConfig {
                n,
                ..OffPolicyConfig::td3()
            }),
            Algo::Sac | Algo::Msac => AgentConfig::Offpolicy(OffPolicyConfig {
                n,
                ..OffPolicyConfig::sac()
            }),
            Algo::Ppo => AgentConfig::Ppo(PpoConfig::default()),
            Algo::PpoN => AgentConfig::Ppo(PpoConfig {
                return_mode: ReturnMode::Nstep,
                n,
                ..PpoConfig::default()
            }),
            Algo::Random => AgentConfig::Random,
        };
        Ok(Self {
            env: env.to_string(),
            wrapper: WrapperConfig::new(mode),
            algo,
            agent,
            total_steps: default_total_steps(env),
            eval_every: DEFAULT_EVAL_EVERY,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            seed,
            out_dir,
        })
    }

    pub fn validate(&self) -> Result<()> {
        env_spec(&self.env)?;
        self.wrapper.validate()?;
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be > 0".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("eval_every and eval_episodes must be > 0".into()));
        }
        if self.total_steps < self.eval_every {
            return Err(Error::Config(format!(
                "total_steps {} is shorter than eval_every {}; the run would never be evaluated",
                self.total_steps, self.eval_every
            )));
        }
        let family_ok = match (&self.agent, self.algo) {
            (AgentConfig::Offpolicy(c), Algo::Td3 | Algo::Mtd3) => {
                c.validate()?;
                c.algo == crate::offpolicy::OffPolicyAlgo::Td3
            }
            (AgentConfig::Offpolicy(c), Algo::Sac | Algo::Msac) => {
                c.validate()?;
                c.algo == crate::offpolicy::OffPolicyAlgo::Sac
            }
            (AgentConfig::Ppo(c), Algo::Ppo) => {
                c.validate()?;
                c.return_mode == ReturnMode::Lambda
            }
            (AgentConfig::Ppo(c), Algo::PpoN) => {
                c.validate()?;
                c.return_mode == ReturnMode::Nstep
            }
            (AgentConfig::Random, Algo::Random) => true,
            _ => false,
        };
        if !family_ok {
            return Err(Error::Config(format!(
                "agent settings do not match algorithm {}",
                self.algo
            )));
        }
        if matches!(self.algo, Algo::Td3 | Algo::Sac | Algo::Ppo) && self.n() != 1 {
            return Err(Error::Config(format!("{} requires n = 1", self.algo)));
        }
        Ok(())
    }

    /// Bootstrapping horizon (1 for one-step methods).
    pub fn n(&self) -> usize {
        match &self.agent {
            AgentConfig::Offpolicy(c) => c.n,
            AgentConfig::Ppo(c) if c.return_mode == ReturnMode::Nstep => c.n,
            _ => 1,
        }
    }

    /// Column label: `TD3`, `MTD3(5)`, `PPO`, `PPO(3)`, optionally with a
    /// bracketed suffix for non-default PPO clip or λ.
    pub fn label(&self) -> String {
        let base = match self.algo {
            Algo::Td3 => "TD3".to_string(),
            Algo::Sac => "SAC".to_string(),
            Algo::Ppo => "PPO".to_string(),
            Algo::Mtd3 => format!("MTD3({})", self.n()),
            Algo::Msac => format!("MSAC({})", self.n()),
            Algo::PpoN => format!("PPO({})", self.n()),
            Algo::Random => "Random".to_string(),
        };
        let mut extras = Vec::new();
        if let AgentConfig::Ppo(c) = &self.agent {
            let d = PpoConfig::default();
            if c.clip_eps != d.clip_eps {
                extras.push(format!("eps={}", c.clip_eps));
            }
            if c.return_mode == ReturnMode::Lambda && c.lambda != d.lambda {
                extras.push(format!("lambda={}", c.lambda));
            }
        }
        if extras.is_empty() {
            base
        } else {
            format!("{base} [{}]", extras.join(","))
        }
    }

    /// File-system friendly form of [`RunConfig::label`].
    pub fn slug(&self) -> String {
        let mut s = self.algo.as_str().to_string();
        if self.algo.takes_n() {
            s.push_str(&format!("-n{}", self.n()));
        }
        if let AgentConfig::Ppo(c) = &self.agent {
            let d = PpoConfig::default();
            if c.clip_eps != d.clip_eps {
                s.push_str(&format!("-eps{}", c.clip_eps));
            }
            if c.return_mode == ReturnMode::Lambda && c.lambda != d.lambda {
                s.push_str(&format!("-lam{}", c.lambda));
            }
        }
        s
    }

    /// Identity of the experiment cell, ignoring the seed.
    pub fn cell_key(&self) -> String {
        format!("{}/{}/{}", self.env, self.wrapper.mode, self.slug())
    }
}
