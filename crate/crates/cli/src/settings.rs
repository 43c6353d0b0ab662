//! Run settings shared by the command line and flat JSON config files.
//!
//! A config file holds the same keys as the long flags (either `p_flk` or
//! `p-flk`). Flags given on the command line win over the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use po_suite_core::harness::{AgentConfig, Algo, Overrides, RunConfig, SweepSpec};
use po_suite_core::offpolicy::OffPolicyConfig;
use po_suite_core::ppo::PpoConfig;
use po_suite_core::wrappers::PomdpMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PO_SUITE_OUT";
const DEFAULT_OUT: &str = "runs";

pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Overlays the non-empty fields of `flags` on the settings read from
/// `file` and returns the merged result.
pub fn merge_with_file<T>(flags: &T, file: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let flag_value = serde_json::to_value(flags).map_err(|e| CliError::Runtime(e.to_string()))?;
    let Some(path) = file else {
        return Ok(serde_json::from_value(flag_value).expect("flag settings round-trip"));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let parsed: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let serde_json::Value::Object(map) = parsed else {
        return Err(CliError::Usage(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    let mut merged = serde_json::Map::new();
    for (k, v) in map {
        if v.is_object() {
            return Err(CliError::Usage(format!("config key `{k}` must not be nested")));
        }
        merged.insert(k.replace('-', "_"), v);
    }
    if let serde_json::Value::Object(flags) = flag_value {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Settings of a single training run.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// Task: pendulum, reacher2d or mountaincar-c.
    #[arg(long)]
    pub env: Option<String>,
    /// Algorithm: td3, mtd3, sac, msac, ppo, ppo-n or random.
    #[arg(long)]
    pub algo: Option<String>,
    /// Observation mode: mdp, rv, flk, rn or rsm.
    #[arg(long)]
    pub pomdp: Option<String>,
    /// Bootstrapping horizon of mtd3, msac and ppo-n.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Environment interactions.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output root; the run goes to <out>/<env>/<mode>/<algo>/seed<seed>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub p_flk: Option<f64>,
    #[arg(long)]
    pub sigma_rn: Option<f64>,
    #[arg(long)]
    pub p_rsm: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub pi_lr: Option<f64>,
    #[arg(long)]
    pub q_lr: Option<f64>,
    /// Entropy weight (SAC family).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub polyak: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub start_steps: Option<usize>,
    #[arg(long)]
    pub update_after: Option<usize>,
    #[arg(long)]
    pub update_every: Option<usize>,
    #[arg(long)]
    pub policy_delay: Option<usize>,
    #[arg(long)]
    pub target_noise: Option<f64>,
    #[arg(long)]
    pub noise_clip: Option<f64>,
    #[arg(long)]
    pub act_noise: Option<f64>,
    #[arg(long)]
    pub replay_size: Option<usize>,
    /// λ of PPO's λ-return.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// PPO clip ratio ε.
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub v_lr: Option<f64>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub train_pi_iters: Option<usize>,
    #[arg(long)]
    pub train_v_iters: Option<usize>,
    #[arg(long)]
    pub target_kl: Option<f64>,
    #[arg(long)]
    pub log_std_init: Option<f64>,
}

fn parse<T: FromStr>(what: &str, s: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

/// Names the settings that do not apply to the chosen family.
fn reject(family: &str, fields: &[(&str, bool)]) -> Result<(), CliError> {
    let bad: Vec<&str> = fields.iter().filter(|(_, given)| *given).map(|(n, _)| *n).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{} not applicable to {family}",
            bad.join(", ")
        )))
    }
}

impl RunSettings {
    pub fn to_run_config(&self) -> Result<RunConfig, CliError> {
        let env = self
            .env
            .as_deref()
            .ok_or_else(|| CliError::Usage("--env is required".into()))?;
        let algo: Algo = parse(
            "--algo",
            self.algo
                .as_deref()
                .ok_or_else(|| CliError::Usage("--algo is required".into()))?,
        )?;
        let mode: PomdpMode = parse("--pomdp", self.pomdp.as_deref().unwrap_or("mdp"))?;
        let seed = self.seed.unwrap_or(0);
        let n = self.n.unwrap_or(1);
        let mut cfg = RunConfig::new(env, mode, algo, n, seed, PathBuf::new())?;
        set(&mut cfg.total_steps, &self.steps);
        set(&mut cfg.eval_every, &self.eval_every);
        set(&mut cfg.eval_episodes, &self.eval_episodes);
        set(&mut cfg.wrapper.p_flk, &self.p_flk);
        set(&mut cfg.wrapper.sigma_rn, &self.sigma_rn);
        set(&mut cfg.wrapper.p_rsm, &self.p_rsm);
        match &mut cfg.agent {
            AgentConfig::Offpolicy(c) => self.apply_offpolicy(c)?,
            AgentConfig::Ppo(c) => self.apply_ppo(c)?,
            AgentConfig::Random => reject("random", &self.learning_fields())?,
        }
        let out_root = self.out.clone().unwrap_or_else(default_out_root);
        cfg.out_dir = out_root.join(cfg.cell_key()).join(format!("seed{seed}"));
        cfg.validate()?;
        Ok(cfg)
    }

    fn learning_fields(&self) -> Vec<(&'static str, bool)> {
        let mut f = self.ppo_only();
        f.extend(self.offpolicy_only());
        f.extend([
            ("hidden", self.hidden.is_some()),
            ("gamma", self.gamma.is_some()),
            ("pi_lr", self.pi_lr.is_some()),
        ]);
        f
    }

    fn ppo_only(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("lambda", self.lambda.is_some()),
            ("clip_eps", self.clip_eps.is_some()),
            ("v_lr", self.v_lr.is_some()),
            ("steps_per_epoch", self.steps_per_epoch.is_some()),
            ("train_pi_iters", self.train_pi_iters.is_some()),
            ("train_v_iters", self.train_v_iters.is_some()),
            ("target_kl", self.target_kl.is_some()),
            ("log_std_init", self.log_std_init.is_some()),
        ]
    }

    fn offpolicy_only(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("q_lr", self.q_lr.is_some()),
            ("alpha", self.alpha.is_some()),
            ("polyak", self.polyak.is_some()),
            ("batch_size", self.batch_size.is_some()),
            ("start_steps", self.start_steps.is_some()),
            ("update_after", self.update_after.is_some()),
            ("update_every", self.update_every.is_some()),
            ("policy_delay", self.policy_delay.is_some()),
            ("target_noise", self.target_noise.is_some()),
            ("noise_clip", self.noise_clip.is_some()),
            ("act_noise", self.act_noise.is_some()),
            ("replay_size", self.replay_size.is_some()),
        ]
    }

    fn apply_offpolicy(&self, c: &mut OffPolicyConfig) -> Result<(), CliError> {
        reject("off-policy agents", &self.ppo_only())?;
        set(&mut c.hidden, &self.hidden);
        set(&mut c.gamma, &self.gamma);
        set(&mut c.pi_lr, &self.pi_lr);
        set(&mut c.q_lr, &self.q_lr);
        set(&mut c.alpha, &self.alpha);
        set(&mut c.polyak, &self.polyak);
        set(&mut c.batch_size, &self.batch_size);
        set(&mut c.start_steps, &self.start_steps);
        set(&mut c.update_after, &self.update_after);
        set(&mut c.update_every, &self.update_every);
        set(&mut c.policy_delay, &self.policy_delay);
        set(&mut c.target_noise, &self.target_noise);
        set(&mut c.noise_clip, &self.noise_clip);
        set(&mut c.act_noise, &self.act_noise);
        set(&mut c.replay_size, &self.replay_size);
        Ok(())
    }

    fn apply_ppo(&self, c: &mut PpoConfig) -> Result<(), CliError> {
        reject("PPO", &self.offpolicy_only())?;
        set(&mut c.hidden, &self.hidden);
        set(&mut c.gamma, &self.gamma);
        set(&mut c.pi_lr, &self.pi_lr);
        set(&mut c.lambda, &self.lambda);
        set(&mut c.clip_eps, &self.clip_eps);
        set(&mut c.v_lr, &self.v_lr);
        set(&mut c.steps_per_epoch, &self.steps_per_epoch);
        set(&mut c.train_pi_iters, &self.train_pi_iters);
        set(&mut c.train_v_iters, &self.train_v_iters);
        set(&mut c.target_kl, &self.target_kl);
        set(&mut c.log_std_init, &self.log_std_init);
        Ok(())
    }
}

/// Settings of a sweep: lists spanning the grid plus overrides shared by
/// every cell.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// Tasks, comma separated [default: pendulum].
    #[arg(long, value_delimiter = ',')]
    pub envs: Option<Vec<String>>,
    /// Observation modes, comma separated [default: mdp].
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<String>>,
    /// Algorithms, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
    /// Horizons for mtd3, msac and ppo-n [default: 1,2,3,4,5].
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// λ values for ppo.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Clip ratios for ppo and ppo-n.
    #[arg(long, value_delimiter = ',')]
    pub clip_eps: Option<Vec<f64>>,
    /// Seeds, comma separated [default: 0,1,2].
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Concurrent runs [default: 1].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Hidden widths of the off-policy networks.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub start_steps: Option<usize>,
    #[arg(long)]
    pub update_after: Option<usize>,
    /// Hidden widths of the PPO networks.
    #[arg(long, value_delimiter = ',')]
    pub ppo_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub ppo_steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub ppo_gamma: Option<f64>,
    #[arg(long)]
    pub ppo_pi_lr: Option<f64>,
    #[arg(long)]
    pub ppo_v_lr: Option<f64>,
    #[arg(long)]
    pub ppo_train_pi_iters: Option<usize>,
    #[arg(long)]
    pub ppo_train_v_iters: Option<usize>,
    #[arg(long)]
    pub ppo_target_kl: Option<f64>,
    #[arg(long)]
    pub p_flk: Option<f64>,
    #[arg(long)]
    pub sigma_rn: Option<f64>,
    #[arg(long)]
    pub p_rsm: Option<f64>,
}

impl SweepSettings {
    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn to_spec(&self) -> Result<SweepSpec, CliError> {
        let algos = self
            .algos
            .as_ref()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| CliError::Usage("--algos is required".into()))?
            .iter()
            .map(|a| parse::<Algo>("--algos", a))
            .collect::<Result<Vec<_>, _>>()?;
        let modes = self
            .modes
            .clone()
            .unwrap_or_else(|| vec!["mdp".into()])
            .iter()
            .map(|m| parse::<PomdpMode>("--modes", m))
            .collect::<Result<Vec<_>, _>>()?;
        for env in self.envs.iter().flatten() {
            po_suite_core::envs::env_spec(env)?;
        }
        Ok(SweepSpec {
            envs: self.envs.clone().unwrap_or_else(|| vec!["pendulum".into()]),
            modes,
            algos,
            ns: self.ns.clone().unwrap_or_else(|| (1..=5).collect()),
            lambdas: self.lambdas.clone().unwrap_or_default(),
            clip_eps: self.clip_eps.clone().unwrap_or_default(),
            seeds: self.seeds.clone().unwrap_or_else(|| vec![0, 1, 2]),
            overrides: Overrides {
                total_steps: self.steps,
                eval_every: self.eval_every,
                eval_episodes: self.eval_episodes,
                offpolicy_hidden: self.hidden.clone(),
                start_steps: self.start_steps,
                update_after: self.update_after,
                ppo_hidden: self.ppo_hidden.clone(),
                ppo_steps_per_epoch: self.ppo_steps_per_epoch,
                ppo_gamma: self.ppo_gamma,
                ppo_pi_lr: self.ppo_pi_lr,
                ppo_v_lr: self.ppo_v_lr,
                ppo_train_pi_iters: self.ppo_train_pi_iters,
                ppo_train_v_iters: self.ppo_train_v_iters,
                ppo_target_kl: self.ppo_target_kl,
                p_flk: self.p_flk,
                sigma_rn: self.sigma_rn,
                p_rsm: self.p_rsm,
            },
            out_root: self.out.clone().unwrap_or_else(default_out_root),
        })
    }
}
