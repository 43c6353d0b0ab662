use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, Algo, RunConfig};
use super::run::run_training;
use super::store::{read_config, read_summary};
use crate::error::{Error, Result};
use crate::seeding::{derive_indexed, fnv1a64};
use crate::wrappers::PomdpMode;

/// Settings applied to every cell of a sweep. `None` keeps the library
/// default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub total_steps: Option<usize>,
    pub eval_every: Option<usize>,
    pub eval_episodes: Option<usize>,
    /// Hidden widths of the off-policy networks.
    pub offpolicy_hidden: Option<Vec<usize>>,
    pub start_steps: Option<usize>,
    pub update_after: Option<usize>,
    pub ppo_hidden: Option<Vec<usize>>,
    pub ppo_steps_per_epoch: Option<usize>,
    pub ppo_gamma: Option<f64>,
    pub ppo_pi_lr: Option<f64>,
    pub ppo_v_lr: Option<f64>,
    pub ppo_train_pi_iters: Option<usize>,
    pub ppo_train_v_iters: Option<usize>,
    pub ppo_target_kl: Option<f64>,
    pub p_flk: Option<f64>,
    pub sigma_rn: Option<f64>,
    pub p_rsm: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.total_steps {
            cfg.total_steps = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        if let Some(v) = self.p_flk {
            cfg.wrapper.p_flk = v;
        }
        if let Some(v) = self.sigma_rn {
            cfg.wrapper.sigma_rn = v;
        }
        if let Some(v) = self.p_rsm {
            cfg.wrapper.p_rsm = v;
        }
        match &mut cfg.agent {
            AgentConfig::Offpolicy(c) => {
                if let Some(v) = &self.offpolicy_hidden {
                    c.hidden = v.clone();
                }
                if let Some(v) = self.start_steps {
                    c.start_steps = v;
                }
                if let Some(v) = self.update_after {
                    c.update_after = v;
                }
            }
            AgentConfig::Ppo(c) => {
                if let Some(v) = &self.ppo_hidden {
                    c.hidden = v.clone();
                }
                if let Some(v) = self.ppo_steps_per_epoch {
                    c.steps_per_epoch = v;
                }
                if let Some(v) = self.ppo_gamma {
                    c.gamma = v;
                }
                if let Some(v) = self.ppo_pi_lr {
                    c.pi_lr = v;
                }
                if let Some(v) = self.ppo_v_lr {
                    c.v_lr = v;
                }
                if let Some(v) = self.ppo_train_pi_iters {
                    c.train_pi_iters = v;
                }
                if let Some(v) = self.ppo_train_v_iters {
                    c.train_v_iters = v;
                }
                if let Some(v) = self.ppo_target_kl {
                    c.target_kl = v;
                }
            }
            AgentConfig::Random => {}
        }
    }
}

/// Grid of runs: every algorithm on every env and mode, crossed with the
/// horizons (multi-step algorithms only), PPO clip/λ values (PPO only) and
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub envs: Vec<String>,
    pub modes: Vec<PomdpMode>,
    pub algos: Vec<Algo>,
    pub ns: Vec<usize>,
    /// λ values for λ-return PPO; empty keeps the default.
    pub lambdas: Vec<f64>,
    /// Clip ratios for both PPO variants; empty keeps the default.
    pub clip_eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub overrides: Overrides,
    pub out_root: PathBuf,
}

/// Seed of one cell: the user seed mixed with the cell identity, so every
/// cell of a sweep trains from its own stream and reruns reproduce it.
pub fn cell_seed(cell_key: &str, seed: u64) -> u64 {
    derive_indexed(fnv1a64(cell_key.as_bytes()), seed)
}

impl SweepSpec {
    pub fn cells(&self) -> Result<Vec<RunConfig>> {
        let mut out = Vec::new();
        for env in &self.envs {
            for &mode in &self.modes {
                for &algo in &self.algos {
                    for cfg in self.algo_variants(env, mode, algo)? {
                        for &seed in &self.seeds {
                            let mut c = cfg.clone();
                            c.seed = cell_seed(&c.cell_key(), seed);
                            c.out_dir = self.out_root.join(c.cell_key()).join(format!("seed{seed}"));
                            c.validate()?;
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn algo_variants(&self, env: &str, mode: PomdpMode, algo: Algo) -> Result<Vec<RunConfig>> {
        let ns: Vec<usize> = if algo.takes_n() { self.ns.clone() } else { vec![1] };
        if ns.is_empty() {
            return Err(Error::Config(format!("{algo} needs at least one n")));
        }
        let mut out = Vec::new();
        for n in ns {
            let mut base = RunConfig::new(env, mode, algo, n, 0, PathBuf::new())?;
            self.overrides.apply(&mut base);
            if let AgentConfig::Ppo(p) = &base.agent {
                let lambdas = if algo == Algo::Ppo && !self.lambdas.is_empty() {
                    self.lambdas.clone()
                } else {
                    vec![p.lambda]
                };
                let eps = if self.clip_eps.is_empty() {
                    vec![p.clip_eps]
                } else {
                    self.clip_eps.clone()
                };
                for &l in &lambdas {
                    for &e in &eps {
                        let mut c = base.clone();
                        if let AgentConfig::Ppo(p) = &mut c.agent {
                            p.lambda = l;
                            p.clip_eps = e;
                        }
                        out.push(c);
                    }
                }
            } else {
                out.push(base);
            }
        }
        Ok(out)
    }
}

/// True when `dir` holds a completed run of exactly `cfg`.
pub fn is_complete(dir: &Path, cfg: &RunConfig) -> bool {
    let same_config = read_config(dir).map(|c| &c == cfg).unwrap_or(false);
    let done = read_summary(dir).ok().flatten().is_some_and(|s| s.complete);
    same_config && done
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Trained,
    Skipped,
    Failed(String),
}

/// Runs every config on up to `jobs` threads, skipping completed run
/// directories. Results are returned in input order.
pub fn run_all(cells: &[RunConfig], jobs: usize) -> Vec<CellStatus> {
    let jobs = jobs.max(1).min(cells.len().max(1));
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![CellStatus::Skipped; cells.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = cells.get(i) else { break };
                let status = if is_complete(&cfg.out_dir, cfg) {
                    log::info!("skipping completed {}", cfg.out_dir.display());
                    CellStatus::Skipped
                } else {
                    match run_training(cfg) {
                        Ok(_) => CellStatus::Trained,
                        Err(e) => {
                            log::error!("{} failed: {e}", cfg.out_dir.display());
                            CellStatus::Failed(e.to_string())
                        }
                    }
                };
                results.lock().expect("sweep results lock")[i] = status;
            });
        }
    });
    results.into_inner().expect("sweep results lock")
}
