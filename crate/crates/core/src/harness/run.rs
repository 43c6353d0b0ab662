use std::path::Path;

use rand::Rng;

use super::config::{AgentConfig, RunConfig, CODE_VERSION};
use super::metrics::{max_avg_return, mean, EvalRecord};
use super::store::{
    eval_header, eval_row, fmt_f64, write_config, write_summary, CsvLog, RunSummary, CHECKPOINT_FILE, EVAL_FILE,
    TRAIN_FILE,
};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::offpolicy::{OffPolicyAgent, OffPolicyConfig};
use crate::ppo::{PpoAgent, PpoConfig, SegmentEnd};
use crate::replay::{ReplayBuffer, Transition};
use crate::seeding::{derive_indexed, rng_from, Rng as SeedRng, SeedStreams};
use crate::wrappers::{PomdpEnv, WrapperConfig};

/// Runs `episodes` evaluation episodes of `policy` on fresh instances of
/// `env` with the observation transform active. Episode `i` resets the
/// task and the transform from seeds derived from `seed` and `i`, so the
/// same seed replays the same episodes.
pub fn evaluate<F>(policy: F, env: &str, wrapper: &WrapperConfig, episodes: usize, seed: u64) -> Result<EvalRecord>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    evaluate_at(0, policy, env, wrapper, episodes, seed)
}

fn evaluate_at<F>(
    step: usize,
    mut policy: F,
    env: &str,
    wrapper: &WrapperConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalRecord>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes as u64 {
        let mut e = PomdpEnv::new(make_env(env)?, *wrapper, derive_indexed(seed, 2 * i + 1))?;
        let mut obs = e.reset(derive_indexed(seed, 2 * i));
        let mut total = 0.0;
        loop {
            let action = policy(&obs)?;
            let r = e.step(&action)?;
            total += r.reward;
            if r.done() {
                break;
            }
            obs = r.observation;
        }
        returns.push(total);
    }
    Ok(EvalRecord::new(step, returns))
}

/// Training environment with deterministic per-episode reset seeds.
struct TrainEnv {
    env: PomdpEnv,
    seed: u64,
    episodes: u64,
}

impl TrainEnv {
    fn new(cfg: &RunConfig, streams: &SeedStreams) -> Result<Self> {
        Ok(Self {
            env: PomdpEnv::new(make_env(&cfg.env)?, cfg.wrapper, streams.wrapper)?,
            seed: streams.env,
            episodes: 0,
        })
    }

    fn reset(&mut self) -> Vec<f64> {
        let obs = self.env.reset(derive_indexed(self.seed, self.episodes));
        self.episodes += 1;
        obs
    }
}

/// Shared evaluation plumbing for the training loops.
struct Evaluator<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    log: CsvLog,
    records: Vec<EvalRecord>,
}

impl<'a> Evaluator<'a> {
    fn new(cfg: &'a RunConfig, streams: &SeedStreams, dir: &Path) -> Result<Self> {
        Ok(Self {
            cfg,
            seed: streams.eval,
            log: CsvLog::create(&dir.join(EVAL_FILE), &eval_header(cfg.eval_episodes))?,
            records: Vec::new(),
        })
    }

    fn maybe_run<F>(&mut self, step: usize, policy: F) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        if !step.is_multiple_of(self.cfg.eval_every) {
            return Ok(());
        }
        let rec = evaluate_at(
            step,
            policy,
            &self.cfg.env,
            &self.cfg.wrapper,
            self.cfg.eval_episodes,
            self.seed,
        )?;
        log::info!(
            "{} {} seed {}: step {step} eval mean {:.1}",
            self.cfg.cell_key(),
            self.cfg.label(),
            self.cfg.seed,
            rec.mean
        );
        self.log.row(&eval_row(&rec))?;
        self.records.push(rec);
        Ok(())
    }
}

/// Result of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<EvalRecord>,
    pub max_avg_return: f64,
}

/// Trains one agent per `cfg`, writing the run directory as it goes.
///
/// Deterministic: the same configuration and seed produce byte-identical
/// CSV logs and checkpoints.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir)?;
    write_config(dir, cfg)?;
    let streams = SeedStreams::new(cfg.seed);
    let mut env = TrainEnv::new(cfg, &streams)?;
    check_dims(cfg, env.env.obs_dim())?;
    let mut eval = Evaluator::new(cfg, &streams, dir)?;

    let checkpoint = match &cfg.agent {
        AgentConfig::Offpolicy(agent_cfg) => train_offpolicy(cfg, agent_cfg, &streams, &mut env, &mut eval, dir)?,
        AgentConfig::Ppo(agent_cfg) => train_ppo(cfg, agent_cfg, &streams, &mut env, &mut eval, dir)?,
        AgentConfig::Random => train_random(cfg, &streams, &mut env, &mut eval)?,
    };
    if let Some(ck) = checkpoint {
        ck.save(&dir.join(CHECKPOINT_FILE))?;
    }

    let records = eval.records;
    let best = max_avg_return(&records)?;
    write_summary(
        dir,
        &RunSummary {
            code_version: CODE_VERSION.to_string(),
            complete: true,
            total_steps: cfg.total_steps,
            eval_records: records.len(),
            max_avg_return: best,
        },
    )?;
    Ok(RunOutcome {
        records,
        max_avg_return: best,
    })
}

fn dims(env: &TrainEnv) -> (usize, usize) {
    (env.env.obs_dim(), env.env.act_dim())
}

fn train_offpolicy(
    cfg: &RunConfig,
    agent_cfg: &OffPolicyConfig,
    streams: &SeedStreams,
    env: &mut TrainEnv,
    eval: &mut Evaluator,
    dir: &Path,
) -> Result<Option<Checkpoint>> {
    let (od, ad) = dims(env);
    let mut agent = OffPolicyAgent::new(agent_cfg.clone(), od, ad, &mut rng_from(streams.init))?;
    let mut buffer = ReplayBuffer::new(agent_cfg.replay_size.min(cfg.total_steps.max(1)), od, ad);
    let mut act_rng = rng_from(streams.act);
    let mut update_rng = rng_from(streams.update);
    let header = ["step", "q_loss", "q_target_mean", "pi_objective", "actor_updates"];
    let mut train_log = CsvLog::create(&dir.join(TRAIN_FILE), &header.map(String::from))?;

    let mut obs = env.reset();
    for t in 1..=cfg.total_steps {
        let action = agent.act(&obs, t - 1, &mut act_rng)?;
        let r = env.env.step(&action)?;
        buffer.store(&Transition {
            obs: obs.clone(),
            action,
            reward: r.reward,
            next_obs: r.observation.clone(),
            terminal: r.terminal,
            truncated: r.truncated,
        })?;
        obs = if r.done() { env.reset() } else { r.observation };

        if agent.update_due(t) {
            let mut q_loss = Vec::with_capacity(agent_cfg.update_every);
            let mut q_targ = Vec::with_capacity(agent_cfg.update_every);
            let mut pi = Vec::new();
            for _ in 0..agent_cfg.update_every {
                let s = agent.update(&buffer, &mut update_rng)?;
                q_loss.push(s.q_loss);
                q_targ.push(s.q_target_mean);
                pi.extend(s.pi_objective);
            }
            train_log.row(&[
                t.to_string(),
                fmt_f64(mean(&q_loss)),
                fmt_f64(mean(&q_targ)),
                if pi.is_empty() {
                    String::new()
                } else {
                    fmt_f64(mean(&pi))
                },
                agent.actor_updates().to_string(),
            ])?;
        }
        eval.maybe_run(t, |o| agent.actor_critic().exploit(o))?;
    }
    Ok(Some(agent.to_checkpoint()))
}

fn train_ppo(
    cfg: &RunConfig,
    agent_cfg: &PpoConfig,
    streams: &SeedStreams,
    env: &mut TrainEnv,
    eval: &mut Evaluator,
    dir: &Path,
) -> Result<Option<Checkpoint>> {
    let (od, ad) = dims(env);
    let mut agent = PpoAgent::new(agent_cfg.clone(), od, ad, &mut rng_from(streams.init))?;
    let mut buf = agent.new_buffer();
    let mut act_rng = rng_from(streams.act);
    let header = [
        "step",
        "pi_objective",
        "v_loss",
        "kl",
        "entropy",
        "clip_frac",
        "pi_steps",
        "stopped_early",
    ];
    let mut train_log = CsvLog::create(&dir.join(TRAIN_FILE), &header.map(String::from))?;

    let mut obs = env.reset();
    for t in 1..=cfg.total_steps {
        let step = agent.act(&obs, &mut act_rng)?;
        let r = env.env.step(&step.action)?;
        buf.store(&obs, &step.action, r.reward, step.value, step.logp)?;
        let epoch_end = buf.len() == agent_cfg.steps_per_epoch;
        if r.done() || epoch_end {
            let end = if r.terminal {
                SegmentEnd::Terminal
            } else {
                SegmentEnd::Bootstrap(agent.value_of(&r.observation)?)
            };
            buf.finish_path(end);
            obs = env.reset();
        } else {
            obs = r.observation;
        }
        if epoch_end {
            let batch = buf.take()?;
            let s = agent.update(&batch)?;
            train_log.row(&[
                t.to_string(),
                fmt_f64(s.pi_objective),
                fmt_f64(s.v_loss),
                fmt_f64(s.kl),
                fmt_f64(s.entropy),
                fmt_f64(s.clip_frac),
                s.pi_steps.to_string(),
                s.stopped_early.to_string(),
            ])?;
        }
        eval.maybe_run(t, |o| agent.exploit(o))?;
    }
    Ok(Some(agent.to_checkpoint()))
}

/// Uniform action in `[-1, 1]^d`.
pub fn random_action(act_dim: usize, rng: &mut SeedRng) -> Vec<f64> {
    (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn train_random(
    cfg: &RunConfig,
    streams: &SeedStreams,
    env: &mut TrainEnv,
    eval: &mut Evaluator,
) -> Result<Option<Checkpoint>> {
    let (_, ad) = dims(env);
    let mut act_rng = rng_from(streams.act);
    let mut eval_rng = rng_from(streams.update);
    env.reset();
    for t in 1..=cfg.total_steps {
        let r = env.env.step(&random_action(ad, &mut act_rng))?;
        if r.done() {
            env.reset();
        }
        eval.maybe_run(t, |_| Ok(random_action(ad, &mut eval_rng)))?;
    }
    Ok(None)
}

/// Re-evaluates the final policy stored in a finished run directory with
/// the deterministic (exploit) action.
pub fn evaluate_run(dir: &Path, episodes: usize, seed: u64) -> Result<EvalRecord> {
    let cfg = super::store::read_config(dir)?;
    let spec = crate::envs::env_spec(&cfg.env)?;
    let od = crate::wrappers::wrapped_obs_dim(&spec, &cfg.wrapper);
    let ad = spec.act_dim;
    let load = || Checkpoint::load(&dir.join(CHECKPOINT_FILE));
    match &cfg.agent {
        AgentConfig::Offpolicy(c) => {
            let mut agent = OffPolicyAgent::new(c.clone(), od, ad, &mut rng_from(0))?;
            agent.load_checkpoint(&load()?)?;
            evaluate(
                |o| agent.actor_critic().exploit(o),
                &cfg.env,
                &cfg.wrapper,
                episodes,
                seed,
            )
        }
        AgentConfig::Ppo(c) => {
            let mut agent = PpoAgent::new(c.clone(), od, ad, &mut rng_from(0))?;
            agent.load_checkpoint(&load()?)?;
            evaluate(|o| agent.exploit(o), &cfg.env, &cfg.wrapper, episodes, seed)
        }
        AgentConfig::Random => {
            let mut rng = rng_from(derive_indexed(seed, u64::MAX));
            evaluate(
                |_| Ok(random_action(ad, &mut rng)),
                &cfg.env,
                &cfg.wrapper,
                episodes,
                seed,
            )
        }
    }
}

/// Fails before training when the agent's input width cannot match the
/// wrapped observation.
pub fn check_dims(cfg: &RunConfig, obs_dim: usize) -> Result<()> {
    let spec = crate::envs::env_spec(&cfg.env)?;
    let expected = crate::wrappers::wrapped_obs_dim(&spec, &cfg.wrapper);
    if expected != obs_dim {
        return Err(Error::Config(format!(
            "{} under {} yields {expected} observation entries, agent expects {obs_dim}",
            cfg.env, cfg.wrapper.mode
        )));
    }
    Ok(())
}
