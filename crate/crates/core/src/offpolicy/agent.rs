use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::{OffPolicyAlgo, OffPolicyConfig};
use crate::error::{Error, Result};
use crate::nn::{squashed_sample, Activation, Adam, Checkpoint, Graph, Mlp, SquashedGaussianHead, Tensor};
use crate::replay::{nstep_return, NStepSample, ReplayBuffer};

/// Factor applied to the final policy layer at initialization.
pub const POLICY_OUTPUT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Exploit,
}

/// Online and target networks of TD3 or SAC.
///
/// TD3's policy outputs `tanh`-bounded actions directly. SAC's policy
/// outputs `[mean, log_std]` per action dimension and has no target copy:
/// its bootstrap actions come from the online policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub algo: OffPolicyAlgo,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_targ: Mlp,
    pub q2_targ: Mlp,
    pub policy: Mlp,
    pub policy_targ: Option<Mlp>,
    obs_dim: usize,
    act_dim: usize,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        algo: OffPolicyAlgo,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let q_sizes = widths(obs_dim + act_dim, hidden, 1);
        let q1 = Mlp::new(&q_sizes, Activation::Relu, Activation::Identity, rng);
        let q2 = Mlp::new(&q_sizes, Activation::Relu, Activation::Identity, rng);
        let mut policy = match algo {
            OffPolicyAlgo::Td3 => Mlp::new(
                &widths(obs_dim, hidden, act_dim),
                Activation::Relu,
                Activation::Tanh,
                rng,
            ),
            OffPolicyAlgo::Sac => Mlp::new(
                &widths(obs_dim, hidden, 2 * act_dim),
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
        };
        // Near-zero initial outputs keep early actions centered.
        policy.scale_output_layer(POLICY_OUTPUT_SCALE);
        let policy_targ = (algo == OffPolicyAlgo::Td3).then(|| policy.clone());
        Self {
            algo,
            q1_targ: q1.clone(),
            q2_targ: q2.clone(),
            q1,
            q2,
            policy,
            policy_targ,
            obs_dim,
            act_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Deterministic action: `μ(o)` for TD3, `tanh(mean)` for SAC.
    pub fn exploit(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let out = self.policy.forward(&Tensor::vector(obs.to_vec()))?.into_data();
        Ok(match self.algo {
            OffPolicyAlgo::Td3 => out,
            OffPolicyAlgo::Sac => SquashedGaussianHead::from_output(&out).mode(),
        })
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::Dimension(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        Ok(())
    }

    /// Soft-updates every target network toward its online network.
    pub fn polyak_update(&mut self, rho: f64) -> Result<()> {
        self.q1_targ.polyak_update(&self.q1, rho)?;
        self.q2_targ.polyak_update(&self.q2, rho)?;
        if let Some(t) = self.policy_targ.as_mut() {
            t.polyak_update(&self.policy, rho)?;
        }
        Ok(())
    }
}

/// Stacks equal-length rows into a `[rows, cols]` tensor.
pub(crate) fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, cols: usize) -> Tensor {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        assert_eq!(r.len(), cols, "ragged batch");
        data.extend_from_slice(r);
        n += 1;
    }
    Tensor::matrix(n, cols, data)
}

/// Row-wise `[a | b]`.
fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut data = Vec::with_capacity(m * (ca + cb));
    for i in 0..m {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    Tensor::matrix(m, ca + cb, data)
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Bootstrapped n-step targets for a sampled batch.
///
/// Per window of length `m`: `Σ γ^i r_i`, plus, unless the window ended on a
/// termination, `γ^m · (min_i Q_i⁻(o', a⁻) − α·log π(a⁻|o'))`. TD3 takes
/// `a⁻` from the target policy with clipped Gaussian smoothing; SAC samples
/// it from the online policy. The entropy bonus appears only at the
/// bootstrap observation.
pub fn compute_target_q<R: Rng + ?Sized>(
    batch: &[NStepSample],
    ac: &ActorCritic,
    cfg: &OffPolicyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if let Some(bad) = batch.iter().find(|s| s.len() > cfg.n || s.is_empty()) {
        return Err(Error::Contract(format!(
            "window of length {} for n = {}",
            bad.len(),
            cfg.n
        )));
    }
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let k = batch.len();
    let ad = ac.act_dim;
    let next_obs = stack(batch.iter().map(|s| s.next_obs.as_slice()), ac.obs_dim);

    let (next_act, logp) = match ac.algo {
        OffPolicyAlgo::Td3 => {
            let targ = ac
                .policy_targ
                .as_ref()
                .ok_or_else(|| Error::Contract("TD3 without a target policy".into()))?;
            let mu = targ.forward(&next_obs)?;
            let noise = normal_matrix(k, ad, rng);
            let (sigma, clip) = (cfg.target_noise, cfg.noise_clip);
            let act = mu.zip_map(&noise, |m, z| (m + (sigma * z).clamp(-clip, clip)).clamp(-1.0, 1.0));
            (act, vec![0.0; k])
        }
        OffPolicyAlgo::Sac => {
            let out = ac.policy.forward(&next_obs)?;
            let noise = normal_matrix(k, ad, rng);
            let mut acts = Vec::with_capacity(k * ad);
            let mut logps = Vec::with_capacity(k);
            for i in 0..k {
                let head = SquashedGaussianHead::from_output(out.row(i));
                let (a, lp) = head.sample_with_noise(noise.row(i));
                acts.extend(a);
                logps.push(lp);
            }
            (Tensor::matrix(k, ad, acts), logps)
        }
    };

    let sa = concat(&next_obs, &next_act);
    let q1 = ac.q1_targ.forward(&sa)?;
    let q2 = ac.q2_targ.forward(&sa)?;
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let q_min = q1.data()[i].min(q2.data()[i]);
            let soft = q_min - cfg.alpha * logp[i];
            nstep_return(&s.rewards, cfg.gamma, soft, s.terminal)
        })
        .collect();
    if let Some(bad) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("target q for sample {bad}")));
    }
    Ok(targets)
}

/// Summed twin-critic MSE and the gradients for each critic.
pub fn critic_loss_and_grads(
    ac: &ActorCritic,
    obs: &Tensor,
    act: &Tensor,
    targets: &[f64],
) -> Result<(f64, Vec<Tensor>, Vec<Tensor>)> {
    let k = obs.rows();
    if targets.len() != k || act.rows() != k {
        return Err(Error::Dimension(format!(
            "critic batch of {k} observations, {} actions, {} targets",
            act.rows(),
            targets.len()
        )));
    }
    let mut g = Graph::new();
    let x = g.constant(concat(obs, act));
    let y = g.constant(Tensor::matrix(k, 1, targets.to_vec()));
    let q1 = ac.q1.bind(&mut g);
    let q2 = ac.q2.bind(&mut g);
    let p1 = q1.forward(&mut g, x);
    let p2 = q2.forward(&mut g, x);
    let d1 = g.sub(p1, y);
    let d2 = g.sub(p2, y);
    let s1 = g.square(d1);
    let s2 = g.square(d2);
    let l1 = g.mean(s1);
    let l2 = g.mean(s2);
    let loss = g.add(l1, l2);
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("critic loss is {value}")));
    }
    let mut grads = g.backward(loss)?;
    Ok((value, q1.grads(&mut grads), q2.grads(&mut grads)))
}

/// `mean Q1(o, μ(o))` and its gradient with respect to the policy. The
/// critic enters the graph as constants.
pub fn td3_actor_objective_and_grads(ac: &ActorCritic, obs: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let o = g.constant(obs.clone());
    let pi = ac.policy.bind(&mut g);
    let q1 = ac.q1.bind_frozen(&mut g);
    let a = pi.forward(&mut g, o);
    let sa = g.concat_cols(o, a);
    let q = q1.forward(&mut g, sa);
    let objective = g.mean(q);
    let loss = g.neg(objective);
    let value = g.value(objective).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("actor objective is {value}")));
    }
    let mut grads = g.backward(loss)?;
    Ok((value, pi.grads(&mut grads)))
}

/// `mean(min_i Q_i(o, a) − α·log π(a|o))` for reparameterized actions
/// `a = tanh(mean + std·noise)`, and its gradient with respect to the
/// policy. `noise` is `[B, act_dim]`.
pub fn sac_actor_objective_and_grads(
    ac: &ActorCritic,
    obs: &Tensor,
    noise: &Tensor,
    alpha: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let o = g.constant(obs.clone());
    let pi = ac.policy.bind(&mut g);
    let q1 = ac.q1.bind_frozen(&mut g);
    let q2 = ac.q2.bind_frozen(&mut g);
    let out = pi.forward(&mut g, o);
    let (a, logp) = squashed_sample(&mut g, out, noise);
    let sa = g.concat_cols(o, a);
    let v1 = q1.forward(&mut g, sa);
    let v2 = q2.forward(&mut g, sa);
    let q = g.minimum(v1, v2);
    let ent = g.scale(logp, alpha);
    let per_sample = g.sub(q, ent);
    let objective = g.mean(per_sample);
    let loss = g.neg(objective);
    let value = g.value(objective).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("actor objective is {value}")));
    }
    let mut grads = g.backward(loss)?;
    Ok((value, pi.grads(&mut grads)))
}

/// Losses from one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub q_loss: f64,
    pub q_target_mean: f64,
    /// Present when the actor was updated in this step.
    pub pi_objective: Option<f64>,
}

/// TD3/SAC learner: networks, optimizers and the update schedule.
#[derive(Debug, Clone)]
pub struct OffPolicyAgent {
    cfg: OffPolicyConfig,
    ac: ActorCritic,
    q1_opt: Adam,
    q2_opt: Adam,
    pi_opt: Adam,
    critic_updates: u64,
    actor_updates: u64,
}

impl OffPolicyAgent {
    pub fn new<R: Rng + ?Sized>(
        cfg: OffPolicyConfig,
        obs_dim: usize,
        act_dim: usize,
        init_rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Dimension("zero-width observation or action".into()));
        }
        let ac = ActorCritic::new(cfg.algo, obs_dim, act_dim, &cfg.hidden, init_rng);
        Ok(Self {
            q1_opt: Adam::new(&ac.q1, cfg.q_lr),
            q2_opt: Adam::new(&ac.q2, cfg.q_lr),
            pi_opt: Adam::new(&ac.policy, cfg.pi_lr),
            cfg,
            ac,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &OffPolicyConfig {
        &self.cfg
    }

    pub fn actor_critic(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn actor_critic_mut(&mut self) -> &mut ActorCritic {
        &mut self.ac
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn uniform_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.ac.act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    /// Policy action. Explore adds clipped Gaussian noise (TD3) or samples
    /// the squashed Gaussian (SAC); exploit is deterministic.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], mode: ActionMode, rng: &mut R) -> Result<Vec<f64>> {
        if mode == ActionMode::Exploit {
            return self.ac.exploit(obs);
        }
        self.ac.check_obs(obs)?;
        let out = self.ac.policy.forward(&Tensor::vector(obs.to_vec()))?.into_data();
        Ok(match self.cfg.algo {
            OffPolicyAlgo::Td3 => {
                let noise = Normal::new(0.0, self.cfg.act_noise).map_err(|e| Error::Config(e.to_string()))?;
                out.iter().map(|&m| (m + noise.sample(rng)).clamp(-1.0, 1.0)).collect()
            }
            OffPolicyAlgo::Sac => SquashedGaussianHead::from_output(&out).sample(rng).0,
        })
    }

    /// Training-time action: uniform for the first `start_steps`
    /// interactions, then exploratory.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], env_steps: usize, rng: &mut R) -> Result<Vec<f64>> {
        if env_steps < self.cfg.start_steps {
            self.ac.check_obs(obs)?;
            Ok(self.uniform_action(rng))
        } else {
            self.select_action(obs, ActionMode::Explore, rng)
        }
    }

    /// True when a burst of `update_every` gradient steps is due after the
    /// `env_steps`-th interaction.
    pub fn update_due(&self, env_steps: usize) -> bool {
        env_steps >= self.cfg.update_after && env_steps.is_multiple_of(self.cfg.update_every)
    }

    /// One critic step on precomputed targets. Returns the summed MSE.
    pub fn critic_update(&mut self, batch: &[NStepSample], targets: &[f64]) -> Result<f64> {
        let (obs, act) = self.batch_inputs(batch);
        let (loss, g1, g2) = critic_loss_and_grads(&self.ac, &obs, &act, targets)?;
        self.q1_opt.step(&mut self.ac.q1, &g1)?;
        self.q2_opt.step(&mut self.ac.q2, &g2)?;
        self.critic_updates += 1;
        Ok(loss)
    }

    /// One TD3 policy step followed by the target soft update.
    pub fn actor_update_td3(&mut self, batch: &[NStepSample]) -> Result<f64> {
        let (obs, _) = self.batch_inputs(batch);
        let (objective, grads) = td3_actor_objective_and_grads(&self.ac, &obs)?;
        self.pi_opt.step(&mut self.ac.policy, &grads)?;
        self.actor_updates += 1;
        self.ac.polyak_update(self.cfg.polyak)?;
        Ok(objective)
    }

    /// One SAC policy step with fresh reparameterization noise, followed
    /// by the target soft update.
    pub fn actor_update_sac<R: Rng + ?Sized>(&mut self, batch: &[NStepSample], alpha: f64, rng: &mut R) -> Result<f64> {
        let (obs, _) = self.batch_inputs(batch);
        let noise = normal_matrix(obs.rows(), self.ac.act_dim, rng);
        let (objective, grads) = sac_actor_objective_and_grads(&self.ac, &obs, &noise, alpha)?;
        self.pi_opt.step(&mut self.ac.policy, &grads)?;
        self.actor_updates += 1;
        self.ac.polyak_update(self.cfg.polyak)?;
        Ok(objective)
    }

    /// A full gradient step: sample, compute targets, update both critics
    /// and, on schedule, the actor and targets.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<UpdateStats> {
        let batch = buffer.sample_nstep(self.cfg.batch_size, self.cfg.n, rng)?;
        let targets = compute_target_q(&batch, &self.ac, &self.cfg, rng)?;
        let q_target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let q_loss = self.critic_update(&batch, &targets)?;
        let pi_objective = match self.cfg.algo {
            OffPolicyAlgo::Td3 => {
                if self.critic_updates.is_multiple_of(self.cfg.policy_delay as u64) {
                    Some(self.actor_update_td3(&batch)?)
                } else {
                    None
                }
            }
            OffPolicyAlgo::Sac => Some(self.actor_update_sac(&batch, self.cfg.alpha, rng)?),
        };
        Ok(UpdateStats {
            q_loss,
            q_target_mean,
            pi_objective,
        })
    }

    fn batch_inputs(&self, batch: &[NStepSample]) -> (Tensor, Tensor) {
        let obs = stack(batch.iter().map(|s| s.obs.as_slice()), self.ac.obs_dim);
        let act = stack(batch.iter().map(|s| s.action.as_slice()), self.ac.act_dim);
        (obs, act)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_params("q1", &self.ac.q1);
        ck.insert_params("q2", &self.ac.q2);
        ck.insert_params("q1_targ", &self.ac.q1_targ);
        ck.insert_params("q2_targ", &self.ac.q2_targ);
        ck.insert_params("pi", &self.ac.policy);
        if let Some(t) = &self.ac.policy_targ {
            ck.insert_params("pi_targ", t);
        }
        ck.insert_adam("q1_opt", &self.q1_opt);
        ck.insert_adam("q2_opt", &self.q2_opt);
        ck.insert_adam("pi_opt", &self.pi_opt);
        ck.insert(
            "counters",
            Tensor::vector(vec![self.critic_updates as f64, self.actor_updates as f64]),
        );
        ck
    }

    /// Restores networks, optimizer moments and counters saved by
    /// [`OffPolicyAgent::to_checkpoint`] into an agent of the same shape.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let mut next = self.clone();
        ck.load_params("q1", &mut next.ac.q1)?;
        ck.load_params("q2", &mut next.ac.q2)?;
        ck.load_params("q1_targ", &mut next.ac.q1_targ)?;
        ck.load_params("q2_targ", &mut next.ac.q2_targ)?;
        ck.load_params("pi", &mut next.ac.policy)?;
        if let Some(t) = next.ac.policy_targ.as_mut() {
            ck.load_params("pi_targ", t)?;
        }
        ck.load_adam("q1_opt", &mut next.q1_opt)?;
        ck.load_adam("q2_opt", &mut next.q2_opt)?;
        ck.load_adam("pi_opt", &mut next.pi_opt)?;
        let counters = ck.get("counters")?.data();
        if counters.len() != 2 {
            return Err(Error::Contract("bad counters record".into()));
        }
        next.critic_updates = counters[0] as u64;
        next.actor_updates = counters[1] as u64;
        *self = next;
        Ok(())
    }
}
