use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{PpoConfig, ReturnMode};
use super::returns::{discounted_returns, lambda_return, normalize_advantages, nstep_returns, SegmentEnd};
use crate::error::{Error, Result};
use crate::nn::{
    diag_gaussian_entropy, diag_gaussian_log_prob, diag_gaussian_log_prob_row, Activation, Adam, BoundMlp, Checkpoint,
    Graph, Mlp, Parameters, Tensor, Var,
};

/// Factor applied to the mean network's final layer at initialization.
const POLICY_OUTPUT_SCALE: f64 = 1e-2;

/// Diagonal Gaussian policy with an MLP mean and a state-independent
/// log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    /// `[1, act_dim]`.
    pub log_std: Tensor,
}

impl Parameters for GaussianPolicy {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.mean_net.params();
        p.push(&self.log_std);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.mean_net.params_mut();
        p.push(&mut self.log_std);
        p
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        log_std_init: f64,
        rng: &mut R,
    ) -> Self {
        let mut mean_net = Mlp::new(
            &widths(obs_dim, hidden, act_dim),
            Activation::Tanh,
            Activation::Identity,
            rng,
        );
        mean_net.scale_output_layer(POLICY_OUTPUT_SCALE);
        Self {
            mean_net,
            log_std: Tensor::full(&[1, act_dim], log_std_init),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.in_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.mean_net.out_dim()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean_net.forward(&Tensor::vector(obs.to_vec()))?.into_data())
    }

    /// Draws an action and returns it with its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(obs)?;
        let ls = self.log_std.data();
        let action: Vec<f64> = mean
            .iter()
            .zip(ls)
            .map(|(&m, &l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let logp = diag_gaussian_log_prob_row(&mean, ls, &action);
        Ok((action, logp))
    }

    /// Log-densities of a batch of actions, `[B]`.
    pub fn log_prob(&self, obs: &Tensor, actions: &Tensor) -> Result<Vec<f64>> {
        let mean = self.mean_net.forward(obs)?;
        Ok((0..obs.rows())
            .map(|i| diag_gaussian_log_prob_row(mean.row(i), self.log_std.data(), actions.row(i)))
            .collect())
    }

    pub fn entropy(&self) -> f64 {
        diag_gaussian_entropy(self.log_std.data())
    }

    fn bind(&self, g: &mut Graph) -> (BoundMlp, Var) {
        let net = self.mean_net.bind(g);
        let ls = g.param(self.log_std.clone());
        (net, ls)
    }
}

/// Mean over rows of `KL(N(m_old, σ_old²) ‖ N(m_new, σ_new²))` for diagonal
/// Gaussians with shared, state-independent stds.
pub fn gaussian_kl(old_mean: &Tensor, old_log_std: &[f64], new_mean: &Tensor, new_log_std: &[f64]) -> f64 {
    let rows = old_mean.rows();
    let mut total = 0.0;
    for i in 0..rows {
        for (j, (&mo, &mn)) in old_mean.row(i).iter().zip(new_mean.row(i)).enumerate() {
            let (lo, ln) = (old_log_std[j], new_log_std[j]);
            let var_ratio = (2.0 * (lo - ln)).exp();
            let diff = (mo - mn) / ln.exp();
            total += ln - lo + 0.5 * (var_ratio + diff * diff) - 0.5;
        }
    }
    total / rows as f64
}

/// Clipped surrogate `mean min(ρA, clip(ρ, 1−ε, 1+ε)A)` on plain values.
pub fn ppo_policy_loss(ratios: &[f64], advantages: &[f64], eps: f64) -> f64 {
    assert_eq!(ratios.len(), advantages.len());
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a))
        .sum();
    total / ratios.len() as f64
}

/// Diagnostics from one evaluation of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateInfo {
    /// The surrogate objective (to be maximized).
    pub objective: f64,
    /// Fraction of samples whose ratio lies outside `[1−ε, 1+ε]`.
    pub clip_frac: f64,
}

/// The clipped surrogate and its gradient with respect to the policy's
/// parameters, for descending `−objective`.
pub fn policy_loss_and_grads(
    policy: &GaussianPolicy,
    obs: &Tensor,
    actions: &Tensor,
    old_logp: &[f64],
    advantages: &[f64],
    eps: f64,
) -> Result<(SurrogateInfo, Vec<Tensor>)> {
    let b = obs.rows();
    if actions.rows() != b || old_logp.len() != b || advantages.len() != b {
        return Err(Error::Dimension("ragged PPO batch".into()));
    }
    let mut g = Graph::new();
    let o = g.constant(obs.clone());
    let (net, ls) = policy.bind(&mut g);
    let mean = net.forward(&mut g, o);
    let logp = diag_gaussian_log_prob(&mut g, mean, ls, actions);
    let old = g.constant(Tensor::matrix(b, 1, old_logp.to_vec()));
    let adv = g.constant(Tensor::matrix(b, 1, advantages.to_vec()));
    let log_ratio = g.sub(logp, old);
    let ratio = g.exp(log_ratio);
    let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let surr1 = g.mul(ratio, adv);
    let surr2 = g.mul(clipped, adv);
    let surr = g.minimum(surr1, surr2);
    let objective = g.mean(surr);
    let loss = g.neg(objective);

    let value = g.value(objective).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("PPO surrogate is {value}")));
    }
    let clip_frac = g
        .value(ratio)
        .data()
        .iter()
        .filter(|&&r| r > 1.0 + eps || r < 1.0 - eps)
        .count() as f64
        / b as f64;
    let mut grads = g.backward(loss)?;
    let mut out = net.grads(&mut grads);
    out.push(grads.take(ls));
    Ok((
        SurrogateInfo {
            objective: value,
            clip_frac,
        },
        out,
    ))
}

/// Mean squared error of `v` against `returns`, with its gradient.
pub fn value_loss_and_grads(v: &Mlp, obs: &Tensor, returns: &[f64]) -> Result<(f64, Vec<Tensor>)> {
    let b = obs.rows();
    if returns.len() != b {
        return Err(Error::Dimension("ragged value batch".into()));
    }
    let mut g = Graph::new();
    let o = g.constant(obs.clone());
    let y = g.constant(Tensor::matrix(b, 1, returns.to_vec()));
    let net = v.bind(&mut g);
    let pred = net.forward(&mut g, o);
    let diff = g.sub(pred, y);
    let sq = g.square(diff);
    let loss = g.mean(sq);
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("value loss is {value}")));
    }
    let mut grads = g.backward(loss)?;
    Ok((value, net.grads(&mut grads)))
}

/// On-policy experience for one epoch, split into episode segments.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    obs_dim: usize,
    act_dim: usize,
    gamma: f64,
    lambda: f64,
    mode: ReturnMode,
    n: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    rew: Vec<f64>,
    val: Vec<f64>,
    logp: Vec<f64>,
    adv: Vec<f64>,
    ret: Vec<f64>,
    path_start: usize,
}

/// A finished epoch ready for the update.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub obs: Tensor,
    pub actions: Tensor,
    pub logp: Vec<f64>,
    /// Normalized when their spread allows it.
    pub advantages: Vec<f64>,
    /// Discounted rewards-to-go used as value targets.
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(cfg: &PpoConfig, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            mode: cfg.return_mode,
            n: cfg.n,
            obs: Vec::new(),
            act: Vec::new(),
            rew: Vec::new(),
            val: Vec::new(),
            logp: Vec::new(),
            adv: Vec::new(),
            ret: Vec::new(),
            path_start: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rew.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rew.is_empty()
    }

    pub fn store(&mut self, obs: &[f64], action: &[f64], reward: f64, value: f64, logp: f64) -> Result<()> {
        if obs.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(Error::Dimension(format!(
                "rollout step with obs {} / action {}, expected {} / {}",
                obs.len(),
                action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        self.obs.extend_from_slice(obs);
        self.act.extend_from_slice(action);
        self.rew.push(reward);
        self.val.push(value);
        self.logp.push(logp);
        Ok(())
    }

    /// Closes the current episode segment and computes its advantages and
    /// value targets.
    pub fn finish_path(&mut self, end: SegmentEnd) {
        let range = self.path_start..self.rew.len();
        let rews = &self.rew[range.clone()];
        let vals = &self.val[range];
        let returns = match self.mode {
            ReturnMode::Lambda => lambda_return(rews, vals, self.gamma, self.lambda, end),
            ReturnMode::Nstep => nstep_returns(rews, vals, self.gamma, self.n, end),
        };
        self.adv.extend(returns.iter().zip(vals).map(|(r, v)| r - v));
        self.ret.extend(discounted_returns(rews, self.gamma, end));
        self.path_start = self.rew.len();
    }

    /// Hands out the epoch's data and clears the buffer.
    pub fn take(&mut self) -> Result<RolloutBatch> {
        if self.path_start != self.rew.len() {
            return Err(Error::Contract("rollout has an unfinished episode segment".into()));
        }
        if self.is_empty() {
            return Err(Error::NotReady("empty rollout".into()));
        }
        let b = self.len();
        let mut advantages = std::mem::take(&mut self.adv);
        normalize_advantages(&mut advantages);
        let batch = RolloutBatch {
            obs: Tensor::matrix(b, self.obs_dim, std::mem::take(&mut self.obs)),
            actions: Tensor::matrix(b, self.act_dim, std::mem::take(&mut self.act)),
            logp: std::mem::take(&mut self.logp),
            advantages,
            returns: std::mem::take(&mut self.ret),
        };
        self.rew.clear();
        self.val.clear();
        self.path_start = 0;
        Ok(batch)
    }
}

/// Per-epoch diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Surrogate objective before the first policy step.
    pub pi_objective: f64,
    /// Value loss before the first value step.
    pub v_loss: f64,
    /// KL(old ‖ new) after the policy steps.
    pub kl: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub pi_steps: usize,
    pub stopped_early: bool,
}

/// One step's interaction output.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoStep {
    pub action: Vec<f64>,
    pub value: f64,
    pub logp: f64,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    cfg: PpoConfig,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pi_opt: Adam,
    v_opt: Adam,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(cfg: PpoConfig, obs_dim: usize, act_dim: usize, init_rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Dimension("zero-width observation or action".into()));
        }
        let policy = GaussianPolicy::new(obs_dim, act_dim, &cfg.hidden, cfg.log_std_init, init_rng);
        let value = Mlp::new(
            &widths(obs_dim, &cfg.hidden, 1),
            Activation::Tanh,
            Activation::Identity,
            init_rng,
        );
        Ok(Self {
            pi_opt: Adam::new(&policy, cfg.pi_lr),
            v_opt: Adam::new(&value, cfg.v_lr),
            cfg,
            policy,
            value,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn new_buffer(&self) -> RolloutBuffer {
        RolloutBuffer::new(&self.cfg, self.policy.obs_dim(), self.policy.act_dim())
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.policy.obs_dim() {
            return Err(Error::Dimension(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.policy.obs_dim()
            )));
        }
        Ok(())
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64> {
        self.check_obs(obs)?;
        Ok(self.value.forward(&Tensor::vector(obs.to_vec()))?.item())
    }

    /// Samples an action for collection. The returned action is unclipped;
    /// environments clip to their bounds.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PpoStep> {
        self.check_obs(obs)?;
        let (action, logp) = self.policy.sample(obs, rng)?;
        Ok(PpoStep {
            action,
            value: self.value_of(obs)?,
            logp,
        })
    }

    /// The mean action, clipped to `[-1, 1]`.
    pub fn exploit(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        Ok(self.policy.mean(obs)?.into_iter().map(|m| m.clamp(-1.0, 1.0)).collect())
    }

    /// Policy steps with KL early stopping, then value regression.
    ///
    /// Before each policy step the exact KL between the pre-update and the
    /// current policy is checked against `1.5 · target_kl`.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<EpochStats> {
        let eps = self.cfg.clip_eps;
        let old_mean = self.policy.mean_net.forward(&batch.obs)?;
        let old_log_std = self.policy.log_std.data().to_vec();
        let kl_now = |p: &GaussianPolicy| -> Result<f64> {
            let mean = p.mean_net.forward(&batch.obs)?;
            let kl = gaussian_kl(&old_mean, &old_log_std, &mean, p.log_std.data());
            if !kl.is_finite() {
                return Err(Error::NonFinite(format!("policy KL is {kl}")));
            }
            Ok(kl)
        };

        let mut pi_objective = None;
        let mut clip_frac = 0.0;
        let mut pi_steps = 0;
        let mut stopped_early = false;
        for _ in 0..self.cfg.train_pi_iters {
            let (info, grads) = policy_loss_and_grads(
                &self.policy,
                &batch.obs,
                &batch.actions,
                &batch.logp,
                &batch.advantages,
                eps,
            )?;
            pi_objective.get_or_insert(info.objective);
            clip_frac = info.clip_frac;
            if kl_now(&self.policy)? > 1.5 * self.cfg.target_kl {
                stopped_early = true;
                break;
            }
            self.pi_opt.step(&mut self.policy, &grads)?;
            pi_steps += 1;
        }
        let kl = kl_now(&self.policy)?;

        let mut v_loss = None;
        for _ in 0..self.cfg.train_v_iters {
            let (loss, grads) = value_loss_and_grads(&self.value, &batch.obs, &batch.returns)?;
            v_loss.get_or_insert(loss);
            self.v_opt.step(&mut self.value, &grads)?;
        }
        let v_loss = match v_loss {
            Some(l) => l,
            None => value_loss_and_grads(&self.value, &batch.obs, &batch.returns)?.0,
        };
        let pi_objective = match pi_objective {
            Some(o) => o,
            None => ppo_policy_loss(&vec![1.0; batch.advantages.len()], &batch.advantages, eps),
        };

        Ok(EpochStats {
            pi_objective,
            v_loss,
            kl,
            entropy: self.policy.entropy(),
            clip_frac,
            pi_steps,
            stopped_early,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_params("pi", &self.policy);
        ck.insert_params("v", &self.value);
        ck.insert_adam("pi_opt", &self.pi_opt);
        ck.insert_adam("v_opt", &self.v_opt);
        ck
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let mut next = self.clone();
        ck.load_params("pi", &mut next.policy)?;
        ck.load_params("v", &mut next.value)?;
        ck.load_adam("pi_opt", &mut next.pi_opt)?;
        ck.load_adam("v_opt", &mut next.v_opt)?;
        *self = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;

    #[test]
    fn clip_examples() {
        assert_eq!(ppo_policy_loss(&[2.0], &[1.0], 0.2), 1.2);
        assert_eq!(ppo_policy_loss(&[2.0], &[-1.0], 0.2), -2.0);
        assert_eq!(ppo_policy_loss(&[1.0, 1.0], &[0.5, -1.5], 0.2), -0.5);
    }

    #[test]
    fn kl_is_zero_for_identical_and_positive_otherwise() {
        let m = Tensor::matrix(2, 1, vec![0.1, -0.3]);
        assert_eq!(gaussian_kl(&m, &[-0.5], &m, &[-0.5]), 0.0);
        let m2 = Tensor::matrix(2, 1, vec![0.2, -0.3]);
        assert!(gaussian_kl(&m, &[-0.5], &m2, &[-0.4]) > 0.0);
    }

    fn tiny_batch(agent: &PpoAgent, adv: Vec<f64>) -> RolloutBatch {
        let mut rng = rng_from(4);
        let obs: Vec<f64> = (0..adv.len() * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obs = Tensor::matrix(adv.len(), 3, obs);
        let acts: Vec<f64> = (0..adv.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actions = Tensor::matrix(adv.len(), 1, acts);
        let logp = agent.policy.log_prob(&obs, &actions).unwrap();
        RolloutBatch {
            obs,
            actions,
            logp,
            returns: vec![0.0; adv.len()],
            advantages: adv,
        }
    }

    #[test]
    fn zero_target_kl_takes_exactly_one_step() {
        let cfg = PpoConfig {
            target_kl: 0.0,
            hidden: vec![8],
            ..Default::default()
        };
        let mut agent = PpoAgent::new(cfg, 3, 1, &mut rng_from(1)).unwrap();
        let batch = tiny_batch(&agent, vec![1.0, -0.5, 0.25, 2.0]);
        let stats = agent.update(&batch).unwrap();
        assert_eq!(stats.pi_steps, 1);
        assert!(stats.stopped_early);
        assert!(stats.kl > 0.0);
        assert!((0.0..=1.0).contains(&stats.clip_frac));
        assert!(stats.entropy.is_finite());
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let cfg = PpoConfig {
            hidden: vec![8],
            train_pi_iters: 5,
            ..Default::default()
        };
        let mut agent = PpoAgent::new(cfg, 3, 1, &mut rng_from(1)).unwrap();
        let before = agent.policy.clone();
        let batch = tiny_batch(&agent, vec![0.0; 4]);
        let stats = agent.update(&batch).unwrap();
        assert_eq!(stats.pi_steps, 5);
        assert_eq!(agent.policy, before);
    }

    #[test]
    fn buffer_segments_and_normalization() {
        let cfg = PpoConfig {
            gamma: 0.5,
            lambda: 1.0,
            ..Default::default()
        };
        let mut buf = RolloutBuffer::new(&cfg, 1, 1);
        buf.store(&[0.0], &[0.0], 1.0, 0.0, 0.0).unwrap();
        buf.store(&[0.0], &[0.0], 1.0, 0.0, 0.0).unwrap();
        assert!(buf.take().is_err());
        buf.finish_path(SegmentEnd::Bootstrap(2.0));
        buf.store(&[0.0], &[0.0], 3.0, 0.0, 0.0).unwrap();
        buf.finish_path(SegmentEnd::Terminal);
        let batch = buf.take().unwrap();
        assert_eq!(batch.returns, vec![2.0, 2.0, 3.0]);
        let mean = batch.advantages.iter().sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!(buf.is_empty());
    }

    #[test]
    fn exploit_is_deterministic_and_bounded() {
        let agent = PpoAgent::new(PpoConfig::default(), 3, 2, &mut rng_from(1)).unwrap();
        let a = agent.exploit(&[5.0, -5.0, 0.0]).unwrap();
        assert_eq!(a, agent.exploit(&[5.0, -5.0, 0.0]).unwrap());
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(agent.exploit(&[0.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = PpoAgent::new(
            PpoConfig {
                hidden: vec![8],
                ..Default::default()
            },
            3,
            1,
            &mut rng_from(1),
        )
        .unwrap();
        let batch = tiny_batch(&agent, vec![1.0, -1.0, 0.5]);
        agent.update(&batch).unwrap();
        let ck = agent.to_checkpoint();
        let mut other = PpoAgent::new(
            PpoConfig {
                hidden: vec![8],
                ..Default::default()
            },
            3,
            1,
            &mut rng_from(2),
        )
        .unwrap();
        other.load_checkpoint(&ck).unwrap();
        assert_eq!(other.policy, agent.policy);
        assert_eq!(other.value, agent.value);
    }
}
