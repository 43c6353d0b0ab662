//! Oracles and measured checks shared by the integration tests and the
//! acceptance suite. Each check returns the quantity it measures so callers
//! can both assert on it and report it.
#![allow(dead_code)]

use std::path::Path;

use po_suite_core::envs::{make_env, ENV_NAMES};
use po_suite_core::harness::{gaussian_smooth, run_training, AgentConfig, Algo, RunConfig};
use po_suite_core::nn::{Activation, Mlp, Parameters, Tensor};
use po_suite_core::offpolicy::{
    critic_loss_and_grads, sac_actor_objective_and_grads, td3_actor_objective_and_grads, ActorCritic, OffPolicyAlgo,
};
use po_suite_core::ppo::{lambda_return, policy_loss_and_grads, value_loss_and_grads, GaussianPolicy, SegmentEnd};
use po_suite_core::replay::{nstep_return, ReplayBuffer, Transition};
use po_suite_core::seeding::{derive_indexed, rng_from, Rng as SeedRng};
use po_suite_core::wrappers::{PomdpEnv, PomdpMode, WrapperConfig};
use rand::Rng;
use rand_distr::StandardNormal;

const FD_STEP: f64 = 1e-6;

pub fn uniform_matrix(rows: usize, cols: usize, rng: &mut SeedRng) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut SeedRng) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
    )
}

pub fn rows_concat(a: &Tensor, b: &Tensor) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..a.rows())
        .map(|i| a.row(i).iter().chain(b.row(i)).copied().collect())
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Central differences of `f` with respect to every parameter of `p`.
pub fn numeric_grads<P: Parameters + Clone>(p: &P, f: impl Fn(&P) -> f64) -> Vec<f64> {
    let mut probe = p.clone();
    let lens: Vec<usize> = p.params().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, len) in lens.into_iter().enumerate() {
        for j in 0..len {
            let orig = probe.params()[ti].data()[j];
            probe.params_mut()[ti].data_mut()[j] = orig + FD_STEP;
            let up = f(&probe);
            probe.params_mut()[ti].data_mut()[j] = orig - FD_STEP;
            let down = f(&probe);
            probe.params_mut()[ti].data_mut()[j] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over the flattened gradients.
pub fn relative_error(analytic: &[Tensor], numeric: &[f64]) -> f64 {
    let a: Vec<f64> = analytic.iter().flat_map(|t| t.data().to_vec()).collect();
    assert_eq!(a.len(), numeric.len(), "gradient length");
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(numeric).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(&a).max(norm(numeric)).max(1e-12)
}

// ---------------------------------------------------------------------------
// Return oracles

/// `G_t^(n)` by direct summation, truncated at the segment end.
pub fn oracle_nstep(rewards: &[f64], values: &[f64], gamma: f64, t: usize, n: usize, end: SegmentEnd) -> f64 {
    let len = rewards.len();
    let stop = (t + n).min(len);
    let mut g = 0.0;
    for (i, r) in rewards[t..stop].iter().enumerate() {
        g += gamma.powi(i as i32) * r;
    }
    let tail = if stop < len { values[stop] } else { end.value() };
    g + gamma.powi((stop - t) as i32) * tail
}

/// The λ-weighted average of all n-step returns, summed term by term.
pub fn oracle_lambda(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64, end: SegmentEnd) -> Vec<f64> {
    let len = rewards.len();
    (0..len)
        .map(|t| {
            let h = len - t;
            let mut total = 0.0;
            for n in 1..h {
                total += (1.0 - lambda) * lambda.powi(n as i32 - 1) * oracle_nstep(rewards, values, gamma, t, n, end);
            }
            total + lambda.powi(h as i32 - 1) * oracle_nstep(rewards, values, gamma, t, h, end)
        })
        .collect()
}

/// Largest deviation from one of the λ-weight sums over the listed λ values
/// and horizons 1..=100.
pub fn coefficient_identity_max_err() -> f64 {
    let mut worst: f64 = 0.0;
    for lambda in [0.0f64, 0.25, 0.5, 0.9, 0.97, 1.0] {
        for h in 1..=100 {
            let mut s = 0.0;
            for n in 1..h {
                s += (1.0 - lambda) * lambda.powi(n - 1);
            }
            s += lambda.powi(h - 1);
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

pub struct Segment {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub end: SegmentEnd,
}

/// Random segments of length 1..=10 with random values, γ, λ and ending.
pub fn random_segments(count: usize, seed: u64) -> Vec<Segment> {
    let mut rng = rng_from(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(1..=10);
            let end = if rng.random::<bool>() {
                SegmentEnd::Terminal
            } else {
                SegmentEnd::Bootstrap(rng.random_range(-5.0..5.0))
            };
            Segment {
                rewards: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                values: (0..len).map(|_| rng.random_range(-5.0..5.0)).collect(),
                gamma: rng.random_range(0.5..1.0),
                lambda: rng.random_range(0.0..=1.0),
                end,
            }
        })
        .collect()
}

pub fn lambda_bruteforce_max_err(segments: &[Segment]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in segments {
        let fast = lambda_return(&s.rewards, &s.values, s.gamma, s.lambda, s.end);
        let slow = oracle_lambda(&s.rewards, &s.values, s.gamma, s.lambda, s.end);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// `R_t(λ) − V(o_t)` against `Σ_l (γλ)^l δ_{t+l}`.
pub fn delta_sum_max_err(segments: &[Segment]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in segments {
        let ret = lambda_return(&s.rewards, &s.values, s.gamma, s.lambda, s.end);
        let len = s.rewards.len();
        let value_at = |k: usize| if k < len { s.values[k] } else { s.end.value() };
        let delta: Vec<f64> = (0..len)
            .map(|k| s.rewards[k] + s.gamma * value_at(k + 1) - s.values[k])
            .collect();
        for t in 0..len {
            let mut sum = 0.0;
            for l in 0..len - t {
                sum += (s.gamma * s.lambda).powi(l as i32) * delta[t + l];
            }
            worst = worst.max((ret[t] - s.values[t] - sum).abs());
        }
    }
    worst
}

/// Replays `episodes` random episodes (length 1..=20, ending by termination
/// or truncation) into a buffer and compares the stored n-step windows for
/// n = 1..=6 with a discounted-sum oracle. Returns the largest deviation and
/// the number of windows checked.
pub fn nstep_window_max_err(episodes: usize, seed: u64) -> (f64, usize) {
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..episodes {
        let len = rng.random_range(1..=20);
        let terminal = rng.random::<bool>();
        let gamma = rng.random_range(0.5..1.0);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..=len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut buf = ReplayBuffer::new(len, 1, 1);
        for (t, &reward) in rewards.iter().enumerate() {
            buf.store(&Transition {
                obs: vec![t as f64],
                action: vec![0.0],
                reward,
                next_obs: vec![(t + 1) as f64],
                terminal: terminal && t + 1 == len,
                truncated: !terminal && t + 1 == len,
            })
            .unwrap();
        }
        for t in 0..len {
            for n in 1..=6 {
                let w = buf.window(buf.slot(t), n);
                let reached = w.next_obs[0] as usize;
                let got = nstep_return(&w.rewards, gamma, values[reached], w.terminal);
                let m = n.min(len - t);
                let mut want = 0.0;
                for i in 0..m {
                    want += gamma.powi(i as i32) * rewards[t + i];
                }
                if !(terminal && t + m == len) {
                    want += gamma.powi(m as i32) * values[t + m];
                }
                assert_eq!(reached, t + m, "window end");
                worst = worst.max((got - want).abs());
                checked += 1;
            }
        }
    }
    (worst, checked)
}

// ---------------------------------------------------------------------------
// Objective oracles, written with plain forward passes

pub fn critic_oracle(q: &Mlp, sa: &Tensor, y: &[f64]) -> f64 {
    let p = q.forward(sa).unwrap();
    mean(&p.data().iter().zip(y).map(|(p, y)| (p - y).powi(2)).collect::<Vec<_>>())
}

pub fn td3_oracle(policy: &Mlp, q1: &Mlp, obs: &Tensor) -> f64 {
    let a = policy.forward(obs).unwrap();
    mean(q1.forward(&rows_concat(obs, &a)).unwrap().data())
}

/// SAC objective per sample with `log(1 − tanh²)` taken directly.
pub fn sac_oracle(ac: &ActorCritic, policy: &Mlp, obs: &Tensor, noise: &Tensor, alpha: f64) -> f64 {
    let out = policy.forward(obs).unwrap();
    let d = noise.cols();
    let mut total = 0.0;
    for i in 0..obs.rows() {
        let row = out.row(i);
        let mut logp = 0.0;
        let mut action = Vec::new();
        for j in 0..d {
            let ls = row[d + j].clamp(-20.0, 2.0);
            let z = noise.row(i)[j];
            let a = (row[j] + ls.exp() * z).tanh();
            logp += -0.5 * z * z - ls - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - a * a).ln();
            action.push(a);
        }
        let x = Tensor::vector(obs.row(i).iter().chain(&action).copied().collect());
        let q = ac.q1.forward(&x).unwrap().item().min(ac.q2.forward(&x).unwrap().item());
        total += q - alpha * logp;
    }
    total / obs.rows() as f64
}

/// Diagonal Gaussian log-density written out per coordinate.
pub fn gaussian_logp(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum()
}

pub fn ppo_oracle(p: &GaussianPolicy, obs: &Tensor, act: &Tensor, old: &[f64], adv: &[f64], eps: f64) -> f64 {
    let means = p.mean_net.forward(obs).unwrap();
    let mut total = 0.0;
    for i in 0..obs.rows() {
        let ratio = (gaussian_logp(means.row(i), p.log_std.data(), act.row(i)) - old[i]).exp();
        let clipped = ratio.max(1.0 - eps).min(1.0 + eps);
        total += (ratio * adv[i]).min(clipped * adv[i]);
    }
    total / obs.rows() as f64
}

// ---------------------------------------------------------------------------
// Gradient checks over random instances; each returns the worst relative
// error seen.

struct Shape {
    obs: usize,
    act: usize,
    batch: usize,
    hidden: Vec<usize>,
}

fn random_shape(rng: &mut SeedRng) -> Shape {
    let depth = rng.random_range(1..=2);
    Shape {
        obs: rng.random_range(1..=4),
        act: rng.random_range(1..=2),
        batch: rng.random_range(3..=12),
        hidden: (0..depth).map(|_| rng.random_range(4..=10)).collect(),
    }
}

pub fn critic_grad_max_err(instances: usize, seed: u64) -> f64 {
    (0..instances as u64)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(seed, i));
            let s = random_shape(&mut rng);
            let ac = ActorCritic::new(OffPolicyAlgo::Td3, s.obs, s.act, &s.hidden, &mut rng);
            let obs = uniform_matrix(s.batch, s.obs, &mut rng);
            let act = uniform_matrix(s.batch, s.act, &mut rng);
            let y: Vec<f64> = (0..s.batch).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, g1, g2) = critic_loss_and_grads(&ac, &obs, &act, &y).unwrap();
            let sa = rows_concat(&obs, &act);
            let e1 = relative_error(&g1, &numeric_grads(&ac.q1, |q| critic_oracle(q, &sa, &y)));
            let e2 = relative_error(&g2, &numeric_grads(&ac.q2, |q| critic_oracle(q, &sa, &y)));
            e1.max(e2)
        })
        .fold(0.0, f64::max)
}

pub fn td3_actor_grad_max_err(instances: usize, seed: u64) -> f64 {
    (0..instances as u64)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(seed, i));
            let s = random_shape(&mut rng);
            let ac = ActorCritic::new(OffPolicyAlgo::Td3, s.obs, s.act, &s.hidden, &mut rng);
            let obs = uniform_matrix(s.batch, s.obs, &mut rng);
            let (_, grads) = td3_actor_objective_and_grads(&ac, &obs).unwrap();
            relative_error(&grads, &numeric_grads(&ac.policy, |p| -td3_oracle(p, &ac.q1, &obs)))
        })
        .fold(0.0, f64::max)
}

pub fn sac_actor_grad_max_err(instances: usize, seed: u64) -> f64 {
    (0..instances as u64)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(seed, i));
            let s = random_shape(&mut rng);
            let ac = ActorCritic::new(OffPolicyAlgo::Sac, s.obs, s.act, &s.hidden, &mut rng);
            let obs = uniform_matrix(s.batch, s.obs, &mut rng);
            let noise = normal_matrix(s.batch, s.act, &mut rng);
            let alpha = rng.random_range(0.0..0.5);
            let (_, grads) = sac_actor_objective_and_grads(&ac, &obs, &noise, alpha).unwrap();
            let numeric = numeric_grads(&ac.policy, |p| -sac_oracle(&ac, p, &obs, &noise, alpha));
            relative_error(&grads, &numeric)
        })
        .fold(0.0, f64::max)
}

pub fn ppo_policy_grad_max_err(instances: usize, seed: u64) -> f64 {
    (0..instances as u64)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(seed, i));
            let s = random_shape(&mut rng);
            let mut p = GaussianPolicy::new(s.obs, s.act, &s.hidden, -0.5, &mut rng);
            // Move the mean head off its small initial scale so the mean
            // network carries real gradient.
            for layer in p.mean_net.layers_mut() {
                for w in layer.weight.data_mut() {
                    *w = rng.random_range(-1.0..1.0);
                }
            }
            let obs = uniform_matrix(s.batch, s.obs, &mut rng);
            let act = uniform_matrix(s.batch, s.act, &mut rng);
            // Old log-probabilities near the current ones: ratios straddle
            // both clip edges.
            let cur = p.log_prob(&obs, &act).unwrap();
            let old: Vec<f64> = cur.iter().map(|l| l + rng.random_range(-0.4..0.4)).collect();
            let adv: Vec<f64> = (0..s.batch).map(|_| rng.sample(StandardNormal)).collect();
            let (_, grads) = policy_loss_and_grads(&p, &obs, &act, &old, &adv, 0.2).unwrap();
            let numeric = numeric_grads(&p, |q| -ppo_oracle(q, &obs, &act, &old, &adv, 0.2));
            relative_error(&grads, &numeric)
        })
        .fold(0.0, f64::max)
}

pub fn value_grad_max_err(instances: usize, seed: u64) -> f64 {
    (0..instances as u64)
        .map(|i| {
            let mut rng = rng_from(derive_indexed(seed, i));
            let s = random_shape(&mut rng);
            let mut sizes = vec![s.obs];
            sizes.extend(&s.hidden);
            sizes.push(1);
            let v = Mlp::new(&sizes, Activation::Tanh, Activation::Identity, &mut rng);
            let obs = uniform_matrix(s.batch, s.obs, &mut rng);
            let ret: Vec<f64> = (0..s.batch).map(|_| rng.random_range(-10.0..10.0)).collect();
            let (_, grads) = value_loss_and_grads(&v, &obs, &ret).unwrap();
            relative_error(&grads, &numeric_grads(&v, |net| critic_oracle(net, &obs, &ret)))
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Observation transforms

/// Observations and rewards of the bare task, then of the transformed one.
pub type PairedStreams = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Rolls `steps` random actions through the bare task and through the
/// transform, returning both observation and reward streams.
pub fn paired_rollout(env: &str, cfg: WrapperConfig, seed: u64, steps: usize) -> PairedStreams {
    let mut bare = make_env(env).unwrap();
    let mut wrapped = PomdpEnv::new(make_env(env).unwrap(), cfg, derive_indexed(seed, 1)).unwrap();
    let mut act_rng = rng_from(derive_indexed(seed, 2));
    let ad = bare.spec().act_dim;
    let (mut bo, mut br, mut wo, mut wr) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut episode = 0;
    bo.push(bare.reset(derive_indexed(seed, episode)));
    wo.push(wrapped.reset(derive_indexed(seed, episode)));
    for _ in 0..steps {
        let a: Vec<f64> = (0..ad).map(|_| act_rng.random_range(-1.0..=1.0)).collect();
        let b = bare.step(&a).unwrap();
        let w = wrapped.step(&a).unwrap();
        br.push(b.reward);
        wr.push(w.reward);
        assert_eq!(b.done(), w.done());
        if b.done() {
            episode += 1;
            bo.push(bare.reset(derive_indexed(seed, episode)));
            wo.push(wrapped.reset(derive_indexed(seed, episode)));
        } else {
            bo.push(b.observation);
            wo.push(w.observation);
        }
    }
    (bo, br, wo, wr)
}

/// FLK(p=0) and RN(σ=0) are identities, RSM(p=1) zeroes everything, RV
/// drops exactly the velocity entries, and no transform touches rewards.
pub fn wrapper_identities(steps: usize) -> Result<(), String> {
    for (k, env) in ENV_NAMES.iter().enumerate() {
        let spec = make_env(env).unwrap().spec().clone();
        let seed = 100 + k as u64;
        let cases = [
            (
                PomdpMode::Flk,
                WrapperConfig {
                    p_flk: 0.0,
                    ..WrapperConfig::new(PomdpMode::Flk)
                },
            ),
            (
                PomdpMode::Rn,
                WrapperConfig {
                    sigma_rn: 0.0,
                    ..WrapperConfig::new(PomdpMode::Rn)
                },
            ),
            (
                PomdpMode::Rsm,
                WrapperConfig {
                    p_rsm: 1.0,
                    ..WrapperConfig::new(PomdpMode::Rsm)
                },
            ),
            (PomdpMode::Rv, WrapperConfig::new(PomdpMode::Rv)),
        ];
        for (mode, cfg) in cases {
            let (bo, br, wo, wr) = paired_rollout(env, cfg, seed, steps);
            if br.iter().zip(&wr).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(format!("{env}/{mode}: rewards differ from the bare task"));
            }
            for (b, w) in bo.iter().zip(&wo) {
                let ok = match mode {
                    PomdpMode::Flk | PomdpMode::Rn => b.iter().zip(w).all(|(x, y)| x.to_bits() == y.to_bits()),
                    PomdpMode::Rsm => w.len() == b.len() && w.iter().all(|v| *v == 0.0),
                    PomdpMode::Rv => {
                        let kept: Vec<f64> = b
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| !spec.velocity_indices.contains(i))
                            .map(|(_, v)| *v)
                            .collect();
                        w.len() == spec.obs_dim - spec.velocity_indices.len() && *w == kept
                    }
                    PomdpMode::Mdp => unreachable!(),
                };
                if !ok {
                    return Err(format!("{env}/{mode}: observation {w:?} from {b:?}"));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Horizon-one reduction

/// Trains `multi` with n = 1 and its one-step counterpart from the same
/// seed and compares every logged byte except the config echo.
pub fn reduction_identical(multi: Algo, vanilla: Algo, steps: usize, root: &Path) -> Result<(), String> {
    let make = |algo: Algo| {
        let mut c = RunConfig::new("pendulum", PomdpMode::Rv, algo, 1, 31, root.join(algo.as_str())).unwrap();
        c.total_steps = steps;
        c.eval_every = 1000;
        c.eval_episodes = 2;
        if let AgentConfig::Offpolicy(o) = &mut c.agent {
            o.hidden = vec![64, 64];
        }
        c
    };
    let (a, b) = (make(multi), make(vanilla));
    run_training(&a).map_err(|e| e.to_string())?;
    run_training(&b).map_err(|e| e.to_string())?;
    for f in ["eval.csv", "train.csv", "checkpoint.bin"] {
        let x = std::fs::read(a.out_dir.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.out_dir.join(f)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{multi}(1) and {vanilla} differ in {f}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Smoothing

/// Reflects an out-of-range index back into `0..n`, repeating as needed.
fn mirror(mut i: isize, n: isize) -> usize {
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - 1 - i };
    }
    i as usize
}

/// Direct convolution with a freshly built, normalized Gaussian kernel.
pub fn smooth_oracle(x: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).round() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            (-radius..=radius)
                .zip(&weights)
                .map(|(k, w)| w / norm * x[mirror(i + k, n)])
                .sum()
        })
        .collect()
}

/// Worst deviation from the oracle over random series, and the total mass
/// of a smoothed centered impulse.
pub fn smoothing_check(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let len = rng.random_range(1..=300);
        let sigma = [1.0, 2.5, 7.3, 20.0][rng.random_range(0..4)];
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1500.0..0.0)).collect();
        let got = gaussian_smooth(&x, sigma);
        for (a, b) in got.iter().zip(smooth_oracle(&x, sigma)) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut impulse = vec![0.0; 401];
    impulse[200] = 1.0;
    (worst, gaussian_smooth(&impulse, 20.0).iter().sum())
}
