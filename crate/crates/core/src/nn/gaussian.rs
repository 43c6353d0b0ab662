//! Gaussian policy heads: the tanh-squashed head used by SAC and the plain
//! diagonal Gaussian used by PPO.

use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::{softplus, Graph, Var};
use super::tensor::Tensor;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;
const LN_2: f64 = std::f64::consts::LN_2;

/// `log(1 - tanh(x)^2)` via `2·(log 2 − x − softplus(−2x))`.
pub fn log_tanh_jacobian(x: f64) -> f64 {
    2.0 * (LN_2 - x - softplus(-2.0 * x))
}

/// Diagonal Gaussian pushed through `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianHead {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl SquashedGaussianHead {
    /// Clamps `log_std` into `[-20, 2]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean/log-std length");
        let log_std = log_std.into_iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Self { mean, log_std }
    }

    /// Splits a raw network output row `[mean..., log_std...]`.
    pub fn from_output(row: &[f64]) -> Self {
        let d = row.len() / 2;
        Self::new(row[..d].to_vec(), row[d..].to_vec())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `tanh(mean)`, the deterministic action.
    pub fn mode(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let noise: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_with_noise(&noise)
    }

    /// Reparameterized sample `tanh(mean + std·z)` for the given `z`, with
    /// its log-density.
    pub fn sample_with_noise(&self, noise: &[f64]) -> (Vec<f64>, f64) {
        let mut logp = 0.0;
        let action = self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((&mu, &ls), &z)| {
                let pre = mu + ls.exp() * z;
                logp += -0.5 * z * z - ls - HALF_LOG_2PI - log_tanh_jacobian(pre);
                pre.tanh()
            })
            .collect();
        (action, logp)
    }
}

/// Graph version of the squashed sample for a batch.
///
/// `output` is the policy network's `[B, 2·d]` output (means then raw
/// log-stds), `noise` a constant `[B, d]` standard-normal draw. Returns the
/// `[B, d]` actions and `[B, 1]` log-densities.
pub fn squashed_sample(g: &mut Graph, output: Var, noise: &Tensor) -> (Var, Var) {
    let d = g.value(output).cols() / 2;
    assert_eq!(noise.cols(), d, "noise width");
    let mean = g.slice_cols(output, 0, d);
    let raw_log_std = g.slice_cols(output, d, 2 * d);
    let log_std = g.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
    let std = g.exp(log_std);
    let z = g.constant(noise.clone());
    let scaled = g.mul(std, z);
    let pre = g.add(mean, scaled);
    let action = g.tanh(pre);

    // Gaussian part: −z²/2 − log σ − log√(2π), z constant.
    let z_sq = noise.map(|v| -0.5 * v * v - HALF_LOG_2PI);
    let z_term = g.constant(z_sq);
    let gauss = g.sub(z_term, log_std);

    // Jacobian part: 2·(log 2 − x − softplus(−2x)).
    let neg2 = g.scale(pre, -2.0);
    let sp = g.softplus(neg2);
    let x_plus_sp = g.add(pre, sp);
    let neg = g.scale(x_plus_sp, -2.0);
    let jac = g.add_scalar(neg, 2.0 * LN_2);

    let per_dim = g.sub(gauss, jac);
    let logp = g.sum_cols(per_dim);
    (action, logp)
}

/// Log-density of `actions` under `N(mean, exp(log_std)²)` summed over the
/// action dimensions; `mean: [B, d]`, `log_std: [1, d]`. Returns `[B, 1]`.
pub fn diag_gaussian_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: &Tensor) -> Var {
    let rows = g.value(mean).rows();
    let a = g.constant(actions.clone());
    let diff = g.sub(a, mean);
    let ls = g.broadcast_rows(log_std, rows);
    let neg_ls = g.neg(ls);
    let inv_std = g.exp(neg_ls);
    let z = g.mul(diff, inv_std);
    let z2 = g.square(z);
    let half = g.scale(z2, -0.5);
    let t = g.sub(half, ls);
    let t = g.add_scalar(t, -HALF_LOG_2PI);
    g.sum_cols(t)
}

/// Plain-value counterpart of [`diag_gaussian_log_prob`] for one action.
pub fn diag_gaussian_log_prob_row(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&mu, &ls), &a)| {
            let z = (a - mu) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

/// Entropy of a diagonal Gaussian with the given log-stds.
pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LOG_2PI + ls).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn vanishing_noise_gives_tanh_mean() {
        let head = SquashedGaussianHead::new(vec![0.3, -1.5], vec![-20.0, -50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, _) = head.sample(&mut rng);
            assert!((a[0] - 0.3f64.tanh()).abs() < 1e-6);
            assert!((a[1] - (-1.5f64).tanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let head = SquashedGaussianHead::new(vec![0.0, 0.0], vec![-100.0, 100.0]);
        assert_eq!(head.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn samples_stay_inside_open_interval() {
        let head = SquashedGaussianHead::new(vec![0.5], vec![0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let (a, lp) = head.sample(&mut rng);
            assert!(a[0] > -1.0 && a[0] < 1.0);
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn log_prob_matches_numeric_density() {
        // Density of Y = tanh(mu + sigma Z) from central differences of
        // F(y) = Phi((atanh(y) - mu) / sigma).
        for &(mu, ls) in &[(0.2, -0.5), (-0.7, 0.3), (0.0, 1.0)] {
            let head = SquashedGaussianHead::new(vec![mu], vec![ls]);
            let sigma = f64::exp(ls);
            let cdf = |y: f64| normal_cdf((y.atanh() - mu) / sigma);
            for i in 1..40 {
                let y = -0.95 + 1.9 * i as f64 / 40.0;
                let h = 1e-6;
                let density = (cdf(y + h) - cdf(y - h)) / (2.0 * h);
                let z = (y.atanh() - mu) / sigma;
                let (a, logp) = head.sample_with_noise(&[z]);
                assert!((a[0] - y).abs() < 1e-12);
                assert!(
                    (logp - density.ln()).abs() < 1e-3,
                    "mu={mu} ls={ls} y={y}: {logp} vs {}",
                    density.ln()
                );
            }
        }
    }

    #[test]
    fn mirrored_mean_and_noise_mirror_the_action() {
        let head = SquashedGaussianHead::new(vec![0.4, -0.9], vec![-0.3, 0.1]);
        let mirror = SquashedGaussianHead::new(vec![-0.4, 0.9], vec![-0.3, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let z: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let nz: Vec<f64> = z.iter().map(|v| -v).collect();
            let (a, la) = head.sample_with_noise(&z);
            let (b, lb) = mirror.sample_with_noise(&nz);
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(*x, -*y);
            }
            assert!((la - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_finite_over_clamp_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..=44 {
            let ls = LOG_STD_MIN + i as f64 * 0.5;
            for mu in [-5.0, 0.0, 3.0] {
                let head = SquashedGaussianHead::new(vec![mu], vec![ls]);
                for _ in 0..50 {
                    assert!(head.sample(&mut rng).1.is_finite(), "ls={ls} mu={mu}");
                }
            }
        }
    }

    #[test]
    fn graph_sample_matches_plain_sample() {
        let out = Tensor::matrix(2, 4, vec![0.1, -0.3, -0.5, 0.2, 1.2, 0.0, 3.0, -25.0]);
        let noise = Tensor::matrix(2, 2, vec![0.5, -1.0, 0.3, 2.0]);
        let mut g = Graph::new();
        let o = g.constant(out.clone());
        let (a, lp) = squashed_sample(&mut g, o, &noise);
        for r in 0..2 {
            let head = SquashedGaussianHead::from_output(out.row(r));
            let (pa, plp) = head.sample_with_noise(noise.row(r));
            for (x, y) in g.value(a).row(r).iter().zip(&pa) {
                assert!((x - y).abs() < 1e-14);
            }
            assert!((g.value(lp).row(r)[0] - plp).abs() < 1e-12);
        }
    }

    #[test]
    fn diag_gaussian_graph_matches_row() {
        let mean = Tensor::matrix(2, 2, vec![0.1, -0.2, 0.4, 0.0]);
        let log_std = Tensor::matrix(1, 2, vec![-0.5, 0.3]);
        let acts = Tensor::matrix(2, 2, vec![0.3, 0.3, -1.0, 2.0]);
        let mut g = Graph::new();
        let m = g.constant(mean.clone());
        let l = g.constant(log_std.clone());
        let lp = diag_gaussian_log_prob(&mut g, m, l, &acts);
        for r in 0..2 {
            let want = diag_gaussian_log_prob_row(mean.row(r), log_std.data(), acts.row(r));
            assert!((g.value(lp).row(r)[0] - want).abs() < 1e-14);
        }
    }
}
