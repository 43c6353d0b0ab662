//! PPO with a clipped surrogate, λ-return or fixed n-step advantages, and
//! value regression to discounted rewards-to-go.

mod agent;
mod config;
mod returns;

pub use agent::{
    gaussian_kl, policy_loss_and_grads, ppo_policy_loss, value_loss_and_grads, EpochStats, GaussianPolicy, PpoAgent,
    PpoStep, RolloutBatch, RolloutBuffer, SurrogateInfo,
};
pub use config::{PpoConfig, ReturnMode};
pub use returns::{discounted_returns, lambda_return, normalize_advantages, nstep_returns, SegmentEnd};
