//! TD3 and SAC with n-step bootstrapped targets.

mod agent;
mod config;

pub use agent::{
    compute_target_q, critic_loss_and_grads, sac_actor_objective_and_grads, td3_actor_objective_and_grads, ActionMode,
    ActorCritic, OffPolicyAgent, UpdateStats, POLICY_OUTPUT_SCALE,
};
pub use config::{OffPolicyAlgo, OffPolicyConfig};
