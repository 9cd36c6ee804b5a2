//! Environments, rollouts and the PPO update.

pub mod env;
pub mod ppo;
pub mod run;

pub use env::{check_termination, Env, StepResult, TaskConfig, Termination, TerrainSpec, WorldOverrides};
pub use ppo::{compute_advantages, gae, ppo_update, Adam, LossBreakdown, PPOConfig, RolloutBuffer};
pub use run::{calibrate_erfi, train_to_dir, TrainConfig, Trainer, UpdateLog};
