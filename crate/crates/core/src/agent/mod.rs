//! Observations, networks, action mapping and reverse-mode gradients.

pub mod backend;
pub mod checkpoint;
pub mod control;
pub mod nets;
pub mod normalizer;
pub mod obs;
pub mod policy;
pub mod tape;

pub mod gradcheck;

pub use checkpoint::Checkpoint;
pub use control::{ActionMode, ControlConfig, DelayBuffer};
pub use nets::{Model, NetConfig, ParamStore};
pub use normalizer::Normalizer;
pub use obs::{assemble_observation, assemble_privileged, obs_dim, priv_dim};
pub use policy::{act, gaussian_log_prob, Policy};
pub use tape::{Mat, Tape, Var};
