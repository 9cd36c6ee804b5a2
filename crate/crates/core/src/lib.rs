//! Desk-scale sim-to-real laboratory for a planar floating-base biped.
//!
//! Policies are trained with recurrent PPO under one of three perturbation
//! regimes: parametric domain randomization, random force injection, or
//! state-dependent joint-torque perturbations drawn from randomly weighted
//! networks. The [`equivalence`] module checks numerically that any parameter
//! randomization is reproduced exactly by an injected torque.

pub mod agent;
pub mod dynamics;
pub mod equivalence;
pub mod error;
pub mod eval;
pub mod randomization;
pub mod reference;
pub mod rewards;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
