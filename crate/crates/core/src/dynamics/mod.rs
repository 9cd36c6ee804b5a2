//! Planar articulated rigid-body simulator with penalty contacts.

pub mod kinematics;
pub mod model;
pub mod sim;
pub mod terrain;

pub use kinematics::Frames;
pub use model::{biped, chain, pendulum, BaseKind, Mechanism, ModelParams, Side};
pub use sim::{
    contact_forces, dynamics_terms, kinetic_energy, potential_energy, step, Actuation,
    ContactReport, DynamicsTerms, SimState, StepOutput,
};
pub use terrain::{generate_terrain, TerrainProfile};

/// Physics step [s].
pub const PHYSICS_DT: f64 = 0.002;
/// Physics steps per control tick (125 Hz control).
pub const SUBSTEPS: usize = 4;
/// Control period [s].
pub const CONTROL_DT: f64 = PHYSICS_DT * SUBSTEPS as f64;

#[cfg(test)]
mod tests;
