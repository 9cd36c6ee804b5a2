//! Three perturbation regimes: parametric domain randomization, ERFI torque
//! bias plus noise, and the state-dependent neural torque perturbation.

mod dr;
mod erfi;
mod perturb;
mod scale;

pub use dr::{corrupt_observation, delay_ticks, sample_dr, DRConfig, DRSample, Method, ObsNoiseConfig, Preset, Push, Range};
pub use erfi::{erfi_perturbation, erfi_sigmas_for_rms, ErfiSampler};
pub use perturb::{perturbation_gate, sample_perturb_weights, PerturbNet, PerturbOutput, PERTURB_HIDDEN};
pub use scale::{RunningScale, SCALE_FLOOR};
