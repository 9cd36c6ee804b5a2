//! Versioned JSON weight dump with a layout manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::control::ControlConfig;
use super::nets::{Model, NetConfig};
use super::normalizer::Normalizer;
use super::policy::Policy;
use super::tape::Mat;
use crate::error::{Error, Result};
use crate::randomization::Method;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "torquegap-policy";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub update: usize,
    pub seed: u64,
    pub net: NetConfig,
    pub d_obs: usize,
    pub d_priv: usize,
    pub n_act: usize,
    pub control: ControlConfig,
    pub obs_norm: Normalizer,
    pub priv_norm: Normalizer,
    pub manifest: Vec<ManifestEntry>,
    /// All parameters, row-major, concatenated in manifest order.
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_policy(policy: &Policy, method: Method, update: usize, seed: u64) -> Self {
        let m = &policy.model;
        let mut manifest = Vec::with_capacity(m.params.len());
        let mut data = Vec::with_capacity(m.params.n_scalars());
        for (name, v) in m.params.names.iter().zip(&m.params.values) {
            manifest.push(ManifestEntry { name: name.clone(), shape: [v.nrows(), v.ncols()], offset: data.len() });
            data.extend(v.iter());
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            method,
            update,
            seed,
            net: m.cfg.clone(),
            d_obs: m.d_obs,
            d_priv: m.d_priv,
            n_act: m.n_act,
            control: policy.control.clone(),
            obs_norm: policy.obs_norm.clone(),
            priv_norm: policy.priv_norm.clone(),
            manifest,
            data,
        }
    }

    /// Rebuild the policy; the manifest must match the layout implied by `net`.
    pub fn to_policy(&self) -> Result<Policy> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Model::new(self.net.clone(), self.d_obs, self.d_priv, self.n_act, &mut rng);
        if model.params.len() != self.manifest.len() {
            return Err(Error::Config("checkpoint manifest does not match network layout".into()));
        }
        for (i, entry) in self.manifest.iter().enumerate() {
            let slot = &mut model.params.values[i];
            if model.params.names[i] != entry.name || [slot.nrows(), slot.ncols()] != entry.shape {
                return Err(Error::Config(format!("checkpoint entry '{}' does not match layout", entry.name)));
            }
            let n = entry.shape[0] * entry.shape[1];
            let src = self
                .data
                .get(entry.offset..entry.offset + n)
                .ok_or_else(|| Error::Config("checkpoint data truncated".into()))?;
            *slot = Mat::from_shape_vec((entry.shape[0], entry.shape[1]), src.to_vec())
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.obs_norm.dim() != self.d_obs || self.priv_norm.dim() != self.d_priv {
            return Err(Error::Config("normalizer dimensions do not match".into()));
        }
        let mut p = Policy { model, obs_norm: self.obs_norm.clone(), priv_norm: self.priv_norm.clone(), control: self.control.clone() };
        p.freeze();
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&s)?)
    }
}
