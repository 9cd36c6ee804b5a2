//! Action-to-torque mappings and the action delay line.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Position,
    Torque,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub mode: ActionMode,
    pub kp: f64,
    pub kd: f64,
    /// Position-mode action scale around `mu_pd`, rad.
    pub sigma_pd: Vec<f64>,
    pub mu_pd: Vec<f64>,
    pub tau_limit: Vec<f64>,
}

impl ControlConfig {
    pub fn torque(tau_limit: Vec<f64>, q_default: Vec<f64>) -> Self {
        let n = tau_limit.len();
        ControlConfig { mode: ActionMode::Torque, kp: 400.0, kd: 40.0, sigma_pd: vec![0.5; n], mu_pd: q_default, tau_limit }
    }

    pub fn position(tau_limit: Vec<f64>, q_default: Vec<f64>) -> Self {
        ControlConfig { mode: ActionMode::Position, ..Self::torque(tau_limit, q_default) }
    }

    /// Joint torques for the effective action `a_eff`. `kp_scale`/`kd_scale`
    /// are the per-joint gain multipliers of the current episode.
    pub fn torque_for(&self, a_eff: &[f64], q: &[f64], qd: &[f64], kp_scale: &[f64], kd_scale: &[f64]) -> Vec<f64> {
        a_eff
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let a = a.clamp(-1.0, 1.0);
                match self.mode {
                    ActionMode::Torque => self.tau_limit[i] * a,
                    ActionMode::Position => {
                        let target = a * self.sigma_pd[i] + self.mu_pd[i];
                        self.kp * kp_scale[i] * (target - q[i]) - self.kd * kd_scale[i] * qd[i]
                    }
                }
            })
            .collect()
    }
}

/// Ring of recent actions; `get(d)` returns the action pushed `d` ticks ago.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayBuffer {
    buf: VecDeque<Vec<f64>>,
    n_act: usize,
    pub delay: usize,
}

impl DelayBuffer {
    pub fn new(n_act: usize, delay: usize) -> Self {
        let mut buf = VecDeque::with_capacity(delay + 1);
        for _ in 0..=delay {
            buf.push_back(vec![0.0; n_act]);
        }
        DelayBuffer { buf, n_act, delay }
    }

    pub fn reset(&mut self, delay: usize) {
        *self = DelayBuffer::new(self.n_act, delay);
    }

    /// Push the newest action and return the one `delay` ticks older.
    pub fn push(&mut self, a: &[f64]) -> Vec<f64> {
        self.buf.push_back(a.to_vec());
        while self.buf.len() > self.delay + 1 {
            self.buf.pop_front();
        }
        self.buf.front().cloned().expect("non-empty")
    }
}
