use serde::{Deserialize, Serialize};

/// Running mean and variance per entry, merged batch-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
    pub frozen: bool,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Normalizer { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4, clip: 10.0, frozen: false }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update<S: AsRef<[f64]>>(&mut self, batch: &[S]) {
        if self.frozen || batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let total = self.count + n;
        for i in 0..self.dim() {
            let bm = batch.iter().map(|x| x.as_ref()[i]).sum::<f64>() / n;
            let bv = batch.iter().map(|x| (x.as_ref()[i] - bm).powi(2)).sum::<f64>() / n;
            let delta = bm - self.mean[i];
            let m2 = self.var[i] * self.count + bv * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = ((x[i] - self.mean[i]) / (self.var[i] + 1e-8).sqrt()).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }
}
