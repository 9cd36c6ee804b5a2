use serde::{Deserialize, Serialize};

pub const SCALE_FLOOR: f64 = 1e-6;

/// Uncentred running scale: the root of the running mean of `x²` per entry.
///
/// Dividing by it keeps zero at zero, which the perturbation network relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningScale {
    pub mean_sq: Vec<f64>,
    pub count: u64,
    /// Below this many samples [`RunningScale::scale`] reports ones.
    pub warmup: u64,
    pub frozen: bool,
}

impl RunningScale {
    pub fn new(dim: usize, warmup: u64) -> Self {
        RunningScale { mean_sq: vec![0.0; dim], count: 0, warmup, frozen: false }
    }

    pub fn dim(&self) -> usize {
        self.mean_sq.len()
    }

    pub fn update(&mut self, sample: &[f64]) {
        self.update_batch(std::slice::from_ref(&sample));
    }

    /// Merge a batch; the result equals one pass over all data seen so far.
    pub fn update_batch<S: AsRef<[f64]>>(&mut self, batch: &[S]) {
        if self.frozen || batch.is_empty() {
            return;
        }
        let n = batch.len() as u64;
        let total = self.count + n;
        let w_old = self.count as f64 / total as f64;
        for (i, m) in self.mean_sq.iter_mut().enumerate() {
            let batch_mean = batch.iter().map(|x| x.as_ref()[i] * x.as_ref()[i]).sum::<f64>() / n as f64;
            *m = w_old * *m + (1.0 - w_old) * batch_mean;
        }
        self.count = total;
    }

    pub fn is_warm(&self) -> bool {
        self.count >= self.warmup
    }

    pub fn scale(&self) -> Vec<f64> {
        if !self.is_warm() {
            return vec![1.0; self.dim()];
        }
        self.mean_sq.iter().map(|m| m.sqrt().max(SCALE_FLOOR)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_stream_converges_to_value() {
        let mut s = RunningScale::new(1, 0);
        for _ in 0..50 {
            s.update(&[2.0]);
        }
        assert!((s.scale()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zeros_stay_at_floor() {
        let mut s = RunningScale::new(3, 0);
        s.update_batch(&[vec![0.0; 3], vec![0.0; 3]]);
        assert!(s.scale().iter().all(|x| *x == SCALE_FLOOR));
    }

    #[test]
    fn cold_scale_is_one_and_frozen_ignores_updates() {
        let mut s = RunningScale::new(2, 10);
        s.update(&[5.0, 5.0]);
        assert_eq!(s.scale(), vec![1.0, 1.0]);
        s.frozen = true;
        s.update(&[1.0, 1.0]);
        assert_eq!(s.count, 1);
    }

    proptest! {
        #[test]
        fn streaming_matches_two_pass(
            data in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..60),
            split in 1usize..8,
        ) {
            let mut s = RunningScale::new(4, 0);
            for chunk in data.chunks(split) {
                s.update_batch(chunk);
            }
            for i in 0..4 {
                let two_pass = (data.iter().map(|x| x[i] * x[i]).sum::<f64>() / data.len() as f64).sqrt();
                let got = s.scale()[i];
                let expected = two_pass.max(SCALE_FLOOR);
                prop_assert!((got - expected).abs() <= 1e-10 * expected.max(1.0));
            }
        }
    }
}
