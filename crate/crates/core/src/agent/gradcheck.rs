//! Central-difference checks of the tape against random instances.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::Record;
use super::nets::{Gru, ParamStore};
use super::tape::{Mat, Tape, Var};

const EPS: f64 = 1e-5;
/// Relative error bound for gradient checks.
pub const TOL: f64 = 1e-4;
#[cfg(test)]
const INSTANCES: usize = 100;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-1.5..1.5))
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

/// Worst relative error between tape gradients and central differences of
/// the scalar returned by `f`.
fn check(inputs: &[Mat], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &leaves);
    let grads = tape.grad(out, &leaves);
    let eval = |xs: &[Mat]| {
        let mut t = Tape::new();
        let l: Vec<Var> = xs.iter().map(|m| t.leaf(m.clone())).collect();
        let o = f(&mut t, &l);
        t.scalar(o)
    };
    let mut worst = 0.0f64;
    for (k, g) in grads.iter().enumerate() {
        let analytic: Vec<f64> = tape.value(*g).iter().copied().collect();
        for idx in 0..inputs[k].len() {
            let mut xs = inputs.to_vec();
            let flat = xs[k].as_slice_mut().expect("contiguous");
            let x0 = flat[idx];
            flat[idx] = x0 + EPS;
            let up = eval(&xs);
            xs[k].as_slice_mut().expect("contiguous")[idx] = x0 - EPS;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(analytic[idx], numeric));
        }
    }
    worst
}

/// Random linear functional of a matrix-valued output.
fn project(t: &mut Tape, y: Var, c: Mat) -> Var {
    let p = t.mul_const(y, Rc::new(c));
    t.sum(p)
}

/// Network layers whose reverse-mode gradients are checked against central differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Linear,
    Elu,
    Tanh,
    Sigmoid,
    Gru,
    GaussianLogProb,
}

impl Layer {
    pub const ALL: [Layer; 6] = [Layer::Linear, Layer::Elu, Layer::Tanh, Layer::Sigmoid, Layer::Gru, Layer::GaussianLogProb];
}

fn dense_error(act: fn(&mut Tape, Var) -> Var, instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (b, i, o) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5));
        let inputs = [random(b, i, rng), random(i, o, rng), random(1, o, rng)];
        let c = random(b, o, rng);
        worst = worst.max(check(&inputs, &|t, v| {
            let z = t.matmul(v[0], v[1]);
            let z = t.add_row(z, v[2]);
            let y = act(t, z);
            project(t, y, c.clone())
        }));
    }
    worst
}

fn gru_error(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (b, i, h) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let mut store = ParamStore::default();
        let gru = Gru::new(&mut store, "g", i, h, rng);
        let mut inputs = store.values.clone();
        inputs.push(random(b, i, rng));
        inputs.push(random(b, h, rng));
        let c = random(b, h, rng);
        let n = store.values.len();
        worst = worst.max(check(&inputs, &|t, v| {
            let mut rec = Record { tape: t, vars: &v[..n] };
            let h2 = gru.step(&mut rec, &v[n], &v[n + 1]);
            project(t, h2, c.clone())
        }));
    }
    worst
}

fn log_prob_error(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (b, n) = (rng.random_range(1..4), rng.random_range(1..5));
        let inputs = [random(b, n, rng), random(b, n, rng), random(1, n, rng)];
        worst = worst.max(check(&inputs, &|t, v| log_prob(t, v[0], v[1], v[2])));
    }
    worst
}

/// Worst relative error between tape and finite-difference gradients of a
/// random projection of `layer` over `instances` random shapes and inputs.
pub fn layer_gradient_error(layer: Layer, instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match layer {
        Layer::Linear => dense_error(|_, z| z, instances, &mut rng),
        Layer::Elu => dense_error(|t, z| t.elu(z), instances, &mut rng),
        Layer::Tanh => dense_error(|t, z| t.tanh(z), instances, &mut rng),
        Layer::Sigmoid => dense_error(|t, z| t.sigmoid(z), instances, &mut rng),
        Layer::Gru => gru_error(instances, &mut rng),
        Layer::GaussianLogProb => log_prob_error(instances, &mut rng),
    }
}

/// `Σ_j −½((a−μ)/σ)² − log σ`, constant dropped.
fn log_prob(t: &mut Tape, a: Var, mu: Var, log_std: Var) -> Var {
    let rows = t.value(a).nrows();
    let ls = t.broadcast_rows(log_std, rows);
    let inv = t.scale(ls, -1.0);
    let inv = t.exp(inv);
    let d = t.sub(a, mu);
    let z = t.mul(d, inv);
    let z2 = t.square(z);
    let q = t.scale(z2, -0.5);
    let lp = t.sub(q, ls);
    t.sum(lp)
}
