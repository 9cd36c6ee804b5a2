//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Backward rules are emitted as ordinary tape operations, so a gradient is
//! itself a differentiable expression. That is what the input-Jacobian
//! penalty needs: its loss is built from first-order gradients and then
//! differentiated again with respect to the parameters.

use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a·x + b`
    Affine { x: Var, a: f64 },
    MulConst { x: Var, c: Rc<Mat> },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Elu(Var),
    /// `order`-th derivative of ELU, order ≥ 1.
    EluDeriv { x: Var, order: u8 },
    SumAll(Var),
    /// `[r, c] → [1, c]`
    SumRows(Var),
    /// `[r, c] → [r, 1]`
    SumCols(Var),
    /// `[1, c] → [rows, c]`
    BroadcastRows { x: Var },
    /// `[r, 1] → [r, cols]`
    BroadcastCols { x: Var },
    /// `[1, 1] → shape`
    BroadcastScalar { x: Var },
    ConcatCols(Var, Var),
    SliceCols { x: Var, start: usize },
    PadCols { x: Var, start: usize },
    StackRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    PadRows { x: Var, start: usize },
}

struct Node {
    op: Op,
    value: Mat,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_deriv(x: f64, order: u8) -> f64 {
    if x > 0.0 {
        if order == 1 {
            1.0
        } else {
            0.0
        }
    } else {
        x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Plain matrix product with optional transposes.
pub fn matmul(a: &Mat, b: &Mat, ta: bool, tb: bool) -> Mat {
    match (ta, tb) {
        (false, false) => a.dot(b),
        (true, false) => a.t().dot(b),
        (false, true) => a.dot(&b.t()),
        (true, true) => a.t().dot(&b.t()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(1024) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.leaf(Mat::from_elem((1, 1), x))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let v = matmul(self.value(a), self.value(b), ta, tb);
        self.push(Op::MatMul { a, b, ta, tb }, v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let v = self.value(x).mapv(|e| a * e + b);
        self.push(Op::Affine { x, a }, v)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn mul_const(&mut self, x: Var, c: Rc<Mat>) -> Var {
        let v = self.value(x) * &*c;
        self.push(Op::MulConst { x, c }, v)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::exp);
        self.push(Op::Exp(x), v)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(elu);
        self.push(Op::Elu(x), v)
    }

    fn elu_deriv_op(&mut self, x: Var, order: u8) -> Var {
        let v = self.value(x).mapv(|e| elu_deriv(e, order));
        self.push(Op::EluDeriv { x, order }, v)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.mul(x, x)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(x).sum());
        self.push(Op::SumAll(x), v)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(Op::SumRows(x), v)
    }

    pub fn sum_cols(&mut self, x: Var) -> Var {
        let v = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumCols(x), v)
    }

    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Var {
        let src = self.value(x);
        assert_eq!(src.nrows(), 1, "broadcast_rows needs a row vector");
        let v = src.broadcast((rows, src.ncols())).expect("row broadcast").to_owned();
        self.push(Op::BroadcastRows { x }, v)
    }

    pub fn broadcast_cols(&mut self, x: Var, cols: usize) -> Var {
        let src = self.value(x);
        assert_eq!(src.ncols(), 1, "broadcast_cols needs a column vector");
        let mut v = Mat::zeros((src.nrows(), cols));
        for (mut row, s) in v.rows_mut().into_iter().zip(src.column(0)) {
            row.fill(*s);
        }
        self.push(Op::BroadcastCols { x }, v)
    }

    fn broadcast_scalar(&mut self, x: Var, shape: (usize, usize)) -> Var {
        let v = Mat::from_elem(shape, self.scalar(x));
        self.push(Op::BroadcastScalar { x }, v)
    }

    /// `x + b` with the row vector `b` repeated over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let rows = self.value(x).nrows();
        let bb = if self.value(b).nrows() == rows { b } else { self.broadcast_rows(b, rows) };
        self.add(x, bb)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("row counts agree");
        self.push(Op::ConcatCols(a, b), v)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols { x, start }, v)
    }

    fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Var {
        let src = self.value(x);
        let mut v = Mat::zeros((src.nrows(), total));
        v.slice_mut(s![.., start..start + src.ncols()]).assign(src);
        self.push(Op::PadCols { x, start }, v)
    }

    /// Vertical concatenation.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(ndarray::Axis(0), &views).expect("column counts agree");
        self.push(Op::StackRows(parts.to_vec()), v)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(Op::SliceRows { x, start }, v)
    }

    fn pad_rows(&mut self, x: Var, start: usize, total: usize) -> Var {
        let src = self.value(x);
        let mut v = Mat::zeros((total, src.ncols()));
        v.slice_mut(s![start..start + src.nrows(), ..]).assign(src);
        self.push(Op::PadRows { x, start }, v)
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let mask = self.value(x).mapv(|e| if e >= lo && e <= hi { 1.0 } else { 0.0 });
        let offset = self.value(x).mapv(|e| e.clamp(lo, hi) - if e >= lo && e <= hi { e } else { 0.0 });
        let passed = self.mul_const(x, Rc::new(mask));
        let off = self.leaf(offset);
        self.add(passed, off)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mask_a = ndarray::Zip::from(self.value(a))
            .and(self.value(b))
            .map_collect(|x, y| if x <= y { 1.0 } else { 0.0 });
        let mask_b = mask_a.mapv(|m| 1.0 - m);
        let pa = self.mul_const(a, Rc::new(mask_a));
        let pb = self.mul_const(b, Rc::new(mask_b));
        self.add(pa, pb)
    }

    /// Gradients of the scalar `out` with respect to `wrt`, as tape variables.
    ///
    /// Variables that `out` does not depend on get an explicit zero.
    pub fn grad(&mut self, out: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.value(out).dim(), (1, 1), "grad needs a scalar output");
        let n = out.0 + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for i in 0..n {
            if needs[i] {
                continue;
            }
            needs[i] = self.parents(i).iter().any(|p| needs[p.0]);
        }
        let mut adj: Vec<Option<Var>> = vec![None; n];
        adj[out.0] = Some(self.constant_scalar(1.0));
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (p, contrib) in self.backward(i, &op, g, &needs) {
                adj[p.0] = Some(match adj[p.0] {
                    Some(prev) => self.add(prev, contrib),
                    None => contrib,
                });
            }
        }
        wrt.iter()
            .map(|w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Mat::zeros(self.value(*w).dim());
                    self.leaf(z)
                }
            })
            .collect()
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ConcatCols(a, b) => {
                vec![*a, *b]
            }
            Op::Affine { x, .. }
            | Op::MulConst { x, .. }
            | Op::EluDeriv { x, .. }
            | Op::BroadcastRows { x }
            | Op::BroadcastCols { x }
            | Op::BroadcastScalar { x }
            | Op::SliceCols { x, .. }
            | Op::PadCols { x, .. }
            | Op::SliceRows { x, .. }
            | Op::PadRows { x, .. } => vec![*x],
            Op::StackRows(parts) => parts.clone(),
            Op::Tanh(x) | Op::Sigmoid(x) | Op::Exp(x) | Op::Elu(x) | Op::SumAll(x) | Op::SumRows(x) | Op::SumCols(x) => {
                vec![*x]
            }
        }
    }

    fn backward(&mut self, i: usize, op: &Op, g: Var, needs: &[bool]) -> Vec<(Var, Var)> {
        let me = Var(i);
        let mut out = Vec::with_capacity(2);
        let want = |v: &Var| needs[v.0];
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if want(&a) {
                    let da = match (ta, tb) {
                        (false, false) => self.matmul_t(g, b, false, true),
                        (false, true) => self.matmul_t(g, b, false, false),
                        (true, false) => self.matmul_t(b, g, false, true),
                        (true, true) => self.matmul_t(b, g, true, true),
                    };
                    out.push((a, da));
                }
                if want(&b) {
                    let db = match (ta, tb) {
                        (false, false) => self.matmul_t(a, g, true, false),
                        (false, true) => self.matmul_t(g, a, true, false),
                        (true, false) => self.matmul_t(a, g, false, false),
                        (true, true) => self.matmul_t(g, a, true, true),
                    };
                    out.push((b, db));
                }
            }
            Op::Add(a, b) => {
                if want(&a) {
                    out.push((a, g));
                }
                if want(&b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(&a) {
                    out.push((a, g));
                }
                if want(&b) {
                    let nb = self.scale(g, -1.0);
                    out.push((b, nb));
                }
            }
            Op::Mul(a, b) => {
                if want(&a) {
                    let da = self.mul(g, b);
                    out.push((a, da));
                }
                if want(&b) {
                    let db = self.mul(g, a);
                    out.push((b, db));
                }
            }
            Op::Affine { x, a } => {
                let d = self.scale(g, a);
                out.push((x, d));
            }
            Op::MulConst { x, ref c } => {
                let d = self.mul_const(g, c.clone());
                out.push((x, d));
            }
            Op::Tanh(x) => {
                // 1 − y²
                let y2 = self.mul(me, me);
                let dy = self.affine(y2, -1.0, 1.0);
                let d = self.mul(g, dy);
                out.push((x, d));
            }
            Op::Sigmoid(x) => {
                // y − y²
                let y2 = self.mul(me, me);
                let dy = self.sub(me, y2);
                let d = self.mul(g, dy);
                out.push((x, d));
            }
            Op::Exp(x) => {
                let d = self.mul(g, me);
                out.push((x, d));
            }
            Op::Elu(x) => {
                let dy = self.elu_deriv_op(x, 1);
                let d = self.mul(g, dy);
                out.push((x, d));
            }
            Op::EluDeriv { x, order } => {
                let dy = self.elu_deriv_op(x, order.saturating_add(1));
                let d = self.mul(g, dy);
                out.push((x, d));
            }
            Op::SumAll(x) => {
                let shape = self.value(x).dim();
                let d = self.broadcast_scalar(g, shape);
                out.push((x, d));
            }
            Op::SumRows(x) => {
                let rows = self.value(x).nrows();
                let d = self.broadcast_rows(g, rows);
                out.push((x, d));
            }
            Op::SumCols(x) => {
                let cols = self.value(x).ncols();
                let d = self.broadcast_cols(g, cols);
                out.push((x, d));
            }
            Op::BroadcastRows { x } => {
                let d = self.sum_rows(g);
                out.push((x, d));
            }
            Op::BroadcastCols { x } => {
                let d = self.sum_cols(g);
                out.push((x, d));
            }
            Op::BroadcastScalar { x } => {
                let d = self.sum(g);
                out.push((x, d));
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(a).ncols();
                let nb = self.value(b).ncols();
                if want(&a) {
                    let d = self.slice_cols(g, 0, na);
                    out.push((a, d));
                }
                if want(&b) {
                    let d = self.slice_cols(g, na, nb);
                    out.push((b, d));
                }
            }
            Op::SliceCols { x, start } => {
                let total = self.value(x).ncols();
                let d = self.pad_cols(g, start, total);
                out.push((x, d));
            }
            Op::PadCols { x, start } => {
                let len = self.value(x).ncols();
                let d = self.slice_cols(g, start, len);
                out.push((x, d));
            }
            Op::StackRows(ref parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(*p).nrows();
                    if want(p) {
                        let d = self.slice_rows(g, start, n);
                        out.push((*p, d));
                    }
                    start += n;
                }
            }
            Op::SliceRows { x, start } => {
                let total = self.value(x).nrows();
                let d = self.pad_rows(g, start, total);
                out.push((x, d));
            }
            Op::PadRows { x, start } => {
                let len = self.value(x).nrows();
                let d = self.slice_rows(g, start, len);
                out.push((x, d));
            }
        }
        out
    }
}
