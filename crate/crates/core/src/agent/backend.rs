//! One network definition, two evaluators: plain matrices for rollouts and a
//! recording tape for training.

use super::nets::ParamStore;
use super::tape::{elu, matmul, sigmoid, Mat, Tape, Var};

pub trait Backend {
    type T: Clone;
    fn param(&mut self, id: usize) -> Self::T;
    fn matmul(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn add_row(&mut self, x: &Self::T, b: &Self::T) -> Self::T;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn elu(&mut self, x: &Self::T) -> Self::T;
    fn tanh(&mut self, x: &Self::T) -> Self::T;
    fn sigmoid(&mut self, x: &Self::T) -> Self::T;
    fn concat_cols(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn slice_cols(&mut self, x: &Self::T, start: usize, len: usize) -> Self::T;
}

/// Direct evaluation with borrowed parameters.
pub struct Eval<'a> {
    pub params: &'a ParamStore,
}

impl Backend for Eval<'_> {
    type T = Mat;

    fn param(&mut self, id: usize) -> Mat {
        self.params.values[id].clone()
    }

    fn matmul(&mut self, a: &Mat, b: &Mat) -> Mat {
        matmul(a, b, false, false)
    }

    fn add_row(&mut self, x: &Mat, b: &Mat) -> Mat {
        x + &b.row(0)
    }

    fn add(&mut self, a: &Mat, b: &Mat) -> Mat {
        a + b
    }

    fn sub(&mut self, a: &Mat, b: &Mat) -> Mat {
        a - b
    }

    fn mul(&mut self, a: &Mat, b: &Mat) -> Mat {
        a * b
    }

    fn elu(&mut self, x: &Mat) -> Mat {
        x.mapv(elu)
    }

    fn tanh(&mut self, x: &Mat) -> Mat {
        x.mapv(f64::tanh)
    }

    fn sigmoid(&mut self, x: &Mat) -> Mat {
        x.mapv(sigmoid)
    }

    fn concat_cols(&mut self, a: &Mat, b: &Mat) -> Mat {
        ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("row counts agree")
    }

    fn slice_cols(&mut self, x: &Mat, start: usize, len: usize) -> Mat {
        x.slice(ndarray::s![.., start..start + len]).to_owned()
    }
}

/// Records onto a tape; `vars[id]` is the leaf holding parameter `id`.
pub struct Record<'a> {
    pub tape: &'a mut Tape,
    pub vars: &'a [Var],
}

impl Backend for Record<'_> {
    type T = Var;

    fn param(&mut self, id: usize) -> Var {
        self.vars[id]
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.matmul(*a, *b)
    }

    fn add_row(&mut self, x: &Var, b: &Var) -> Var {
        self.tape.add_row(*x, *b)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.add(*a, *b)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.sub(*a, *b)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.mul(*a, *b)
    }

    fn elu(&mut self, x: &Var) -> Var {
        self.tape.elu(*x)
    }

    fn tanh(&mut self, x: &Var) -> Var {
        self.tape.tanh(*x)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        self.tape.sigmoid(*x)
    }

    fn concat_cols(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.concat_cols(*a, *b)
    }

    fn slice_cols(&mut self, x: &Var, start: usize, len: usize) -> Var {
        self.tape.slice_cols(*x, start, len)
    }
}
