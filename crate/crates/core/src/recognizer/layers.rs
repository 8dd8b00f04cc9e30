//! Parameter blocks shared by the adaptive network and the baselines,
//! with their tape-level forward functions.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

/// Weights i.i.d. uniform on `±1/√fan_in`, bias zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`.
    pub weight: Tensor,
    /// `1 × out`.
    pub bias: Tensor,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(fan_in: usize, out: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform(fan_in, out, fan_in, rng),
            bias: Tensor::zeros(1, out),
        }
    }

    pub fn zeros(fan_in: usize, out: usize) -> Self {
        Self {
            weight: Tensor::zeros(fan_in, out),
            bias: Tensor::zeros(1, out),
        }
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Affine → ReLU → affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::init(input, hidden, rng),
            output: Linear::init(hidden, output, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            hidden: Linear::zeros(input, hidden),
            output: Linear::zeros(hidden, output),
        }
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 4] {
        let [a, b] = self.hidden.tensors();
        let [c, d] = self.output.tensors();
        [a, b, c, d]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        let [a, b] = self.hidden.tensors_mut();
        let [c, d] = self.output.tensors_mut();
        [a, b, c, d]
    }
}

/// Single LSTM layer. Gate blocks along the columns are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `B₁ × 4B₂`.
    pub input_weight: Tensor,
    /// `B₂ × 4B₂`.
    pub state_weight: Tensor,
    /// `1 × 4B₂`.
    pub bias: Tensor,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_weight: uniform(input, 4 * hidden, input, rng),
            state_weight: uniform(hidden, 4 * hidden, hidden, rng),
            bias: Tensor::zeros(1, 4 * hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weight: Tensor::zeros(input, 4 * hidden),
            state_weight: Tensor::zeros(hidden, 4 * hidden),
            bias: Tensor::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.state_weight.rows()
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 3] {
        [&self.input_weight, &self.state_weight, &self.bias]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.input_weight, &mut self.state_weight, &mut self.bias]
    }
}

/// Tape handles for a bound [`Linear`].
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub hidden: LinearVars,
    pub output: LinearVars,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input_weight: Var,
    pub state_weight: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// Walks a flat list of bound variables in declaration order.
pub(crate) struct VarCursor<'a>(std::slice::Iter<'a, Var>);

impl<'a> VarCursor<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        Self(vars.iter())
    }

    pub(crate) fn next(&mut self) -> Var {
        *self.0.next().expect("bound variable list matches parameter layout")
    }

    pub(crate) fn linear(&mut self) -> LinearVars {
        LinearVars {
            weight: self.next(),
            bias: self.next(),
        }
    }

    pub(crate) fn mlp(&mut self) -> MlpVars {
        MlpVars {
            hidden: self.linear(),
            output: self.linear(),
        }
    }

    pub(crate) fn lstm(&mut self, hidden: usize) -> LstmVars {
        LstmVars {
            input_weight: self.next(),
            state_weight: self.next(),
            bias: self.next(),
            hidden,
        }
    }
}

pub fn linear(tape: &mut Tape, x: Var, p: LinearVars) -> Result<Var> {
    let y = tape.matmul(x, p.weight)?;
    tape.add_row(y, p.bias)
}

pub fn mlp(tape: &mut Tape, x: Var, p: MlpVars) -> Result<Var> {
    let h = linear(tape, x, p.hidden)?;
    let h = tape.relu(h)?;
    linear(tape, h, p.output)
}

/// One LSTM update; returns `(hidden, cell)`.
pub fn lstm_cell(tape: &mut Tape, input: Var, hidden: Var, cell: Var, p: LstmVars) -> Result<(Var, Var)> {
    let n = p.hidden;
    let from_input = tape.matmul(input, p.input_weight)?;
    let from_state = tape.matmul(hidden, p.state_weight)?;
    let gates = tape.add(from_input, from_state)?;
    let gates = tape.add_row(gates, p.bias)?;
    let i = tape.slice(gates, 0, n)?;
    let f = tape.slice(gates, n, 2 * n)?;
    let g = tape.slice(gates, 2 * n, 3 * n)?;
    let o = tape.slice(gates, 3 * n, 4 * n)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let kept = tape.mul(f, cell)?;
    let written = tape.mul(i, g)?;
    let cell = tape.add(kept, written)?;
    let squashed = tape.tanh(cell)?;
    let hidden = tape.mul(o, squashed)?;
    Ok((hidden, cell))
}
