//! Minimal reverse-mode automatic differentiation over dense `f64`
//! matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass.
//! [`Tape::backward`] then walks the record in reverse once and returns
//! the gradient of a scalar loss with respect to every trainable leaf.
//! Complex quantities are carried as stacked real and imaginary parts.
//!
//! ```
//! use ris_recognizer::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::new(1, 2, vec![2.0, -1.0]).unwrap()).unwrap();
//! let x = tape.constant(Tensor::new(2, 1, vec![3.0, 4.0]).unwrap()).unwrap();
//! let y = tape.matmul(w, x).unwrap();
//! let loss = tape.sum(y).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).data(), &[3.0, 4.0]);
//! ```

mod tape;
mod tensor;

pub use tape::{Gradients, RowMaps, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Unit-modulus parameterization `θ ↦ (cos θ, sin θ)`.
pub fn phase_map(tape: &mut Tape, angles: Var) -> Result<(Var, Var)> {
    let re = tape.cos(angles)?;
    let im = tape.sin(angles)?;
    Ok((re, im))
}

/// Row-wise softmax of plain logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        out.extend(row.iter().map(|&v| (v - max).exp() / sum));
    }
    Tensor::new(logits.rows(), logits.cols(), out).expect("same shape")
}
