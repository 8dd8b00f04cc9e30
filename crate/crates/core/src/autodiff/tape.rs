use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant per-row linear maps for [`Tape::row_linear`]: row `b` of the
/// input is multiplied by `maps[b]`, a row-major `out × in` matrix.
#[derive(Debug, Clone)]
pub struct RowMaps {
    pub out_dim: usize,
    pub in_dim: usize,
    pub maps: Vec<Arc<[f64]>>,
}

#[derive(Debug)]
enum Op {
    Leaf { trainable: bool },
    Matmul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Cos(Var),
    Sin(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Sum(Var),
    SoftmaxCe { logits: Var, probs: Tensor, labels: Vec<usize> },
    RowLinear { maps: RowMaps, x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient for `var`; all zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Usage(format!("{op}: incompatible shapes {}x{} and {}x{}", a[0], a[1], b[0], b[1]))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf { trainable: true }, "param")
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf { trainable: false }, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa[0], sb[1]);
        gemm(self.value(a), false, self.value(b), false, &mut out, false);
        self.push(out, Op::Matmul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b), "add")
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb[0] != 1 || sa[1] != sb[1] {
            return Err(shape_err("add_row", sa, sb));
        }
        let b = self.value(bias).data().to_vec();
        let out = Tensor::from_fn(sa[0], sa[1], |r, c| self.value(a).get(r, c) + b[c]);
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("sub", sa, sb));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", sa, sb));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::cos);
        self.push(out, Op::Cos(a), "cos")
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::sin);
        self.push(out, Op::Sin(a), "sin")
    }

    /// Joins tensors with equal row counts side by side.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat inputs"))?;
        let rows = self.shape(first)[0];
        for &p in parts {
            if self.shape(p)[0] != rows {
                return Err(shape_err("concat", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Columns `start..end` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let [rows, cols] = self.shape(a);
        if start > end || end > cols {
            return Err(Error::Usage(format!("slice {start}..{end} out of range for {cols} columns")));
        }
        let v = self.value(a);
        let out = Tensor::from_fn(rows, end - start, |r, c| v.get(r, start + c));
        self.push(out, Op::Slice { src: a, start }, "slice")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(out, Op::Sum(a), "sum")
    }

    /// Mean over rows of `logsumexp(logits) - logits[label]`, computed
    /// with the max-shift so large logits do not overflow.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let [rows, cols] = self.shape(logits);
        if labels.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: rows,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::Usage(format!("label {bad} out of range for {cols} classes")));
        }
        let z = self.value(logits);
        let mut probs = Vec::with_capacity(rows * cols);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[label];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let probs = Tensor::new(rows, cols, probs)?;
        let out = Tensor::scalar(total / rows.max(1) as f64);
        self.push(
            out,
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            "softmax_cross_entropy",
        )
    }

    /// Row-wise constant linear map: `y[b] = maps[b] · x[b]`.
    pub fn row_linear(&mut self, maps: RowMaps, x: Var) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if cols != maps.in_dim || maps.maps.len() != rows {
            return Err(Error::Usage(format!(
                "row_linear: {} maps of {}x{} for input {rows}x{cols}",
                maps.maps.len(),
                maps.out_dim,
                maps.in_dim
            )));
        }
        if let Some(m) = maps.maps.iter().find(|m| m.len() != maps.out_dim * maps.in_dim) {
            return Err(Error::DimensionMismatch {
                what: "row_linear map",
                expected: maps.out_dim * maps.in_dim,
                found: m.len(),
            });
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * maps.out_dim);
        for (b, m) in maps.maps.iter().enumerate() {
            let xr = xv.row(b);
            for o in 0..maps.out_dim {
                let mr = &m[o * maps.in_dim..(o + 1) * maps.in_dim];
                data.push(mr.iter().zip(xr).map(|(a, b)| a * b).sum());
            }
        }
        let out = Tensor::new(rows, maps.out_dim, data)?;
        self.push(out, Op::RowLinear { maps, x }, "row_linear")
    }

    /// Reverse pass from a `1 × 1` loss. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let [r, c] = self.shape(loss);
        if r != 1 || c != 1 {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = &node.value;
            match &node.op {
                Op::Leaf { .. } => unreachable!(),
                Op::Matmul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut ga, false);
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut gb, false);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (acc, v) in gb.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *bias, Tensor::row_vector(gb));
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |x, y| x * y);
                    let gb = zip_map(&g, self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|v| v * s)),
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, out, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, out, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Cos(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| -gv * x.sin());
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sin(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| gv * x.cos());
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let [rows, cols] = self.shape(p);
                        let gp = Tensor::from_fn(rows, cols, |r, c| g.get(r, offset + c));
                        offset += cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Slice { src, start } => {
                    let [rows, cols] = self.shape(*src);
                    let end = start + g.cols();
                    let gs = Tensor::from_fn(rows, cols, |r, c| {
                        if c >= *start && c < end {
                            g.get(r, c - start)
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *src, gs);
                }
                Op::Sum(a) => {
                    let [rows, cols] = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::filled(rows, cols, g.item()));
                }
                Op::SoftmaxCe { logits, probs, labels } => {
                    let scale = g.item() / labels.len().max(1) as f64;
                    let gl = Tensor::from_fn(probs.rows(), probs.cols(), |r, c| {
                        let target = if labels[r] == c { 1.0 } else { 0.0 };
                        scale * (probs.get(r, c) - target)
                    });
                    accumulate(&mut grads, *logits, gl);
                }
                Op::RowLinear { maps, x } => {
                    let mut gx = Vec::with_capacity(g.rows() * maps.in_dim);
                    for (b, m) in maps.maps.iter().enumerate() {
                        let gr = g.row(b);
                        let mut acc = vec![0.0; maps.in_dim];
                        for (o, &gv) in gr.iter().enumerate() {
                            let mr = &m[o * maps.in_dim..(o + 1) * maps.in_dim];
                            for (a, &mv) in acc.iter_mut().zip(mr) {
                                *a += gv * mv;
                            }
                        }
                        gx.extend(acc);
                    }
                    accumulate(&mut grads, *x, Tensor::new(g.rows(), maps.in_dim, gx)?);
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf { trainable: true }) {
                grads[i] = None;
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "backward" });
        }
        Ok(Gradients { grads, shapes })
    }

    /// Softmax probabilities cached by a cross-entropy node.
    pub fn softmax_probs(&self, loss: Var) -> Option<&Tensor> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCe { probs, .. } => Some(probs),
            _ => None,
        }
    }
}
