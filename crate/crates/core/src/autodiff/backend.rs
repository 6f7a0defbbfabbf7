//! Array operations shared by the recording tape and the eager evaluator.
//!
//! Every vector field, solver step, and loss in the crate is written once
//! against [`Backend`]. [`crate::autodiff::Tape`] records the operations for
//! reverse-mode differentiation; [`Eval`] computes the same values without
//! keeping anything around, which is what large Monte Carlo runs need.
//! Both route through the kernels below, so their outputs agree bit for bit.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Ln,
    Sqrt,
    Square,
    Abs,
    Softplus,
}

impl Unary {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Unary::Relu => x.max(0.0),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Abs => x.abs(),
            Unary::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative given input `x` and output `y`.
    pub(crate) fn slope(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// The operation set available to models and losses.
pub trait Backend {
    type T: Clone;

    /// A trainable leaf.
    fn param(&mut self, value: &Tensor) -> Self::T;
    /// A leaf that never receives gradients.
    fn constant(&mut self, value: Tensor) -> Self::T;
    fn value<'a>(&'a self, x: &'a Self::T) -> &'a Tensor;

    /// `x Wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    fn affine(&mut self, x: &Self::T, w: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn scale(&mut self, a: &Self::T, c: f64) -> Self::T;
    fn offset(&mut self, a: &Self::T, c: f64) -> Self::T;
    fn unary(&mut self, a: &Self::T, op: Unary) -> Self::T;
    /// Column-wise concatenation of tensors with equal row counts.
    fn concat_cols(&mut self, parts: &[&Self::T]) -> Result<Self::T>;
    /// Row-wise `M_i v_i` where row `i` of `m` holds an `out x v.cols()` matrix.
    fn batched_matvec(&mut self, m: &Self::T, v: &Self::T, out: usize) -> Result<Self::T>;
    fn sum(&mut self, a: &Self::T) -> Self::T;
    fn mean(&mut self, a: &Self::T) -> Self::T;
    /// Mean softmax cross-entropy of `[n, C]` logits against class labels.
    fn softmax_cross_entropy(&mut self, logits: &Self::T, labels: &[usize]) -> Result<Self::T>;
    /// Mean squared error over entries where `mask` is nonzero.
    fn masked_mse(&mut self, pred: &Self::T, target: &Tensor, mask: &Tensor) -> Result<Self::T>;

    fn tanh(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Tanh)
    }
    fn sigmoid(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Sigmoid)
    }
    fn relu(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Relu)
    }
    fn exp(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Exp)
    }
    fn ln(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Ln)
    }
    fn square(&mut self, a: &Self::T) -> Self::T {
        self.unary(a, Unary::Square)
    }
    fn mul_const(&mut self, a: &Self::T, c: Tensor) -> Result<Self::T> {
        let c = self.constant(c);
        self.mul(a, &c)
    }
    fn add_const(&mut self, a: &Self::T, c: Tensor) -> Result<Self::T> {
        let c = self.constant(c);
        self.add(a, &c)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.numel() != b.numel() || a.cols() != b.cols() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub(crate) fn affine_fwd(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, inp) = (x.rows(), x.cols());
    let out = w.rows();
    if w.cols() != inp || b.numel() != out {
        return Err(Error::Shape(format!(
            "affine: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut y = vec![0.0; n * out];
    for i in 0..n {
        let xr = &xd[i * inp..(i + 1) * inp];
        let yr = &mut y[i * out..(i + 1) * out];
        for o in 0..out {
            let wr = &wd[o * inp..(o + 1) * inp];
            let mut acc = bd[o];
            for k in 0..inp {
                acc += xr[k] * wr[k];
            }
            yr[o] = acc;
        }
    }
    Ok(Tensor::matrix(n, out, y))
}

pub(crate) fn zip_fwd(a: &Tensor, b: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(a, b, what)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub(crate) fn concat_fwd(parts: &[&Tensor]) -> Result<Tensor> {
    let n = parts.first().map_or(0, |p| p.rows());
    if parts.iter().any(|p| p.rows() != n) {
        return Err(Error::Shape("concat: row counts differ".into()));
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(n * total);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Ok(Tensor::matrix(n, total, data))
}

pub(crate) fn matvec_fwd(m: &Tensor, v: &Tensor, out: usize) -> Result<Tensor> {
    let (n, c) = (v.rows(), v.cols());
    if m.rows() != n || m.cols() != out * c {
        return Err(Error::Shape(format!(
            "batched_matvec: m {:?}, v {:?}, out {out}",
            m.shape(),
            v.shape()
        )));
    }
    let mut y = vec![0.0; n * out];
    for i in 0..n {
        let mr = m.row(i);
        let vr = v.row(i);
        for o in 0..out {
            y[i * out + o] = mr[o * c..(o + 1) * c].iter().zip(vr).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Tensor::matrix(n, out, y))
}

/// Returns the loss and the softmax probabilities.
pub(crate) fn softmax_ce_fwd(logits: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut probs = vec![0.0; n * c];
    let mut loss = 0.0;
    for i in 0..n {
        if labels[i] >= c {
            return Err(Error::LabelOutOfRange { label: labels[i], n_classes: c });
        }
        let row = logits.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let lse = mx + z.ln();
        for k in 0..c {
            probs[i * c + k] = (row[k] - lse).exp();
        }
        loss += lse - row[labels[i]];
    }
    Ok((loss / n as f64, probs))
}

pub(crate) fn masked_mse_fwd(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<(f64, f64)> {
    same_shape(pred, target, "masked_mse target")?;
    same_shape(pred, mask, "masked_mse mask")?;
    let mut count = 0.0;
    let mut acc = 0.0;
    for ((p, t), m) in pred.data().iter().zip(target.data()).zip(mask.data()) {
        if *m != 0.0 {
            acc += (p - t) * (p - t);
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(Error::InvalidArgument("masked_mse with an empty mask".into()));
    }
    Ok((acc / count, count))
}

/// Eager evaluation with no recording.
#[derive(Default, Debug, Clone, Copy)]
pub struct Eval;

impl Backend for Eval {
    type T = Tensor;

    fn param(&mut self, value: &Tensor) -> Tensor {
        value.clone()
    }
    fn constant(&mut self, value: Tensor) -> Tensor {
        value
    }
    fn value<'a>(&'a self, x: &'a Tensor) -> &'a Tensor {
        x
    }
    fn affine(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        affine_fwd(x, w, b)
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        zip_fwd(a, b, "add", |x, y| x + y)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        zip_fwd(a, b, "sub", |x, y| x - y)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        zip_fwd(a, b, "mul", |x, y| x * y)
    }
    fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        a.map(|x| x * c)
    }
    fn offset(&mut self, a: &Tensor, c: f64) -> Tensor {
        a.map(|x| x + c)
    }
    fn unary(&mut self, a: &Tensor, op: Unary) -> Tensor {
        a.map(|x| op.apply(x))
    }
    fn concat_cols(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        concat_fwd(parts)
    }
    fn batched_matvec(&mut self, m: &Tensor, v: &Tensor, out: usize) -> Result<Tensor> {
        matvec_fwd(m, v, out)
    }
    fn sum(&mut self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.data().iter().sum())
    }
    fn mean(&mut self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.data().iter().sum::<f64>() / a.numel() as f64)
    }
    fn softmax_cross_entropy(&mut self, logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
        Ok(Tensor::scalar(softmax_ce_fwd(logits, labels)?.0))
    }
    fn masked_mse(&mut self, pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(masked_mse_fwd(pred, target, mask)?.0))
    }
}
