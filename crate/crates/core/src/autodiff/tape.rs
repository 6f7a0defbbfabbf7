//! Wengert-list reverse-mode differentiation.

use crate::autodiff::backend::{self, Backend, Unary};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine(usize, usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Unary(usize, Unary),
    Concat(Vec<usize>),
    MatVec(usize, usize, usize),
    Sum(usize),
    Mean(usize),
    SoftmaxCe(usize, Vec<f64>, Vec<usize>),
    MaskedMse(usize, Vec<f64>, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records every operation so that [`Tape::backward`] can replay them in
/// reverse. Node order is creation order, which is already topological.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[usize]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: &Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let n = self.val(&loss).numel();
        if n != 1 {
            return Err(Error::NonScalarLoss(n));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |p: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[p].needs_grad {
                return;
            }
            let slot = grads[p].get_or_insert_with(|| vec![0.0; nodes[p].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Affine(x, w, b) => {
                let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
                let (n, inp, out) = (xv.rows(), xv.cols(), wv.rows());
                let (xd, wd) = (xv.data(), wv.data());
                acc(*x, &mut |gx| {
                    for i in 0..n {
                        for o in 0..out {
                            let go = g[i * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            let wr = &wd[o * inp..(o + 1) * inp];
                            let gr = &mut gx[i * inp..(i + 1) * inp];
                            for k in 0..inp {
                                gr[k] += go * wr[k];
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for i in 0..n {
                        let xr = &xd[i * inp..(i + 1) * inp];
                        for o in 0..out {
                            let go = g[i * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            let gr = &mut gw[o * inp..(o + 1) * inp];
                            for k in 0..inp {
                                gr[k] += go * xr[k];
                            }
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..n {
                        for o in 0..out {
                            gb[o] += g[i * out + o];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(s, d)| *s += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(s, d)| *s += d));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(s, d)| *s += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(s, d)| *s -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
                acc(*a, &mut |ga| {
                    for k in 0..ga.len() {
                        ga[k] += g[k] * bv[k];
                    }
                });
                acc(*b, &mut |gb| {
                    for k in 0..gb.len() {
                        gb[k] += g[k] * av[k];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(s, d)| *s += c * d)),
            Op::Offset(a) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(s, d)| *s += d)),
            Op::Unary(a, op) => {
                let (xv, yv) = (nodes[*a].value.data(), node.value.data());
                acc(*a, &mut |ga| {
                    for k in 0..ga.len() {
                        ga[k] += g[k] * op.slope(xv[k], yv[k]);
                    }
                });
            }
            Op::Concat(parts) => {
                let n = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let c = nodes[p].value.cols();
                    acc(p, &mut |gp| {
                        for i in 0..n {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + off + j];
                            }
                        }
                    });
                    off += c;
                }
            }
            Op::MatVec(m, v, out) => {
                let (mv, vv) = (&nodes[*m].value, &nodes[*v].value);
                let (n, c) = (vv.rows(), vv.cols());
                let (md, vd) = (mv.data(), vv.data());
                let out = *out;
                acc(*m, &mut |gm| {
                    for i in 0..n {
                        for o in 0..out {
                            let go = g[i * out + o];
                            for j in 0..c {
                                gm[i * out * c + o * c + j] += go * vd[i * c + j];
                            }
                        }
                    }
                });
                acc(*v, &mut |gv| {
                    for i in 0..n {
                        for o in 0..out {
                            let go = g[i * out + o];
                            for j in 0..c {
                                gv[i * c + j] += go * md[i * out * c + o * c + j];
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|s| *s += g[0])),
            Op::Mean(a) => {
                let n = nodes[*a].value.numel() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|s| *s += g[0] / n));
            }
            Op::SoftmaxCe(a, probs, labels) => {
                let c = nodes[*a].value.cols();
                let n = labels.len() as f64;
                acc(*a, &mut |ga| {
                    for (i, &l) in labels.iter().enumerate() {
                        for k in 0..c {
                            let onehot = if k == l { 1.0 } else { 0.0 };
                            ga[i * c + k] += g[0] * (probs[i * c + k] - onehot) / n;
                        }
                    }
                });
            }
            Op::MaskedMse(a, weighted_diff, count) => {
                acc(*a, &mut |ga| {
                    for k in 0..ga.len() {
                        ga[k] += g[0] * 2.0 * weighted_diff[k] / count;
                    }
                });
            }
        }
    }
}

impl Backend for Tape {
    type T = Var;

    fn param(&mut self, value: &Tensor) -> Var {
        self.nodes.push(Node { value: value.clone(), op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn value<'a>(&'a self, x: &'a Var) -> &'a Tensor {
        self.val(x)
    }

    fn affine(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let y = backend::affine_fwd(self.val(x), self.val(w), self.val(b))?;
        Ok(self.push(y, Op::Affine(x.0, w.0, b.0), &[x.0, w.0, b.0]))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = backend::zip_fwd(self.val(a), self.val(b), "add", |x, y| x + y)?;
        Ok(self.push(y, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = backend::zip_fwd(self.val(a), self.val(b), "sub", |x, y| x - y)?;
        Ok(self.push(y, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = backend::zip_fwd(self.val(a), self.val(b), "mul", |x, y| x * y)?;
        Ok(self.push(y, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    fn scale(&mut self, a: &Var, c: f64) -> Var {
        let y = self.val(a).map(|x| x * c);
        self.push(y, Op::Scale(a.0, c), &[a.0])
    }

    fn offset(&mut self, a: &Var, c: f64) -> Var {
        let y = self.val(a).map(|x| x + c);
        self.push(y, Op::Offset(a.0), &[a.0])
    }

    fn unary(&mut self, a: &Var, op: Unary) -> Var {
        let y = self.val(a).map(|x| op.apply(x));
        self.push(y, Op::Unary(a.0, op), &[a.0])
    }

    fn concat_cols(&mut self, parts: &[&Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|p| self.val(p)).collect();
        let y = backend::concat_fwd(&vals)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(y, Op::Concat(ids.clone()), &ids))
    }

    fn batched_matvec(&mut self, m: &Var, v: &Var, out: usize) -> Result<Var> {
        let y = backend::matvec_fwd(self.val(m), self.val(v), out)?;
        Ok(self.push(y, Op::MatVec(m.0, v.0, out), &[m.0, v.0]))
    }

    fn sum(&mut self, a: &Var) -> Var {
        let y = Tensor::scalar(self.val(a).data().iter().sum());
        self.push(y, Op::Sum(a.0), &[a.0])
    }

    fn mean(&mut self, a: &Var) -> Var {
        let t = self.val(a);
        let y = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        self.push(y, Op::Mean(a.0), &[a.0])
    }

    fn softmax_cross_entropy(&mut self, logits: &Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = backend::softmax_ce_fwd(self.val(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe(logits.0, probs, labels.to_vec()),
            &[logits.0],
        ))
    }

    fn masked_mse(&mut self, pred: &Var, target: &Tensor, mask: &Tensor) -> Result<Var> {
        let (loss, count) = backend::masked_mse_fwd(self.val(pred), target, mask)?;
        let diff = self
            .val(pred)
            .data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
            .map(|((p, t), m)| if *m != 0.0 { p - t } else { 0.0 })
            .collect();
        Ok(self.push(Tensor::scalar(loss), Op::MaskedMse(pred.0, diff, count), &[pred.0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::vector(vec![3.0]));
        let y = t.mul(&x, &x).unwrap();
        let loss = t.sum(&y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut t = Tape::new();
        let p = t.param(&Tensor::vector(vec![1.0, 2.0]));
        let c = t.constant(Tensor::scalar(4.0));
        let g = t.backward(c).unwrap();
        assert_eq!(g.get(p).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let p = t.param(&Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(p), Err(Error::NonScalarLoss(2))));
    }

    #[test]
    fn shared_use_accumulates() {
        // f = x*x + 3x at x = 2 -> 7
        let mut t = Tape::new();
        let x = t.param(&Tensor::scalar(2.0));
        let sq = t.mul(&x, &x).unwrap();
        let lin = t.scale(&x, 3.0);
        let f = t.add(&sq, &lin).unwrap();
        assert_eq!(t.backward(f).unwrap().get(x).item(), 7.0);
    }
}
