//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] owns every tensor created through it: leaves carry input or
//! parameter values, derived nodes record the operation and parent ids that
//! produced them. Nodes are append-only, so parents always precede children
//! and the backward pass is a single reverse sweep.
//!
//! Lifetime model: one tape per forward pass, dropped after [`Tape::backward`]
//! has run and gradients have been read out. Gradients accumulate (`+=`)
//! across repeated backward calls until [`Tape::zero_grads`]; this is what
//! lets a multi-branch loss sum contributions from several consumers of the
//! same parameter leaf.
//!
//! The op set is exactly what the PH-VAE needs: affine layers, pointwise
//! activations and arithmetic, sum/MSE reductions, and the branch-wise
//! log-sum-exp used for latent fusion. No broadcasting beyond
//! scalar-vs-tensor, no convolutions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Clone, Debug)]
pub struct Tensor {
    id: usize,
    shape: Vec<usize>,
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => S::one() / (S::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

enum Op<S> {
    Leaf,
    Affine { x: usize, w: usize, b: usize },
    Activation { x: usize, kind: Activation },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: S },
    Exp { x: usize },
    Log { x: usize },
    Square { x: usize },
    Sum { x: usize },
    MseSum { x: usize, target: usize },
    LogSumExpBranches { branches: Vec<usize> },
}

struct Node<S> {
    values: Vec<S>,
    grad: Option<Vec<S>>,
    op: Op<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, values: Vec<S>, shape: Vec<usize>, op: Op<S>) -> Tensor {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        let id = self.nodes.len();
        self.nodes.push(Node { values, grad: None, op });
        Tensor { id, shape }
    }

    // ── Leaves ──────────────────────────────────────────────────────

    pub fn leaf(&mut self, values: Vec<S>, shape: Vec<usize>) -> Result<Tensor> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch {
                context: "leaf",
                lhs: vec![values.len()],
                rhs: shape,
            });
        }
        Ok(self.push(values, shape, Op::Leaf))
    }

    /// 1-D leaf.
    pub fn vector(&mut self, values: Vec<S>) -> Tensor {
        let shape = vec![values.len()];
        self.push(values, shape, Op::Leaf)
    }

    /// Row-major 2-D leaf.
    pub fn matrix(&mut self, values: Vec<S>, rows: usize, cols: usize) -> Result<Tensor> {
        self.leaf(values, vec![rows, cols])
    }

    pub fn scalar(&mut self, value: S) -> Tensor {
        self.push(vec![value], vec![1], Op::Leaf)
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn values(&self, t: &Tensor) -> &[S] {
        &self.nodes[t.id].values
    }

    pub fn value_scalar(&self, t: &Tensor) -> S {
        debug_assert!(t.is_scalar());
        self.nodes[t.id].values[0]
    }

    pub fn grad(&self, t: &Tensor) -> Option<&[S]> {
        self.nodes[t.id].grad.as_deref()
    }

    /// Clear all accumulated gradients.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    // ── Forward ops ─────────────────────────────────────────────────

    /// `out[i] = sum_j W[i,j] x[j] + b[i]` with `W: [k, m]`, `x: [m]`, `b: [k]`.
    pub fn affine(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (k, m) = match w.shape() {
            [k, m] => (*k, *m),
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "affine weight must be 2-D",
                    lhs: w.shape.clone(),
                    rhs: x.shape.clone(),
                })
            }
        };
        if x.len() != m || b.len() != k {
            return Err(Error::ShapeMismatch {
                context: "affine",
                lhs: w.shape.clone(),
                rhs: vec![x.len(), b.len()],
            });
        }
        let xv = &self.nodes[x.id].values;
        let wv = &self.nodes[w.id].values;
        let bv = &self.nodes[b.id].values;
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let row = &wv[i * m..(i + 1) * m];
            let mut acc = S::zero();
            for j in 0..m {
                acc += row[j] * xv[j];
            }
            out.push(acc + bv[i]);
        }
        Ok(self.push(
            out,
            vec![k],
            Op::Affine {
                x: x.id,
                w: w.id,
                b: b.id,
            },
        ))
    }

    pub fn activation(&mut self, x: &Tensor, kind: Activation) -> Tensor {
        let out: Vec<S> = self.nodes[x.id].values.iter().map(|&v| kind.apply(v)).collect();
        let shape = x.shape.clone();
        self.push(out, shape, Op::Activation { x: x.id, kind })
    }

    /// Equal shapes, or one side a scalar (broadcast).
    fn binary_shapes(&self, context: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
        if a.shape == b.shape {
            Ok(a.shape.clone())
        } else if a.is_scalar() {
            Ok(b.shape.clone())
        } else if b.is_scalar() {
            Ok(a.shape.clone())
        } else {
            Err(Error::ShapeMismatch {
                context,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            })
        }
    }

    fn pick<'a>(vals: &'a [S], i: usize) -> S {
        if vals.len() == 1 {
            vals[0]
        } else {
            vals[i]
        }
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let shape = self.binary_shapes("add", a, b)?;
        let n = shape.iter().product();
        let (av, bv) = (&self.nodes[a.id].values, &self.nodes[b.id].values);
        let out: Vec<S> = (0..n).map(|i| Self::pick(av, i) + Self::pick(bv, i)).collect();
        Ok(self.push(out, shape, Op::Add { a: a.id, b: b.id }))
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let shape = self.binary_shapes("sub", a, b)?;
        let n = shape.iter().product();
        let (av, bv) = (&self.nodes[a.id].values, &self.nodes[b.id].values);
        let out: Vec<S> = (0..n).map(|i| Self::pick(av, i) - Self::pick(bv, i)).collect();
        Ok(self.push(out, shape, Op::Sub { a: a.id, b: b.id }))
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let shape = self.binary_shapes("mul", a, b)?;
        let n = shape.iter().product();
        let (av, bv) = (&self.nodes[a.id].values, &self.nodes[b.id].values);
        let out: Vec<S> = (0..n).map(|i| Self::pick(av, i) * Self::pick(bv, i)).collect();
        Ok(self.push(out, shape, Op::Mul { a: a.id, b: b.id }))
    }

    pub fn scale(&mut self, x: &Tensor, c: S) -> Tensor {
        let out: Vec<S> = self.nodes[x.id].values.iter().map(|&v| v * c).collect();
        let shape = x.shape.clone();
        self.push(out, shape, Op::Scale { x: x.id, c })
    }

    pub fn exp(&mut self, x: &Tensor) -> Tensor {
        let out: Vec<S> = self.nodes[x.id].values.iter().map(|&v| v.exp()).collect();
        let shape = x.shape.clone();
        self.push(out, shape, Op::Exp { x: x.id })
    }

    /// Natural log; inputs must be strictly positive.
    pub fn log(&mut self, x: &Tensor) -> Result<Tensor> {
        for (i, &v) in self.nodes[x.id].values.iter().enumerate() {
            if v <= S::zero() {
                return Err(Error::LogDomain {
                    index: i,
                    value: v.as_f64(),
                });
            }
        }
        let out: Vec<S> = self.nodes[x.id].values.iter().map(|&v| v.ln()).collect();
        let shape = x.shape.clone();
        Ok(self.push(out, shape, Op::Log { x: x.id }))
    }

    pub fn square(&mut self, x: &Tensor) -> Tensor {
        let out: Vec<S> = self.nodes[x.id].values.iter().map(|&v| v * v).collect();
        let shape = x.shape.clone();
        self.push(out, shape, Op::Square { x: x.id })
    }

    pub fn sum(&mut self, x: &Tensor) -> Tensor {
        let total = self.nodes[x.id].values.iter().copied().sum();
        self.push(vec![total], vec![1], Op::Sum { x: x.id })
    }

    /// `sum_i (x[i] - target[i])^2` as a scalar node.
    pub fn mse_sum(&mut self, x: &Tensor, target: &Tensor) -> Result<Tensor> {
        if x.shape != target.shape {
            return Err(Error::ShapeMismatch {
                context: "mse_sum",
                lhs: x.shape.clone(),
                rhs: target.shape.clone(),
            });
        }
        let (xv, tv) = (&self.nodes[x.id].values, &self.nodes[target.id].values);
        let total = xv
            .iter()
            .zip(tv.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(
            vec![total],
            vec![1],
            Op::MseSum {
                x: x.id,
                target: target.id,
            },
        ))
    }

    /// `out[i] = log(sum_s exp(v_s[i])) - log S`, the log of the mean of
    /// `exp(v_s)` across branches. Uses max subtraction, so equal branches
    /// return the common value exactly.
    pub fn logsumexp_branches(&mut self, branches: &[Tensor]) -> Result<Tensor> {
        if branches.is_empty() {
            return Err(Error::Empty {
                context: "logsumexp_branches",
            });
        }
        let shape = branches[0].shape.clone();
        for b in branches.iter().skip(1) {
            if b.shape != shape {
                return Err(Error::ShapeMismatch {
                    context: "logsumexp_branches",
                    lhs: shape,
                    rhs: b.shape.clone(),
                });
            }
        }
        let n: usize = shape.iter().product();
        let count = S::from_f64(branches.len() as f64);
        let log_count = count.ln();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = self.nodes[branches[0].id].values[i];
            for b in branches.iter().skip(1) {
                m = m.max(self.nodes[b.id].values[i]);
            }
            let mut sum = S::zero();
            for b in branches.iter() {
                sum += (self.nodes[b.id].values[i] - m).exp();
            }
            out.push(m + (sum.ln() - log_count));
        }
        Ok(self.push(
            out,
            shape,
            Op::LogSumExpBranches {
                branches: branches.iter().map(|b| b.id).collect(),
            },
        ))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Gradients of every node reachable
    /// from `root` are accumulated into their `grad` buffers; call
    /// [`Tape::zero_grads`] between independent backward passes.
    pub fn backward(&mut self, root: &Tensor) -> Result<()> {
        if !root.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: root.shape.clone(),
            });
        }
        // Per-pass flow buffers keep repeated backward calls independent;
        // the result of this pass is added into the persistent grads at the end.
        let mut flow: Vec<Option<Vec<S>>> = vec![None; root.id + 1];
        flow[root.id] = Some(vec![S::one()]);

        for id in (0..=root.id).rev() {
            let d_out = match flow[id].take() {
                Some(d) => d,
                None => continue,
            };
            self.backward_op(id, &d_out, &mut flow);
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(g) => {
                    for (gi, di) in g.iter_mut().zip(d_out.iter()) {
                        *gi += *di;
                    }
                }
                None => node.grad = Some(d_out),
            }
        }
        Ok(())
    }

    fn backward_op(&self, id: usize, d_out: &[S], flow: &mut [Option<Vec<S>>]) {
        let two = S::from_f64(2.0);
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let m = self.nodes[*x].values.len();
                let k = d_out.len();
                let xv = &self.nodes[*x].values;
                let wv = &self.nodes[*w].values;
                {
                    let d_x = Self::flow_buf(flow, *x, m);
                    for i in 0..k {
                        let row = &wv[i * m..(i + 1) * m];
                        let d = d_out[i];
                        for j in 0..m {
                            d_x[j] += row[j] * d;
                        }
                    }
                }
                {
                    let d_w = Self::flow_buf(flow, *w, k * m);
                    for i in 0..k {
                        let d = d_out[i];
                        for j in 0..m {
                            d_w[i * m + j] += d * xv[j];
                        }
                    }
                }
                let d_b = Self::flow_buf(flow, *b, k);
                for i in 0..k {
                    d_b[i] += d_out[i];
                }
            }
            Op::Activation { x, kind } => {
                let n = d_out.len();
                let d_x = Self::flow_buf(flow, *x, n);
                match kind {
                    Activation::Relu => {
                        let xv = &self.nodes[*x].values;
                        for i in 0..n {
                            if xv[i] > S::zero() {
                                d_x[i] += d_out[i];
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        let yv = &self.nodes[id].values;
                        for i in 0..n {
                            d_x[i] += d_out[i] * yv[i] * (S::one() - yv[i]);
                        }
                    }
                    Activation::Tanh => {
                        let yv = &self.nodes[id].values;
                        for i in 0..n {
                            d_x[i] += d_out[i] * (S::one() - yv[i] * yv[i]);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                self.binary_backward(*a, *b, d_out, flow, |_, _, d| (d, d));
            }
            Op::Sub { a, b } => {
                self.binary_backward(*a, *b, d_out, flow, |_, _, d| (d, -d));
            }
            Op::Mul { a, b } => {
                self.binary_backward(*a, *b, d_out, flow, |av, bv, d| (d * bv, d * av));
            }
            Op::Scale { x, c } => {
                let d_x = Self::flow_buf(flow, *x, d_out.len());
                for (dx, d) in d_x.iter_mut().zip(d_out.iter()) {
                    *dx += *d * *c;
                }
            }
            Op::Exp { x } => {
                let yv = &self.nodes[id].values;
                let d_x = Self::flow_buf(flow, *x, d_out.len());
                for i in 0..d_out.len() {
                    d_x[i] += d_out[i] * yv[i];
                }
            }
            Op::Log { x } => {
                let xv = &self.nodes[*x].values;
                let d_x = Self::flow_buf(flow, *x, d_out.len());
                for i in 0..d_out.len() {
                    d_x[i] += d_out[i] / xv[i];
                }
            }
            Op::Square { x } => {
                let xv = &self.nodes[*x].values;
                let d_x = Self::flow_buf(flow, *x, d_out.len());
                for i in 0..d_out.len() {
                    d_x[i] += d_out[i] * two * xv[i];
                }
            }
            Op::Sum { x } => {
                let n = self.nodes[*x].values.len();
                let d = d_out[0];
                let d_x = Self::flow_buf(flow, *x, n);
                for dx in d_x.iter_mut() {
                    *dx += d;
                }
            }
            Op::MseSum { x, target } => {
                let xv = &self.nodes[*x].values;
                let tv = &self.nodes[*target].values;
                let n = xv.len();
                let d = d_out[0];
                {
                    let d_x = Self::flow_buf(flow, *x, n);
                    for i in 0..n {
                        d_x[i] += d * two * (xv[i] - tv[i]);
                    }
                }
                let d_t = Self::flow_buf(flow, *target, n);
                for i in 0..n {
                    d_t[i] -= d * two * (xv[i] - tv[i]);
                }
            }
            Op::LogSumExpBranches { branches } => {
                // d_v_s[i] = softmax over branches at position i, times d_out[i].
                let n = d_out.len();
                for i in 0..n {
                    let mut m = self.nodes[branches[0]].values[i];
                    for b in branches.iter().skip(1) {
                        m = m.max(self.nodes[*b].values[i]);
                    }
                    let mut denom = S::zero();
                    for b in branches.iter() {
                        denom += (self.nodes[*b].values[i] - m).exp();
                    }
                    for b in branches.iter() {
                        let wgt = (self.nodes[*b].values[i] - m).exp() / denom;
                        Self::flow_buf(flow, *b, n)[i] += wgt * d_out[i];
                    }
                }
            }
        }
    }

    fn binary_backward(
        &self,
        a: usize,
        b: usize,
        d_out: &[S],
        flow: &mut [Option<Vec<S>>],
        rule: impl Fn(S, S, S) -> (S, S),
    ) {
        let an = self.nodes[a].values.len();
        let bn = self.nodes[b].values.len();
        for i in 0..d_out.len() {
            let av = Self::pick(&self.nodes[a].values, i);
            let bv = Self::pick(&self.nodes[b].values, i);
            let (da, db) = rule(av, bv, d_out[i]);
            // A broadcast scalar operand collects the sum of contributions.
            Self::flow_buf(flow, a, an)[if an == 1 { 0 } else { i }] += da;
            Self::flow_buf(flow, b, bn)[if bn == 1 { 0 } else { i }] += db;
        }
    }

    fn flow_buf(flow: &mut [Option<Vec<S>>], id: usize, len: usize) -> &mut Vec<S> {
        flow[id].get_or_insert_with(|| vec![S::zero(); len])
    }
}

/// Max over parameters of `|analytic - central difference| / max(1, |analytic|)`
/// with central difference `(f(t + h e_i) - f(t - h e_i)) / 2h`.
///
/// `f` must be deterministic in `theta` (fix any noise draws before calling).
/// A non-finite `f` propagates as a non-finite result.
pub fn grad_check<S: Scalar>(
    mut f: impl FnMut(&[S]) -> S,
    analytic: &[S],
    theta: &[S],
    h: S,
) -> S {
    assert_eq!(analytic.len(), theta.len());
    let mut work = theta.to_vec();
    let mut worst = S::zero();
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let down = f(&work);
        work[i] = orig;
        let numeric = (up - down) / (h + h);
        let denom = S::one().max(analytic[i].abs());
        let err = (analytic[i] - numeric).abs() / denom;
        if err.is_nan() {
            return err;
        }
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    type T = Tape<f64>;

    #[test]
    fn affine_identity_map() {
        let mut tape = T::new();
        let x = tape.vector(vec![3.0, 4.0]);
        let w = tape.matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let b = tape.vector(vec![0.0, 0.0]);
        let y = tape.affine(&x, &w, &b).unwrap();
        assert_eq!(tape.values(&y), &[3.0, 4.0]);
    }

    #[test]
    fn affine_hand_arithmetic() {
        // 1*1 + 2*1 + 5 = 8
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 1.0]);
        let w = tape.matrix(vec![1.0, 2.0], 1, 2).unwrap();
        let b = tape.vector(vec![5.0]);
        let y = tape.affine(&x, &w, &b).unwrap();
        assert_eq!(tape.values(&y), &[8.0]);
    }

    #[test]
    fn affine_zero_map() {
        let mut tape = T::new();
        let x = tape.vector(vec![7.0, 9.0]);
        let w = tape.matrix(vec![0.0, 0.0], 1, 2).unwrap();
        let b = tape.vector(vec![0.0]);
        let y = tape.affine(&x, &w, &b).unwrap();
        assert_eq!(tape.values(&y), &[0.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 2.0, 3.0]);
        let w = tape.matrix(vec![1.0, 2.0], 1, 2).unwrap();
        let b = tape.vector(vec![0.0]);
        let err = tape.affine(&x, &w, &b).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn activations_at_reference_points() {
        let mut tape = T::new();
        let x = tape.vector(vec![-1.0, 0.0, 2.0]);
        let r = tape.activation(&x, Activation::Relu);
        assert_eq!(tape.values(&r), &[0.0, 0.0, 2.0]);

        let z = tape.scalar(0.0);
        let s = tape.activation(&z, Activation::Sigmoid);
        assert_eq!(tape.value_scalar(&s), 0.5);
        let t = tape.activation(&z, Activation::Tanh);
        assert_eq!(tape.value_scalar(&t), 0.0);
    }

    #[test]
    fn pointwise_values() {
        let mut tape = T::new();
        let a = tape.vector(vec![1.0, 2.0]);
        let b = tape.vector(vec![3.0, 4.0]);
        let sum = tape.add(&a, &b).unwrap();
        assert_eq!(tape.values(&sum), &[4.0, 6.0]);

        let e = tape.vector(vec![0.0, 1.0]);
        let exp = tape.exp(&e);
        assert_eq!(tape.values(&exp)[0], 1.0);
        assert!((tape.values(&exp)[1] - std::f64::consts::E).abs() < 1e-15);

        let m = tape.vector(vec![-3.0]);
        let sq = tape.square(&m);
        assert_eq!(tape.values(&sq), &[9.0]);
    }

    #[test]
    fn pointwise_scalar_broadcast() {
        let mut tape = T::new();
        let one = tape.scalar(1.0);
        let v = tape.vector(vec![0.5, -2.0, 3.0]);
        let y = tape.add(&one, &v).unwrap();
        assert_eq!(tape.values(&y), &[1.5, -1.0, 4.0]);
        // Gradient of the scalar side sums over the vector positions.
        let root = tape.sum(&y);
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&one).unwrap(), &[3.0]);
    }

    #[test]
    fn log_domain_error_carries_index() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 0.0, 2.0]);
        match tape.log(&x) {
            Err(Error::LogDomain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected LogDomain, got {other:?}"),
        }
    }

    #[test]
    fn reductions() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 2.0, 3.0]);
        let s = tape.sum(&x);
        assert_eq!(tape.value_scalar(&s), 6.0);

        let a = tape.vector(vec![1.0, 1.0]);
        let b = tape.vector(vec![1.0, 1.0]);
        let zero = tape.mse_sum(&a, &b).unwrap();
        assert_eq!(tape.value_scalar(&zero), 0.0);

        let c = tape.vector(vec![2.0, 0.0]);
        let d = tape.vector(vec![0.0, 0.0]);
        let four = tape.mse_sum(&c, &d).unwrap();
        assert_eq!(tape.value_scalar(&four), 4.0);
    }

    #[test]
    fn logsumexp_single_branch_is_identity() {
        let mut tape = T::new();
        let v = tape.vector(vec![0.7]);
        let out = tape.logsumexp_branches(&[v]).unwrap();
        assert_eq!(tape.values(&out), &[0.7]);
    }

    #[test]
    fn logsumexp_equal_branches_exact() {
        let mut tape = T::new();
        for c in [-123.456, 0.0, 1e-9, 42.0, 700.0] {
            let a = tape.vector(vec![c]);
            let b = tape.vector(vec![c]);
            let out = tape.logsumexp_branches(&[a, b]).unwrap();
            assert_eq!(tape.values(&out), &[c], "c = {c}");
        }
    }

    #[test]
    fn logsumexp_mean_of_exponentials() {
        // log((e^0 + e^ln3) / 2) = log 2
        let mut tape = T::new();
        let a = tape.vector(vec![0.0]);
        let b = tape.vector(vec![3.0f64.ln()]);
        let out = tape.logsumexp_branches(&[a, b]).unwrap();
        assert!((tape.value_scalar(&out) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_empty_errors() {
        let mut tape = T::new();
        assert!(matches!(
            tape.logsumexp_branches(&[]),
            Err(Error::Empty { .. })
        ));
    }

    #[test]
    fn logsumexp_stable_at_large_magnitudes() {
        let mut tape = T::new();
        let a = tape.vector(vec![1000.0]);
        let b = tape.vector(vec![998.0]);
        let out = tape.logsumexp_branches(&[a, b]).unwrap();
        // log((e^1000 + e^998)/2) = 1000 + log((1 + e^-2)/2)
        let expect = 1000.0 + ((1.0 + (-2.0f64).exp()) / 2.0).ln();
        assert!((tape.value_scalar(&out) - expect).abs() < 1e-12);
    }

    #[test]
    fn backward_sum_is_ones() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 2.0]);
        let root = tape.sum(&x);
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_mse_is_two_x() {
        let mut tape = T::new();
        let x = tape.vector(vec![3.0]);
        let zero = tape.vector(vec![0.0]);
        let root = tape.mse_sum(&x, &zero).unwrap();
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_sigmoid_at_zero() {
        let mut tape = T::new();
        let x = tape.scalar(0.0);
        let y = tape.activation(&x, Activation::Sigmoid);
        tape.backward(&y).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[0.25]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(&x),
            Err(Error::NonScalarRoot { .. })
        ));
    }

    #[test]
    fn two_consumers_sum_contributions() {
        // f = x * x through two references of the same node: df/dx = 2x.
        let mut tape = T::new();
        let x = tape.vector(vec![3.0]);
        let y = tape.mul(&x, &x).unwrap();
        let root = tape.sum(&y);
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[6.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.0, 2.0]);
        let root = tape.sum(&x);
        tape.backward(&root).unwrap();
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[2.0, 2.0]);
        tape.zero_grads();
        assert!(tape.grad(&x).is_none());
        tape.backward(&root).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let mut tape = T::new();
        let x = tape.vector(vec![1.5, -2.5]);
        let before = tape.values(&x).to_vec();
        let _ = tape.activation(&x, Activation::Tanh);
        let y = tape.square(&x);
        let _ = tape.add(&x, &y).unwrap();
        assert_eq!(tape.values(&x), &before[..]);
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let theta = vec![0.3, -1.2, 2.1, 0.0];
        let analytic = vec![1.0; 4];
        let err = grad_check(|t| t.iter().sum::<f64>(), &analytic, &theta, 1e-5);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn grad_check_quadratic() {
        let theta = vec![0.4, -0.9, 1.7];
        let analytic: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = grad_check(|t| t.iter().map(|x| x * x).sum::<f64>(), &analytic, &theta, 1e-5);
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn grad_check_propagates_non_finite() {
        let theta = vec![0.0];
        let analytic = vec![0.0];
        let err = grad_check(|_| f64::NAN, &analytic, &theta, 1e-5);
        assert!(err.is_nan());
    }

    /// Finite-difference check of one composite expression per op, on
    /// randomized shapes up to 16. Inputs are kept away from relu's kink
    /// and log's domain edge so the central difference is valid.
    #[test]
    fn every_op_matches_central_differences() {
        let mut rng = Rng::new(0xAD01);
        for round in 0..10 {
            let m = 1 + rng.index(16);
            let k = 1 + rng.index(16);
            let x0: Vec<f64> = (0..m).map(|_| rng.uniform(0.1, 1.5)).collect();
            let w0: Vec<f64> = (0..k * m).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b0: Vec<f64> = (0..k).map(|_| rng.uniform(-0.5, 0.5)).collect();

            let mut theta = x0.clone();
            theta.extend_from_slice(&w0);
            theta.extend_from_slice(&b0);

            let eval = |t: &[f64]| -> (f64, Option<(Vec<f64>, Vec<f64>, Vec<f64>)>) {
                let (xs, rest) = t.split_at(m);
                let (ws, bs) = rest.split_at(k * m);
                let mut tape = T::new();
                let x = tape.vector(xs.to_vec());
                let w = tape.matrix(ws.to_vec(), k, m).unwrap();
                let b = tape.vector(bs.to_vec());
                let h = tape.affine(&x, &w, &b).unwrap();
                let a = tape.activation(&h, Activation::Tanh);
                let sq = tape.square(&a);
                let e = tape.exp(&a);
                let prod = tape.mul(&sq, &e).unwrap();
                let shifted = {
                    let one = tape.scalar(1.5);
                    tape.add(&prod, &one).unwrap()
                };
                let lg = tape.log(&shifted).unwrap();
                let sig = tape.activation(&lg, Activation::Sigmoid);
                let diff = tape.sub(&sig, &sq).unwrap();
                let scaled = tape.scale(&diff, 0.7);
                let lse = tape.logsumexp_branches(&[scaled.clone(), sq.clone()]).unwrap();
                let target = tape.vector(vec![0.25; k]);
                let mse = tape.mse_sum(&lse, &target).unwrap();
                let s1 = tape.sum(&prod);
                let root = tape.add(&mse, &s1).unwrap();
                let v = tape.value_scalar(&root);
                tape.backward(&root).unwrap();
                let gx = tape.grad(&x).unwrap().to_vec();
                let gw = tape.grad(&w).unwrap().to_vec();
                let gb = tape.grad(&b).unwrap().to_vec();
                (v, Some((gx, gw, gb)))
            };

            let (_, grads) = eval(&theta);
            let (gx, gw, gb) = grads.unwrap();
            let mut analytic = gx;
            analytic.extend(gw);
            analytic.extend(gb);

            let err = grad_check(|t| eval(t).0, &analytic, &theta, 1e-5);
            assert!(err < 1e-4, "round {round}: max rel err {err}");
        }
    }

    /// Relu's piecewise gradient, checked away from zero.
    #[test]
    fn relu_gradient_matches_central_differences() {
        let theta = vec![-1.3, -0.4, 0.6, 2.0];
        let eval = |t: &[f64]| {
            let mut tape = T::new();
            let x = tape.vector(t.to_vec());
            let r = tape.activation(&x, Activation::Relu);
            let sq = tape.square(&r);
            let root = tape.sum(&sq);
            let v = tape.value_scalar(&root);
            tape.backward(&root).unwrap();
            (v, tape.grad(&x).unwrap().to_vec())
        };
        let (_, analytic) = eval(&theta);
        let err = grad_check(|t| eval(t).0, &analytic, &theta, 1e-5);
        assert!(err < 1e-4, "err = {err}");
    }
}
