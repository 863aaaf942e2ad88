use std::rc::Rc;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-feature statistics of one batch-norm evaluation in train mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    pub count: usize,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    Exp(Var),
    RowSquaredNorm(Var),
    Sum(Var),
    Mean(Var),
    GatherRows {
        x: Var,
        index: Rc<[usize]>,
    },
    SegmentMean {
        messages: Var,
        targets: Rc<[usize]>,
        counts: Vec<usize>,
    },
    IndexSelect {
        x: Var,
        index: Rc<[usize]>,
    },
    BatchNorm {
        x: Var,
        scale: Var,
        shift: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    LowRank {
        coeffs: Var,
        src: Var,
        gamma: Var,
        rank: usize,
        f_out: usize,
        f_in: usize,
        proj: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Records differentiable operations in execution order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn matrix_dims(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Sign of every leaky-ReLU input on the tape, in recording order.
    /// Two evaluations with different patterns straddle a kink.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu(a, _) = node.op {
                out.extend(self.nodes[a.0].value.data().iter().map(|&v| v > T::ZERO));
            }
        }
        out
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims("matmul", self.value(a))?;
        let (k2, n) = matrix_dims("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![T::ZERO; m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        T::gemm(m, k, n, av, k as isize, 1, bv, n as isize, 1, T::ZERO, &mut out);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `a[m x k] * b[n x k]^T`, the layout of a linear layer with
    /// weight `b` of shape `out x in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims("matmul_nt", self.value(a))?;
        let (n, k2) = matrix_dims("matmul_nt", self.value(b))?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul_nt",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![T::ZERO; m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        T::gemm(m, k, n, av, k as isize, 1, bv, 1, k as isize, T::ZERO, &mut out);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMulNt(a, b), &[a, b]))
    }

    /// Adds a length-`F` bias to every row of an `N x F` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, f) = matrix_dims("add_bias", self.value(x))?;
        if self.value(bias).numel() != f {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(bias).shape().to_vec(),
            });
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(f) {
            for (o, &bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let ta = self.value(a);
        Tensor {
            shape: ta.shape().to_vec(),
            data: ta.data().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.map(a, |x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let out = self.map(a, |x| if x > T::ZERO { x } else { x * slope });
        self.push(out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, T::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    /// `E x F -> E`, squared L2 norm of each row.
    pub fn row_squared_norm(&mut self, a: Var) -> Result<Var> {
        let (e, _) = matrix_dims("row_squared_norm", self.value(a))?;
        let ta = self.value(a);
        let data: Vec<T> = (0..e).map(|i| ta.row(i).iter().map(|&v| v * v).sum()).collect();
        Ok(self.push(Tensor::new([e], data)?, Op::RowSquaredNorm(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::from_usize(t.numel().max(1));
        self.push(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Selects rows `index[e]` of an `N x F` matrix into an `E x F` matrix.
    pub fn gather_rows(&mut self, x: Var, index: Rc<[usize]>) -> Result<Var> {
        let tx = self.value(x);
        let (n, f) = matrix_dims("gather_rows", tx)?;
        let mut data = Vec::with_capacity(index.len() * f);
        for &i in index.iter() {
            if i >= n {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: i,
                    len: n,
                });
            }
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::new([index.len(), f], data)?;
        Ok(self.push(out, Op::GatherRows { x, index }, &[x]))
    }

    /// Row `i` of the result is the mean of all message rows whose target
    /// is `i`; points without incoming messages get a zero row.
    pub fn segment_mean(&mut self, messages: Var, targets: Rc<[usize]>, n_points: usize) -> Result<Var> {
        let tm = self.value(messages);
        let (e, f) = matrix_dims("segment_mean", tm)?;
        if targets.len() != e {
            return Err(Error::Dimension {
                op: "segment_mean",
                lhs: tm.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut counts = vec![0usize; n_points];
        for &t in targets.iter() {
            if t >= n_points {
                return Err(Error::Index {
                    op: "segment_mean",
                    index: t,
                    len: n_points,
                });
            }
            counts[t] += 1;
        }
        let mut out = vec![T::ZERO; n_points * f];
        for (row, &t) in tm.data().chunks(f.max(1)).zip(targets.iter()) {
            let dst = &mut out[t * f..(t + 1) * f];
            for (d, &v) in dst.iter_mut().zip(row) {
                *d += v;
            }
        }
        for (dst, &c) in out.chunks_mut(f.max(1)).zip(&counts) {
            if c > 1 {
                let inv = T::ONE / T::from_usize(c);
                dst.iter_mut().for_each(|v| *v *= inv);
            }
        }
        let out = Tensor::new([n_points, f], out)?;
        Ok(self.push(
            out,
            Op::SegmentMean {
                messages,
                targets,
                counts,
            },
            &[messages],
        ))
    }

    /// Flat gather: `out[p] = x.data[index[p]]`, reshaped to `shape`.
    pub fn index_select(&mut self, x: Var, index: Rc<[usize]>, shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        if shape.iter().product::<usize>() != index.len() {
            return Err(Error::Dimension {
                op: "index_select",
                lhs: shape,
                rhs: vec![index.len()],
            });
        }
        let mut data = Vec::with_capacity(index.len());
        for &i in index.iter() {
            match tx.data().get(i) {
                Some(&v) => data.push(v),
                None => {
                    return Err(Error::Index {
                        op: "index_select",
                        index: i,
                        len: tx.numel(),
                    })
                }
            }
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::IndexSelect { x, index }, &[x]))
    }

    /// Per-feature batch normalization of an `N x F` matrix.
    ///
    /// With `running = None` the batch statistics are used and returned so
    /// the caller can update its running averages; otherwise the given
    /// `(mean, var)` are applied as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        eps: T,
        running: Option<(&[T], &[T])>,
    ) -> Result<(Var, Option<BatchNormStats<T>>)> {
        let tx = self.value(x);
        let (n, f) = matrix_dims("batch_norm", tx)?;
        for p in [scale, shift] {
            if self.value(p).numel() != f {
                return Err(Error::Dimension {
                    op: "batch_norm",
                    lhs: tx.shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let (mean, var, stats) = match running {
            Some((m, v)) => {
                if m.len() != f || v.len() != f {
                    return Err(Error::Dimension {
                        op: "batch_norm",
                        lhs: vec![f],
                        rhs: vec![m.len(), v.len()],
                    });
                }
                (m.to_vec(), v.to_vec(), None)
            }
            None => {
                if n < 2 {
                    return Err(Error::contract(format!(
                        "batch_norm in train mode needs at least 2 rows, got {n}"
                    )));
                }
                let inv_n = T::ONE / T::from_usize(n);
                let mut mean = vec![T::ZERO; f];
                for row in tx.data().chunks(f) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m *= inv_n);
                let mut var = vec![T::ZERO; f];
                for row in tx.data().chunks(f) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s *= inv_n);
                let stats = BatchNormStats {
                    mean: mean.clone(),
                    var: var.clone(),
                    count: n,
                };
                (mean, var, Some(stats))
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(n * f);
        for row in tx.data().chunks(f) {
            for j in 0..f {
                xhat.push((row[j] - mean[j]) * inv_std[j]);
            }
        }
        let (g, b) = (self.value(scale).data(), self.value(shift).data());
        let mut out = Vec::with_capacity(n * f);
        for row in xhat.chunks(f) {
            for j in 0..f {
                out.push(row[j] * g[j] + b[j]);
            }
        }
        let out = Tensor::new([n, f], out)?;
        let train = stats.is_some();
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
                train,
            },
            &[x, scale, shift],
        );
        Ok((v, stats))
    }

    /// Edgewise rank-`r` message passing.
    ///
    /// `coeffs` is `E x r(f_out + f_in + 1)`, laid out as all `r` output
    /// vectors, then all `r` input vectors, then `r` scalar weights. Each
    /// output row is `gamma_e * sum_t w_t * (in_t . src_e) * out_t`, which is
    /// the product of the rank-`r` matrix `sum_t w_t out_t in_t^T` with
    /// `src_e` without ever forming that matrix.
    pub fn low_rank_message(
        &mut self,
        coeffs: Var,
        src: Var,
        gamma: Var,
        rank: usize,
        f_out: usize,
        f_in: usize,
    ) -> Result<Var> {
        let (tc, ts, tg) = (self.value(coeffs), self.value(src), self.value(gamma));
        let (e, c) = matrix_dims("low_rank_message", tc)?;
        let width = rank * (f_out + f_in + 1);
        if c != width || ts.shape() != [e, f_in] || tg.numel() != e {
            return Err(Error::Dimension {
                op: "low_rank_message",
                lhs: vec![e, c, ts.rows(), ts.cols(), tg.numel()],
                rhs: vec![e, width, e, f_in, e],
            });
        }
        let mut proj = vec![T::ZERO; e * rank];
        let mut out = vec![T::ZERO; e * f_out];
        for edge in 0..e {
            let cf = tc.row(edge);
            let h = ts.row(edge);
            let (phi, rest) = cf.split_at(rank * f_out);
            let (psi, omega) = rest.split_at(rank * f_in);
            let o = &mut out[edge * f_out..(edge + 1) * f_out];
            for t in 0..rank {
                let s: T = psi[t * f_in..(t + 1) * f_in].iter().zip(h).map(|(&a, &b)| a * b).sum();
                proj[edge * rank + t] = s;
                let w = tg.data()[edge] * omega[t] * s;
                for (ov, &p) in o.iter_mut().zip(&phi[t * f_out..(t + 1) * f_out]) {
                    *ov += w * p;
                }
            }
        }
        let out = Tensor::new([e, f_out], out)?;
        Ok(self.push(
            out,
            Op::LowRank {
                coeffs,
                src,
                gamma,
                rank,
                f_out,
                f_in,
                proj,
            },
            &[coeffs, src, gamma],
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients {
                grads: grads.into_iter().map(|_| None).collect(),
            });
        }
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.map(|data| Tensor {
                    shape: node.value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        macro_rules! with_buf {
            ($v:expr, |$b:ident| $body:expr) => {
                if let Some($b) = grad_slot(nodes, grads, $v) {
                    $body
                }
            };
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                with_buf!(*a, |da| T::gemm(m, n, k, g, n as isize, 1, tb.data(), 1, n as isize, T::ONE, da));
                with_buf!(*b, |db| T::gemm(k, m, n, ta.data(), 1, k as isize, g, n as isize, 1, T::ONE, db));
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[0];
                with_buf!(*a, |da| T::gemm(m, n, k, g, n as isize, 1, tb.data(), k as isize, 1, T::ONE, da));
                with_buf!(*b, |db| T::gemm(n, m, k, g, 1, n as isize, ta.data(), k as isize, 1, T::ONE, db));
            }
            Op::AddBias(x, bias) => {
                with_buf!(*x, |dx| dx.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                with_buf!(*bias, |db| {
                    let f = db.len();
                    for row in g.chunks(f) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                    }
                });
            }
            Op::Add(a, b) => {
                with_buf!(*a, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                with_buf!(*b, |db| db.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
            }
            Op::Sub(a, b) => {
                with_buf!(*a, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                with_buf!(*b, |db| db.iter_mut().zip(g).for_each(|(d, &v)| *d -= v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                with_buf!(*a, |da| {
                    for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(tb) {
                        *d += gv * bv;
                    }
                });
                with_buf!(*b, |db| {
                    for ((d, &gv), &av) in db.iter_mut().zip(g).zip(ta) {
                        *d += gv * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                with_buf!(*a, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *c));
            }
            Op::LeakyRelu(a, slope) => {
                let ta = nodes[a.0].value.data();
                with_buf!(*a, |da| {
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(ta) {
                        *d += if x > T::ZERO { gv } else { gv * *slope };
                    }
                });
            }
            Op::Exp(a) => {
                let out = nodes[i].value.data();
                with_buf!(*a, |da| {
                    for ((d, &gv), &y) in da.iter_mut().zip(g).zip(out) {
                        *d += gv * y;
                    }
                });
            }
            Op::RowSquaredNorm(a) => {
                let ta = &nodes[a.0].value;
                let f = ta.shape()[1];
                let two = T::from_f64(2.0);
                with_buf!(*a, |da| {
                    for (e, &gv) in g.iter().enumerate() {
                        let w = two * gv;
                        for j in 0..f {
                            da[e * f + j] += w * ta.data()[e * f + j];
                        }
                    }
                });
            }
            Op::Sum(a) => {
                with_buf!(*a, |da| da.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Mean(a) => {
                let n = nodes[a.0].value.numel().max(1);
                let v = g[0] / T::from_usize(n);
                with_buf!(*a, |da| da.iter_mut().for_each(|d| *d += v));
            }
            Op::GatherRows { x, index } => {
                let f = nodes[x.0].value.cols();
                with_buf!(*x, |dx| {
                    for (row, &src) in g.chunks(f.max(1)).zip(index.iter()) {
                        for (d, &v) in dx[src * f..(src + 1) * f].iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                });
            }
            Op::SegmentMean {
                messages,
                targets,
                counts,
            } => {
                let f = nodes[i].value.cols();
                with_buf!(*messages, |dm| {
                    for (e, &t) in targets.iter().enumerate() {
                        let inv = T::ONE / T::from_usize(counts[t]);
                        for j in 0..f {
                            dm[e * f + j] += g[t * f + j] * inv;
                        }
                    }
                });
            }
            Op::IndexSelect { x, index } => {
                with_buf!(*x, |dx| {
                    for (&src, &v) in index.iter().zip(g) {
                        dx[src] += v;
                    }
                });
            }
            Op::BatchNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
                train,
            } => {
                let f = inv_std.len();
                let n = xhat.len() / f.max(1);
                let gamma = nodes[scale.0].value.data();
                with_buf!(*scale, |ds| {
                    for (grow, xrow) in g.chunks(f).zip(xhat.chunks(f)) {
                        for j in 0..f {
                            ds[j] += grow[j] * xrow[j];
                        }
                    }
                });
                with_buf!(*shift, |db| {
                    for grow in g.chunks(f) {
                        db.iter_mut().zip(grow).for_each(|(d, &v)| *d += v);
                    }
                });
                with_buf!(*x, |dx| {
                    if *train {
                        // dx = inv_std / n * (n*dy - sum(dy) - xhat * sum(dy*xhat)), dy = g*gamma
                        let mut sum_dy = vec![T::ZERO; f];
                        let mut sum_dy_xhat = vec![T::ZERO; f];
                        for (grow, xrow) in g.chunks(f).zip(xhat.chunks(f)) {
                            for j in 0..f {
                                let dy = grow[j] * gamma[j];
                                sum_dy[j] += dy;
                                sum_dy_xhat[j] += dy * xrow[j];
                            }
                        }
                        let nf = T::from_usize(n);
                        for (r, (grow, xrow)) in g.chunks(f).zip(xhat.chunks(f)).enumerate() {
                            for j in 0..f {
                                let dy = grow[j] * gamma[j];
                                dx[r * f + j] +=
                                    inv_std[j] / nf * (nf * dy - sum_dy[j] - xrow[j] * sum_dy_xhat[j]);
                            }
                        }
                    } else {
                        for (r, grow) in g.chunks(f).enumerate() {
                            for j in 0..f {
                                dx[r * f + j] += grow[j] * gamma[j] * inv_std[j];
                            }
                        }
                    }
                });
            }
            Op::LowRank {
                coeffs,
                src,
                gamma,
                rank,
                f_out,
                f_in,
                proj,
            } => {
                let (rank, f_out, f_in) = (*rank, *f_out, *f_in);
                let tc = &nodes[coeffs.0].value;
                let ts = &nodes[src.0].value;
                let tg = nodes[gamma.0].value.data();
                let width = rank * (f_out + f_in + 1);
                let e_count = tg.len();
                let mut need = [false; 3];
                for (slot, v) in need.iter_mut().zip([coeffs, src, gamma]) {
                    *slot = nodes[v.0].requires_grad;
                }
                let mut dc = need[0].then(|| vec![T::ZERO; e_count * width]);
                let mut ds = need[1].then(|| vec![T::ZERO; e_count * f_in]);
                let mut dg = need[2].then(|| vec![T::ZERO; e_count]);
                let mut dot_phi = vec![T::ZERO; rank];
                for e in 0..e_count {
                    let cf = tc.row(e);
                    let h = ts.row(e);
                    let ge = &g[e * f_out..(e + 1) * f_out];
                    let (phi, rest) = cf.split_at(rank * f_out);
                    let (psi, omega) = rest.split_at(rank * f_in);
                    let s = &proj[e * rank..(e + 1) * rank];
                    let gam = tg[e];
                    let mut dgam = T::ZERO;
                    for t in 0..rank {
                        dot_phi[t] = phi[t * f_out..(t + 1) * f_out].iter().zip(ge).map(|(&a, &b)| a * b).sum();
                        dgam += omega[t] * s[t] * dot_phi[t];
                    }
                    if let Some(dg) = dg.as_mut() {
                        dg[e] = dgam;
                    }
                    if let Some(dc) = dc.as_mut() {
                        let row = &mut dc[e * width..(e + 1) * width];
                        let (dphi, rest) = row.split_at_mut(rank * f_out);
                        let (dpsi, domega) = rest.split_at_mut(rank * f_in);
                        for t in 0..rank {
                            let w = gam * omega[t] * s[t];
                            for (d, &gv) in dphi[t * f_out..(t + 1) * f_out].iter_mut().zip(ge) {
                                *d = w * gv;
                            }
                            let dsv = gam * omega[t] * dot_phi[t];
                            for (d, &hv) in dpsi[t * f_in..(t + 1) * f_in].iter_mut().zip(h) {
                                *d = dsv * hv;
                            }
                            domega[t] = gam * s[t] * dot_phi[t];
                        }
                    }
                    if let Some(ds) = ds.as_mut() {
                        let row = &mut ds[e * f_in..(e + 1) * f_in];
                        for t in 0..rank {
                            let dsv = gam * omega[t] * dot_phi[t];
                            for (d, &p) in row.iter_mut().zip(&psi[t * f_in..(t + 1) * f_in]) {
                                *d += dsv * p;
                            }
                        }
                    }
                }
                for (v, local) in [(*coeffs, dc), (*src, ds), (*gamma, dg)] {
                    if let Some(local) = local {
                        with_buf!(v, |d| d.iter_mut().zip(&local).for_each(|(d, &x)| *d += x));
                    }
                }
            }
        }
    }
}

/// Gradient accumulator of `v`, allocated on first use; `None` when `v`
/// needs no gradient.
fn grad_slot<'a, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::ZERO; node.value.numel()]))
}
