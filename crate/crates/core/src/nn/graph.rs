//! Tape-based reverse-mode differentiation over dense row-major tensors.
//!
//! A [`Graph`] records every operation of one forward pass. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns gradients for every node that depends on a trainable leaf.
//! Ops are deliberately coarse (fused layer norm, fused causal attention)
//! so a transformer forward is a few dozen nodes, not thousands.

use crate::scalar::{lit, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![v; n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn column(data: Vec<T>) -> Self {
        let n = data.len();
        Self::new(vec![n, 1], data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows × columns view of a rank-2 (or rank-1, as one row) tensor.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [m, n] => (*m, *n),
            s => panic!("expected a matrix, got shape {s:?}"),
        }
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Shift(Var),
    Square(Var),
    Log(Var),
    Sigmoid(Var),
    Gelu(Var, Vec<T>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    CausalAttention {
        qkv: Var,
        batch: usize,
        len: usize,
        heads: usize,
        probs: Vec<T>,
    },
    Interleave(Vec<Var>),
    Gather {
        x: Var,
        rows: Vec<usize>,
    },
    Column {
        x: Var,
        col: usize,
    },
    Dot {
        x: Var,
        w: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

// libm tanh is several times slower than exp on this path
#[inline]
fn fast_tanh<T: Scalar>(u: T) -> T {
    let two = T::one() + T::one();
    T::one() - two / ((two * u).exp() + T::one())
}

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c: T = lit(GELU_C);
    let a: T = lit(GELU_A);
    let half: T = lit(0.5);
    half * x * (T::one() + fast_tanh(c * (x + a * x * x * x)))
}

/// Derivative given `th`, the tanh term of the forward pass.
fn gelu_grad<T: Scalar>(x: T, th: T) -> T {
    let c: T = lit(GELU_C);
    let a: T = lit(GELU_A);
    let half: T = lit(0.5);
    let three: T = lit(3.0);
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + three * a * x * x)
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise layer norm; returns (output, xhat, rstd).
pub(crate) fn layer_norm_rows<T: Scalar>(
    x: &[T],
    cols: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / cols;
    let eps: T = lit(LAYER_NORM_EPS);
    let nf = T::from_usize(cols).unwrap();
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() / nf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..cols {
            let h = (row[j] - mean) * rs;
            xhat[r * cols + j] = h;
            y[r * cols + j] = h * gamma[j] + beta[j];
        }
    }
    (y, xhat, rstd)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Copies `v` into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dimensions differ");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &self.value(a).data,
            k as isize,
            1,
            &self.value(b).data,
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b), ng)
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let (m, n) = self.value(x).dims2();
        let b = &self.value(bias).data;
        assert_eq!(b.len(), n, "bias length differs from row width");
        let mut out = self.value(x).data.clone();
        for row in out.chunks_mut(n) {
            for (o, &bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(Tensor::new(vec![m, n], out), Op::AddRowBias(x, bias), ng)
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row_bias(y, b)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "elementwise shapes differ");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), op, ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| f(x)).collect();
        let shape = t.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn shift(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x + s, Op::Shift(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let c: T = lit(GELU_C);
        let k: T = lit(GELU_A);
        let half: T = lit(0.5);
        let t = self.value(a);
        let th: Vec<T> = t.data.iter().map(|&x| fast_tanh(c * (x + k * x * x * x))).collect();
        let data = t.data.iter().zip(&th).map(|(&x, &h)| half * x * (T::one() + h)).collect();
        let shape = t.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Gelu(a, th), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (m, n) = self.value(x).dims2();
        let (y, xhat, rstd) = layer_norm_rows(
            &self.value(x).data,
            n,
            &self.value(gamma).data,
            &self.value(beta).data,
        );
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            Tensor::new(vec![m, n], y),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Multi-head causal self-attention over `batch` sequences of `len` tokens.
    ///
    /// `qkv` is `[batch * len, 3 * d]` holding queries, keys and values side
    /// by side; the result is `[batch * len, d]`. Token `i` attends to
    /// tokens `0..=i` of its own sequence.
    pub fn causal_attention(&mut self, qkv: Var, batch: usize, len: usize, heads: usize) -> Var {
        let (rows, w3) = self.value(qkv).dims2();
        assert_eq!(rows, batch * len, "attention rows differ from batch * len");
        assert_eq!(w3 % 3, 0);
        let d = w3 / 3;
        assert_eq!(d % heads, 0, "model width not divisible by heads");
        let dh = d / heads;
        let scale: T = T::one() / T::from_usize(dh).unwrap().sqrt();
        let src = &self.value(qkv).data;
        let mut out = vec![T::zero(); rows * d];
        let mut probs = vec![T::zero(); batch * heads * len * len];
        for b in 0..batch {
            let base = b * len * w3;
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
                T::gemm(
                    len,
                    dh,
                    len,
                    scale,
                    &src[base + h * dh..],
                    w3 as isize,
                    1,
                    &src[base + d + h * dh..],
                    1,
                    w3 as isize,
                    T::zero(),
                    p,
                    len as isize,
                    1,
                );
                for i in 0..len {
                    let row = &mut p[i * len..(i + 1) * len];
                    let mx = row[..=i].iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for v in row[..=i].iter_mut() {
                        *v = (*v - mx).exp();
                        sum += *v;
                    }
                    for v in row[..=i].iter_mut() {
                        *v /= sum;
                    }
                    for v in row[i + 1..].iter_mut() {
                        *v = T::zero();
                    }
                }
                T::gemm(
                    len,
                    len,
                    dh,
                    T::one(),
                    p,
                    len as isize,
                    1,
                    &src[base + 2 * d + h * dh..],
                    w3 as isize,
                    1,
                    T::zero(),
                    &mut out[b * len * d + h * dh..],
                    d as isize,
                    1,
                );
            }
        }
        let ng = self.ng(qkv);
        self.push(
            Tensor::new(vec![rows, d], out),
            Op::CausalAttention {
                qkv,
                batch,
                len,
                heads,
                probs,
            },
            ng,
        )
    }

    /// Interleaves `k` equally shaped `[n, d]` inputs row by row into
    /// `[n * k, d]`: output row `i * k + j` is row `i` of input `j`.
    pub fn interleave(&mut self, parts: &[Var]) -> Var {
        let (n, d) = self.value(parts[0]).dims2();
        let k = parts.len();
        let mut out = vec![T::zero(); n * k * d];
        for (j, &p) in parts.iter().enumerate() {
            let t = self.value(p);
            assert_eq!(t.dims2(), (n, d), "interleave inputs differ in shape");
            for i in 0..n {
                out[(i * k + j) * d..(i * k + j + 1) * d].copy_from_slice(&t.data[i * d..(i + 1) * d]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new(vec![n * k, d], out), Op::Interleave(parts.to_vec()), ng)
    }

    /// Selects rows of a matrix (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let (m, d) = self.value(x).dims2();
        let src = &self.value(x).data;
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            assert!(r < m, "gather row {r} out of range {m}");
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let ng = self.ng(x);
        let n = rows.len();
        self.push(Tensor::new(vec![n, d], out), Op::Gather { x, rows }, ng)
    }

    /// Column `col` of an `[m, n]` matrix as `[m, 1]`.
    pub fn column(&mut self, x: Var, col: usize) -> Var {
        let (m, n) = self.value(x).dims2();
        assert!(col < n);
        let data = (0..m).map(|i| self.value(x).data[i * n + col]).collect();
        let ng = self.ng(x);
        self.push(Tensor::new(vec![m, 1], data), Op::Column { x, col }, ng)
    }

    /// `sum_i w_i x_i` as a one-element tensor.
    pub fn dot(&mut self, x: Var, w: Vec<T>) -> Var {
        assert_eq!(self.value(x).len(), w.len(), "dot weights differ in length");
        let s = self.value(x).data.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Dot { x, w }, ng)
    }

    /// Reverse pass from a one-element node.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape("backward needs a scalar root".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2();
                let (_, n) = val(*b).dims2();
                if wants(*a) {
                    let bd = &val(*b).data;
                    acc(*a, &mut |ga| {
                        // dA += dC @ B^T
                        T::gemm(m, n, k, T::one(), g, n as isize, 1, bd, 1, n as isize, T::one(), ga, k as isize, 1);
                    });
                }
                if wants(*b) {
                    let ad = &val(*a).data;
                    acc(*b, &mut |gb| {
                        // dB += A^T @ dC
                        T::gemm(k, m, n, T::one(), ad, 1, k as isize, g, n as isize, 1, T::one(), gb, n as isize, 1);
                    });
                }
            }
            Op::AddRowBias(x, bias) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b));
                let n = val(*bias).len();
                acc(*bias, &mut |gb| {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&val(*a).data, &val(*b).data);
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (&val(*a).data, &val(*b).data);
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *s));
            }
            Op::Shift(a) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
            Op::Square(a) => {
                let av = &val(*a).data;
                let two: T = lit(2.0);
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += two * av[i] * g[i];
                    }
                });
            }
            Op::Log(a) => {
                let av = &val(*a).data;
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / av[i];
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value.data;
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i] * (T::one() - y[i]);
                    }
                });
            }
            Op::Gelu(a, th) => {
                let av = &val(*a).data;
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * gelu_grad(av[i], th[i]);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = val(*gamma).len();
                let gm = &val(*gamma).data;
                let nf = T::from_usize(n).unwrap();
                acc(*x, &mut |gx| {
                    let mut dxhat = vec![T::zero(); n];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for j in 0..n {
                            dxhat[j] = gr[j] * gm[j];
                            s1 += dxhat[j];
                            s2 += dxhat[j] * hr[j];
                        }
                        let (m1, m2) = (s1 / nf, s2 / nf);
                        for j in 0..n {
                            gx[r * n + j] += rs * (dxhat[j] - m1 - hr[j] * m2);
                        }
                    }
                });
                acc(*gamma, &mut |gg| {
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                });
                acc(*beta, &mut |gb| {
                    for gr in g.chunks(n) {
                        gb.iter_mut().zip(gr).for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::CausalAttention {
                qkv,
                batch,
                len,
                heads,
                probs,
            } => {
                let (batch, len, heads) = (*batch, *len, *heads);
                let src = &val(*qkv).data;
                let w3 = val(*qkv).dims2().1;
                let d = w3 / 3;
                let dh = d / heads;
                let scale: T = T::one() / T::from_usize(dh).unwrap().sqrt();
                acc(*qkv, &mut |gq| {
                    let mut dp = vec![T::zero(); len * len];
                    for b in 0..batch {
                        let base = b * len * w3;
                        let gbase = b * len * d;
                        for h in 0..heads {
                            let p = &probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
                            // dV += P^T dO
                            T::gemm(len, len, dh, T::one(), p, 1, len as isize, &g[gbase + h * dh..], d as isize, 1, T::one(), &mut gq[base + 2 * d + h * dh..], w3 as isize, 1);
                            // dP = dO V^T
                            T::gemm(len, dh, len, T::one(), &g[gbase + h * dh..], d as isize, 1, &src[base + 2 * d + h * dh..], 1, w3 as isize, T::zero(), &mut dp, len as isize, 1);
                            // dS = P * (dP - rowsum(P * dP))
                            for i in 0..len {
                                let pr = &p[i * len..(i + 1) * len];
                                let dr = &mut dp[i * len..(i + 1) * len];
                                let s: T = pr[..=i].iter().zip(&dr[..=i]).map(|(&a, &b)| a * b).sum();
                                for j in 0..=i {
                                    dr[j] = pr[j] * (dr[j] - s);
                                }
                                for v in dr[i + 1..].iter_mut() {
                                    *v = T::zero();
                                }
                            }
                            // dQ += scale * dS K ; dK += scale * dS^T Q
                            T::gemm(len, len, dh, scale, &dp, len as isize, 1, &src[base + d + h * dh..], w3 as isize, 1, T::one(), &mut gq[base + h * dh..], w3 as isize, 1);
                            T::gemm(len, len, dh, scale, &dp, 1, len as isize, &src[base + h * dh..], w3 as isize, 1, T::one(), &mut gq[base + d + h * dh..], w3 as isize, 1);
                        }
                    }
                });
            }
            Op::Interleave(parts) => {
                let k = parts.len();
                let (n, d) = val(parts[0]).dims2();
                for (j, &p) in parts.iter().enumerate() {
                    acc(p, &mut |gp| {
                        for i in 0..n {
                            let src = &g[(i * k + j) * d..(i * k + j + 1) * d];
                            gp[i * d..(i + 1) * d].iter_mut().zip(src).for_each(|(a, &b)| *a += b);
                        }
                    });
                }
            }
            Op::Gather { x, rows } => {
                let d = node.value.dims2().1;
                acc(*x, &mut |gx| {
                    for (i, &r) in rows.iter().enumerate() {
                        gx[r * d..(r + 1) * d].iter_mut().zip(&g[i * d..(i + 1) * d]).for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::Column { x, col } => {
                let n = val(*x).dims2().1;
                acc(*x, &mut |gx| {
                    for (i, &gi) in g.iter().enumerate() {
                        gx[i * n + col] += gi;
                    }
                });
            }
            Op::Dot { x, w } => {
                let g0 = g[0];
                acc(*x, &mut |gx| gx.iter_mut().zip(w).for_each(|(a, &b)| *a += b * g0));
            }
        }
    }
}
