//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node. Values are computed
//! eagerly; [`Graph::backward`] walks the tape in reverse and returns the
//! gradient of a scalar node with respect to every node that depends on a
//! parameter leaf.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub stride: usize,
    pub pad: usize,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Ln(Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Transpose(Var),
    AddChannels(Var, Var),
    MulChannels(Var, Var),
    Sum(Var),
    Broadcast(Var),
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Reshape(Var),
    Normalize { x: Var, inv_std: Vec<f64> },
    Conv2d { x: Var, w: Var, conv: Conv },
    ConvTranspose2d { x: Var, w: Var, conv: Conv },
    MeanPool(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Per-channel batch statistics produced by [`Graph::normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

/// `(batch, channels, trailing spatial size)` for channel-major layouts.
fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "channel ops need rank >= 2, got {shape:?}");
    (shape[0], shape[1], shape[2..].iter().product())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable leaf not tied to any parameter store.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf for a stored parameter. Repeated calls with the same id return
    /// the same node so gradients accumulate in one place.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(&p, &v)| (p, v))
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let t = self.tracked(a);
        self.push(value, op, t)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.unary(a, v, Op::Scale(a, k))
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.unary(a, v, Op::Offset(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::exp);
        self.unary(a, v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::log);
        self.unary(a, v, Op::Ln(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        self.unary(a, v, Op::LeakyRelu(a, slope))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    /// `x[n, c, ..] + b[c]`
    pub fn add_channels(&mut self, x: Var, b: Var) -> Var {
        let (_, c, s) = channel_layout(self.shape(x));
        assert_eq!(self.value(b).len(), c, "bias length must equal channel count");
        let mut v = self.value(x).clone();
        let bias = self.value(b).data();
        for (i, out) in v.data_mut().iter_mut().enumerate() {
            *out += bias[(i / s) % c];
        }
        self.binary(x, b, v, Op::AddChannels(x, b))
    }

    /// `x[n, c, ..] * g[c]`
    pub fn mul_channels(&mut self, x: Var, g: Var) -> Var {
        let (_, c, s) = channel_layout(self.shape(x));
        assert_eq!(self.value(g).len(), c, "scale length must equal channel count");
        let mut v = self.value(x).clone();
        let gamma = self.value(g).data();
        for (i, out) in v.data_mut().iter_mut().enumerate() {
            *out *= gamma[(i / s) % c];
        }
        self.binary(x, g, v, Op::MulChannels(x, g))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Repeats a single-element tensor into `shape`.
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = Tensor::full(shape, self.value(a).item());
        self.unary(a, v, Op::Broadcast(a))
    }

    /// Collects single-element tensors into a vector.
    pub fn stack(&mut self, parts: &[Var]) -> Var {
        let data: Vec<f64> = parts.iter().map(|&p| self.value(p).item()).collect();
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(Tensor::new(&[parts.len()], data), Op::Stack(parts.to_vec()), tracked)
    }

    /// Concatenates matrices along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_cols(&tensors);
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(v, Op::Concat(parts.to_vec()), tracked)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice_cols(start, end);
        self.unary(a, v, Op::Slice(a, start, end))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a).clone().reshape(shape);
        self.unary(a, v, Op::Reshape(a))
    }

    /// Per-channel standardization with batch statistics:
    /// `(x - mean) / sqrt(var + eps)` where mean and (biased) variance run
    /// over every axis except the channel axis 1.
    pub fn normalize(&mut self, x: Var, eps: f64) -> (Var, BatchStats) {
        let (n, c, s) = channel_layout(self.shape(x));
        let m = (n * s) as f64;
        let xv = self.value(x);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for (i, &v) in xv.data().iter().enumerate() {
            mean[(i / s) % c] += v;
        }
        for mu in &mut mean {
            *mu /= m;
        }
        for (i, &v) in xv.data().iter().enumerate() {
            let ch = (i / s) % c;
            let d = v - mean[ch];
            var[ch] += d * d;
        }
        for v in &mut var {
            *v /= m;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let mut out = xv.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let ch = (i / s) % c;
            *o = (*o - mean[ch]) * inv_std[ch];
        }
        let var_out = self.unary(x, out, Op::Normalize { x, inv_std });
        (var_out, BatchStats { mean, var })
    }

    /// Standardization with fixed statistics; a per-sample affine map.
    pub fn normalize_fixed(&mut self, x: Var, stats: &BatchStats, eps: f64) -> Var {
        let c = self.shape(x)[1];
        assert_eq!(stats.mean.len(), c);
        let shift = Tensor::new(&[c], stats.mean.iter().map(|m| -m).collect());
        let scale =
            Tensor::new(&[c], stats.var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect());
        let shift = self.constant(shift);
        let scale = self.constant(scale);
        let centered = self.add_channels(x, shift);
        self.mul_channels(centered, scale)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, conv: Conv) -> Var {
        let v = conv2d_forward(self.value(x), self.value(w), conv);
        self.binary(x, w, v, Op::Conv2d { x, w, conv })
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, conv: Conv) -> Var {
        let v = conv_transpose2d_forward(self.value(x), self.value(w), conv);
        self.binary(x, w, v, Op::ConvTranspose2d { x, w, conv })
    }

    /// `[n, c, h, w] -> [n, c]` spatial mean.
    pub fn mean_pool(&mut self, x: Var) -> Var {
        let (n, c, s) = channel_layout(self.shape(x));
        let xv = self.value(x).data();
        let data: Vec<f64> =
            (0..n * c).map(|i| xv[i * s..(i + 1) * s].iter().sum::<f64>() / s as f64).collect();
        self.unary(x, Tensor::new(&[n, c], data), Op::MeanPool(x))
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, d: Tensor| {
            if !self.nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(*a, g.zip_map(bv, |x, y| x * y));
                acc(*b, g.zip_map(av, |x, y| x * y));
            }
            Op::Scale(a, k) => acc(*a, g.map(|v| v * k)),
            Op::Offset(a) => acc(*a, g.clone()),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Ln(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x / y)),
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            Op::LeakyRelu(a, slope) => acc(
                *a,
                g.zip_map(self.value(*a), |x, y| if y >= 0.0 { x } else { x * slope }),
            ),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(self.value(*a), |x, y| if y >= *lo && y <= *hi { x } else { 0.0 }),
            ),
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(*a, g.matmul_nt(bv));
                acc(*b, av.matmul_tn(g));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::AddChannels(x, b) => {
                let (_, c, s) = channel_layout(g.shape());
                let mut db = vec![0.0; c];
                for (i, &v) in g.data().iter().enumerate() {
                    db[(i / s) % c] += v;
                }
                acc(*x, g.clone());
                acc(*b, Tensor::new(self.value(*b).shape(), db));
            }
            Op::MulChannels(x, gm) => {
                let (_, c, s) = channel_layout(g.shape());
                let xv = self.value(*x).data();
                let gamma = self.value(*gm).data();
                let mut dg = vec![0.0; c];
                let mut dx = g.clone();
                for (i, d) in dx.data_mut().iter_mut().enumerate() {
                    let ch = (i / s) % c;
                    dg[ch] += *d * xv[i];
                    *d *= gamma[ch];
                }
                acc(*x, dx);
                acc(*gm, Tensor::new(self.value(*gm).shape(), dg));
            }
            Op::Sum(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.item())),
            Op::Broadcast(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.sum())),
            Op::Stack(parts) => {
                for (k, &p) in parts.iter().enumerate() {
                    acc(p, Tensor::full(self.value(p).shape(), g.data()[k]));
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    acc(p, g.slice_cols(start, start + w));
                    start += w;
                }
            }
            Op::Slice(a, start, end) => {
                let (r, c) = self.value(*a).dims2();
                let w = end - start;
                let mut d = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    d.data_mut()[i * c + start..i * c + end]
                        .copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                acc(*a, d);
            }
            Op::Reshape(a) => acc(*a, g.clone().reshape(self.value(*a).shape())),
            Op::Normalize { x, inv_std } => {
                let (n, c, s) = channel_layout(g.shape());
                let m = (n * s) as f64;
                let xhat = node.value.data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for (i, &d) in g.data().iter().enumerate() {
                    let ch = (i / s) % c;
                    sum_g[ch] += d;
                    sum_gx[ch] += d * xhat[i];
                }
                let mut dx = g.clone();
                for (i, d) in dx.data_mut().iter_mut().enumerate() {
                    let ch = (i / s) % c;
                    *d = inv_std[ch] / m * (m * *d - sum_g[ch] - xhat[i] * sum_gx[ch]);
                }
                acc(*x, dx);
            }
            Op::Conv2d { x, w, conv } => {
                let (dx, dw) = conv2d_backward(self.value(*x), self.value(*w), g, *conv);
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::ConvTranspose2d { x, w, conv } => {
                let (dx, dw) =
                    conv_transpose2d_backward(self.value(*x), self.value(*w), g, *conv);
                acc(*x, dx);
                acc(*w, dw);
            }
            Op::MeanPool(a) => {
                let (_, _, s) = channel_layout(self.value(*a).shape());
                let mut d = Tensor::zeros(self.value(*a).shape());
                for (i, v) in d.data_mut().iter_mut().enumerate() {
                    *v = g.data()[i / s] / s as f64;
                }
                acc(*a, d);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for each parameter leaf registered in `graph`.
    pub fn params<'a>(&'a self, graph: &'a Graph) -> impl Iterator<Item = (ParamId, &'a Tensor)> {
        graph.param_vars().filter_map(move |(p, v)| self.get(v).map(|g| (p, g)))
    }
}

fn conv_out(len: usize, k: usize, conv: Conv) -> usize {
    (len + 2 * conv.pad - k) / conv.stride + 1
}

fn conv_transpose_out(len: usize, k: usize, conv: Conv) -> usize {
    (len - 1) * conv.stride + k - 2 * conv.pad
}

/// `x[n, ci, h, w]`, `w[co, ci, k, k]`.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, conv: Conv) -> Tensor {
    let &[n, ci, h, wd] = x.shape() else { panic!("conv2d input must be rank 4") };
    let &[co, ci2, k, k2] = w.shape() else { panic!("conv2d weight must be rank 4") };
    assert_eq!(ci, ci2, "conv2d channel mismatch");
    assert_eq!(k, k2, "square kernels only");
    let (ho, wo) = (conv_out(h, k, conv), conv_out(wd, k, conv));
    let mut out = vec![0.0; n * co * ho * wo];
    let xd = x.data();
    let wdt = w.data();
    for b in 0..n {
        for o in 0..co {
            let obase = (b * co + o) * ho * wo;
            for c in 0..ci {
                let xbase = (b * ci + c) * h * wd;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wdt[((o * ci + c) * k + ky) * k + kx];
                        for oy in 0..ho {
                            let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * wd;
                            let orow = obase + oy * wo;
                            for ox in 0..wo {
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                out[orow + ox] += wv * xd[xrow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, ho, wo], out)
}

fn conv2d_backward(x: &Tensor, w: &Tensor, g: &Tensor, conv: Conv) -> (Tensor, Tensor) {
    let &[n, ci, h, wd] = x.shape() else { unreachable!() };
    let &[co, _, k, _] = w.shape() else { unreachable!() };
    let (ho, wo) = (g.shape()[2], g.shape()[3]);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let (xd, wdt, gd) = (x.data(), w.data(), g.data());
    for b in 0..n {
        for o in 0..co {
            let gbase = (b * co + o) * ho * wo;
            for c in 0..ci {
                let xbase = (b * ci + c) * h * wd;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * ci + c) * k + ky) * k + kx;
                        let wv = wdt[widx];
                        let mut acc = 0.0;
                        for oy in 0..ho {
                            let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..wo {
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xi = xbase + iy as usize * wd + ix as usize;
                                let gv = gd[gbase + oy * wo + ox];
                                acc += gv * xd[xi];
                                dx[xi] += gv * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (Tensor::new(x.shape(), dx), Tensor::new(w.shape(), dw))
}

/// `x[n, ci, h, w]`, `w[ci, co, k, k]`; output side `(h - 1) * stride + k - 2 * pad`.
pub fn conv_transpose2d_forward(x: &Tensor, w: &Tensor, conv: Conv) -> Tensor {
    let &[n, ci, h, wd] = x.shape() else { panic!("conv_transpose2d input must be rank 4") };
    let &[ci2, co, k, _] = w.shape() else { panic!("conv_transpose2d weight must be rank 4") };
    assert_eq!(ci, ci2, "conv_transpose2d channel mismatch");
    let (ho, wo) = (conv_transpose_out(h, k, conv), conv_transpose_out(wd, k, conv));
    let mut out = vec![0.0; n * co * ho * wo];
    let (xd, wdt) = (x.data(), w.data());
    for b in 0..n {
        for c in 0..ci {
            let xbase = (b * ci + c) * h * wd;
            for o in 0..co {
                let obase = (b * co + o) * ho * wo;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wdt[((c * co + o) * k + ky) * k + kx];
                        for iy in 0..h {
                            let oy = (iy * conv.stride + ky) as isize - conv.pad as isize;
                            if oy < 0 || oy >= ho as isize {
                                continue;
                            }
                            for ix in 0..wd {
                                let ox = (ix * conv.stride + kx) as isize - conv.pad as isize;
                                if ox < 0 || ox >= wo as isize {
                                    continue;
                                }
                                out[obase + oy as usize * wo + ox as usize] +=
                                    wv * xd[xbase + iy * wd + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, ho, wo], out)
}

fn conv_transpose2d_backward(x: &Tensor, w: &Tensor, g: &Tensor, conv: Conv) -> (Tensor, Tensor) {
    let &[n, ci, h, wd] = x.shape() else { unreachable!() };
    let &[_, co, k, _] = w.shape() else { unreachable!() };
    let (ho, wo) = (g.shape()[2], g.shape()[3]);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let (xd, wdt, gd) = (x.data(), w.data(), g.data());
    for b in 0..n {
        for c in 0..ci {
            let xbase = (b * ci + c) * h * wd;
            for o in 0..co {
                let gbase = (b * co + o) * ho * wo;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((c * co + o) * k + ky) * k + kx;
                        let wv = wdt[widx];
                        let mut acc = 0.0;
                        for iy in 0..h {
                            let oy = (iy * conv.stride + ky) as isize - conv.pad as isize;
                            if oy < 0 || oy >= ho as isize {
                                continue;
                            }
                            for ix in 0..wd {
                                let ox = (ix * conv.stride + kx) as isize - conv.pad as isize;
                                if ox < 0 || ox >= wo as isize {
                                    continue;
                                }
                                let gv = gd[gbase + oy as usize * wo + ox as usize];
                                let xi = xbase + iy * wd + ix;
                                acc += gv * xd[xi];
                                dx[xi] += gv * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (Tensor::new(x.shape(), dx), Tensor::new(w.shape(), dw))
}
