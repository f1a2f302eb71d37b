use std::cell::RefCell;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    /// Second operand may be a single row broadcast over the first.
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Mean(usize),
    Mse(usize, usize),
    GlobalAvgPool(usize),
    Transpose(usize),
    Reshape(usize),
    SliceCols(usize, usize),
    ConcatRows(Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records every operation of one forward pass so gradients can be
/// propagated back in reverse order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// `None` when the variable does not influence the output or does not
    /// require a gradient.
    pub fn get(&self, var: Var<'_>) -> Option<Tensor> {
        let g = self.grads.get(var.id)?.as_ref()?;
        Tensor::new(&self.shapes[var.id], g.clone()).ok()
    }

    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id]))
    }
}

fn mismatch(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::invalid(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn dims2(op: &str, s: &[usize]) -> Result<(usize, usize)> {
    match *s {
        [r, c] => Ok((r, c)),
        _ => Err(Error::invalid(format!("{op}: expected a matrix, got shape {s:?}"))),
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Registers a tensor; it receives a gradient iff `requires_grad` is set.
    pub fn leaf(&self, t: &Tensor) -> Var<'_> {
        let mut value = t.clone();
        value.grad = None;
        let rg = t.requires_grad;
        self.push(value, Op::Leaf, rg)
    }

    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse pass from a one-element output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[output.id].value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                nodes[output.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[output.id] = Some(vec![1.0]);
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for (g, n) in grads.iter_mut().zip(nodes.iter()) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = nodes[id].value.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = dims2("", nodes[*a].value.shape()).unwrap();
            let n = nodes[*b].value.shape()[1];
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            // dA = G B^T, dB = A^T G
            accumulate(grads, nodes, *a, |da| {
                for i in 0..m {
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            });
            accumulate(grads, nodes, *b, |db| {
                for i in 0..m {
                    for p in 0..k {
                        let a_ip = av[i * k + p];
                        if a_ip == 0.0 {
                            continue;
                        }
                        let grow = &g[i * n..(i + 1) * n];
                        for (d, x) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *d += a_ip * x;
                        }
                    }
                }
            });
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => conv2d_backward(nodes, g, grads, *input, *weight, *bias, *stride, *padding),
        Op::Relu(a) => accumulate(grads, nodes, *a, |d| {
            for ((d, &y), &gi) in d.iter_mut().zip(out).zip(g) {
                if y > 0.0 {
                    *d += gi;
                }
            }
        }),
        Op::Sigmoid(a) => accumulate(grads, nodes, *a, |d| {
            for ((d, &y), &gi) in d.iter_mut().zip(out).zip(g) {
                *d += gi * y * (1.0 - y);
            }
        }),
        Op::Tanh(a) => accumulate(grads, nodes, *a, |d| {
            for ((d, &y), &gi) in d.iter_mut().zip(out).zip(g) {
                *d += gi * (1.0 - y * y);
            }
        }),
        Op::Softmax(a) => {
            let cols = *nodes[id].value.shape().last().unwrap();
            accumulate(grads, nodes, *a, |d| {
                for ((drow, yrow), grow) in d.chunks_mut(cols).zip(out.chunks(cols)).zip(g.chunks(cols)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for ((d, &y), &gi) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d += y * (gi - dot);
                    }
                }
            });
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(nodes[id].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            accumulate(grads, nodes, *a, |d| {
                for (d, gi) in d.iter_mut().zip(g) {
                    *d += gi;
                }
            });
            let bl = nodes[*b].value.len();
            accumulate(grads, nodes, *b, |d| {
                for (i, gi) in g.iter().enumerate() {
                    d[i % bl] += sign * gi;
                }
            });
        }
        Op::Mul(a, b) => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            accumulate(grads, nodes, *a, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * bv[i];
                }
            });
            accumulate(grads, nodes, *b, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * av[i];
                }
            });
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, |d| {
            for (d, gi) in d.iter_mut().zip(g) {
                *d += c * gi;
            }
        }),
        Op::Mean(a) => {
            let n = nodes[*a].value.len() as f64;
            accumulate(grads, nodes, *a, |d| {
                for d in d.iter_mut() {
                    *d += g[0] / n;
                }
            });
        }
        Op::Mse(a, b) => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            let scale = 2.0 * g[0] / av.len() as f64;
            accumulate(grads, nodes, *a, |d| {
                for i in 0..d.len() {
                    d[i] += scale * (av[i] - bv[i]);
                }
            });
            accumulate(grads, nodes, *b, |d| {
                for i in 0..d.len() {
                    d[i] -= scale * (av[i] - bv[i]);
                }
            });
        }
        Op::GlobalAvgPool(a) => {
            let s = nodes[*a].value.shape();
            let hw = s[1] * s[2];
            accumulate(grads, nodes, *a, |d| {
                for (c, chunk) in d.chunks_mut(hw).enumerate() {
                    for d in chunk {
                        *d += g[c] / hw as f64;
                    }
                }
            });
        }
        Op::Transpose(a) => {
            let (r, c) = dims2("", nodes[*a].value.shape()).unwrap();
            accumulate(grads, nodes, *a, |d| {
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] += g[j * r + i];
                    }
                }
            });
        }
        Op::Reshape(a) => accumulate(grads, nodes, *a, |d| {
            for (d, gi) in d.iter_mut().zip(g) {
                *d += gi;
            }
        }),
        Op::SliceCols(a, start) => {
            let (r, c) = dims2("", nodes[*a].value.shape()).unwrap();
            let w = nodes[id].value.shape()[1];
            accumulate(grads, nodes, *a, |d| {
                for i in 0..r {
                    for j in 0..w {
                        d[i * c + start + j] += g[i * w + j];
                    }
                }
            });
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p].value.len();
                accumulate(grads, nodes, p, |d| {
                    for (d, gi) in d.iter_mut().zip(&g[offset..offset + n]) {
                        *d += gi;
                    }
                });
                offset += n;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    nodes: &[Node],
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
    input: usize,
    weight: usize,
    bias: usize,
    stride: usize,
    pad: usize,
) {
    let xs = nodes[input].value.shape();
    let ws = nodes[weight].value.shape();
    let (cin, h, w) = (xs[0], xs[1], xs[2]);
    let (cout, k) = (ws[0], ws[2]);
    let (ho, wo) = (conv_out(h, k, stride, pad), conv_out(w, k, stride, pad));
    let x = nodes[input].value.data();
    let wv = nodes[weight].value.data();
    accumulate(grads, nodes, bias, |db| {
        for (oc, chunk) in g.chunks(ho * wo).enumerate() {
            db[oc] += chunk.iter().sum::<f64>();
        }
    });
    let need_x = nodes[input].requires_grad;
    let need_w = nodes[weight].requires_grad;
    if !need_x && !need_w {
        return;
    }
    let mut dx = vec![0.0; if need_x { x.len() } else { 0 }];
    let mut dw = vec![0.0; if need_w { wv.len() } else { 0 }];
    for oc in 0..cout {
        let gout = &g[oc * ho * wo..(oc + 1) * ho * wo];
        for ic in 0..cin {
            let xin = &x[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((oc * cin + ic) * k + ky) * k + kx;
                    let wval = wv[widx];
                    let mut acc = 0.0;
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = iy as usize * w;
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let go = gout[oy * wo + ox];
                            let xi = row + ix as usize;
                            acc += xin[xi] * go;
                            if need_x {
                                dx[ic * h * w + xi] += wval * go;
                            }
                        }
                    }
                    if need_w {
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    if need_x {
        accumulate(grads, nodes, input, |d| d.iter_mut().zip(&dx).for_each(|(d, v)| *d += v));
    }
    if need_w {
        accumulate(grads, nodes, weight, |d| d.iter_mut().zip(&dw).for_each(|(d, v)| *d += v));
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn with<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::invalid("operands recorded on different tapes"))
        }
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.with(|t| {
            Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect()).unwrap()
        });
        let rg = self.tape.rg(&[self.id]);
        self.tape.push(value, op, rg)
    }

    /// Matrix product of an `m x k` and a `k x n` matrix.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        let (m, k) = dims2("matmul", &sa)?;
        let (k2, n) = dims2("matmul", &sb)?;
        if k != k2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (nodes[self.id].value.data(), nodes[other.id].value.data());
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a_ip = a[i * k + p];
                    if a_ip == 0.0 {
                        continue;
                    }
                    for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                        *o += a_ip * bv;
                    }
                }
            }
        }
        let rg = self.tape.rg(&[self.id, other.id]);
        Ok(self
            .tape
            .push(Tensor::new(&[m, n], out)?, Op::MatMul(self.id, other.id), rg))
    }

    /// 2D convolution of a `Cin x H x W` input with `Cout x Cin x K x K`
    /// weights and a `Cout` bias, with zero padding.
    pub fn conv2d(&self, weight: Var<'t>, bias: Var<'t>, stride: usize, padding: usize) -> Result<Var<'t>> {
        self.same_tape(&weight)?;
        self.same_tape(&bias)?;
        let (xs, ws, bs) = (self.shape(), weight.shape(), bias.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] {
            return Err(mismatch("conv2d", &xs, &ws));
        }
        if bs.iter().product::<usize>() != ws[0] {
            return Err(mismatch("conv2d bias", &ws, &bs));
        }
        if stride == 0 || xs[1] + 2 * padding < ws[2] || xs[2] + 2 * padding < ws[2] {
            return Err(Error::invalid(format!(
                "conv2d: kernel {} does not fit input {xs:?} with padding {padding}",
                ws[2]
            )));
        }
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        let (ho, wo) = (conv_out(h, k, stride, padding), conv_out(w, k, stride, padding));
        let mut out = vec![0.0; cout * ho * wo];
        {
            let nodes = self.tape.nodes.borrow();
            let x = nodes[self.id].value.data();
            let wv = nodes[weight.id].value.data();
            let bv = nodes[bias.id].value.data();
            for oc in 0..cout {
                let o = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
                o.fill(bv[oc]);
                for ic in 0..cin {
                    let xin = &x[ic * h * w..(ic + 1) * h * w];
                    for ky in 0..k {
                        for kx in 0..k {
                            let wval = wv[((oc * cin + ic) * k + ky) * k + kx];
                            for oy in 0..ho {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = iy as usize * w;
                                for ox in 0..wo {
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    o[oy * wo + ox] += wval * xin[row + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.tape.rg(&[self.id, weight.id, bias.id]);
        Ok(self.tape.push(
            Tensor::new(&[cout, ho, wo], out)?,
            Op::Conv2d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
                stride,
                padding,
            },
            rg,
        ))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |v| c * v)
    }

    /// Softmax along the last axis.
    pub fn softmax(&self) -> Var<'t> {
        let value = self.with(|t| {
            let cols = *t.shape().last().unwrap_or(&1);
            let mut out = t.data().to_vec();
            for row in out.chunks_mut(cols.max(1)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            Tensor::new(t.shape(), out).unwrap()
        });
        let rg = self.tape.rg(&[self.id]);
        self.tape.push(value, Op::Softmax(self.id), rg)
    }

    fn elementwise(&self, other: Var<'t>, name: &str, op: Op, broadcast: bool, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        let row_broadcast = broadcast
            && sa.len() == 2
            && (sb == [1, sa[1]] || sb == [sa[1]]);
        if sa != sb && !row_broadcast {
            return Err(mismatch(name, &sa, &sb));
        }
        let data = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (nodes[self.id].value.data(), nodes[other.id].value.data());
            let bl = b.len();
            a.iter().enumerate().map(|(i, &x)| f(x, b[i % bl])).collect()
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        Ok(self.tape.push(Tensor::new(&sa, data)?, op, rg))
    }

    /// Elementwise sum; `other` may also be a single row added to every row.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "add", Op::Add(self.id, other.id), true, |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "sub", Op::Sub(self.id, other.id), true, |a, b| a - b)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "mul", Op::Mul(self.id, other.id), false, |a, b| a * b)
    }

    pub fn mean(&self) -> Var<'t> {
        let m = self.with(|t| t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.tape.rg(&[self.id]);
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id), rg)
    }

    /// Mean of squared differences over all components.
    pub fn mse(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(mismatch("mse", &sa, &sb));
        }
        let m = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (nodes[self.id].value.data(), nodes[other.id].value.data());
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        Ok(self.tape.push(Tensor::scalar(m), Op::Mse(self.id, other.id), rg))
    }

    /// `C x H x W` to a `1 x C` row of channel means.
    pub fn global_avg_pool(&self) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::invalid(format!("global_avg_pool: expected C x H x W, got {s:?}")));
        }
        let hw = s[1] * s[2];
        let data = self.with(|t| t.data().chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect());
        let rg = self.tape.rg(&[self.id]);
        Ok(self.tape.push(Tensor::new(&[1, s[0]], data)?, Op::GlobalAvgPool(self.id), rg))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let (r, c) = dims2("transpose", &self.shape())?;
        let data = self.with(|t| {
            let d = t.data();
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = d[i * c + j];
                }
            }
            out
        });
        let rg = self.tape.rg(&[self.id]);
        Ok(self.tape.push(Tensor::new(&[c, r], data)?, Op::Transpose(self.id), rg))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.with(|t| t.reshaped(shape))?;
        let rg = self.tape.rg(&[self.id]);
        Ok(self.tape.push(value, Op::Reshape(self.id), rg))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let (r, c) = dims2("slice_cols", &self.shape())?;
        if start + len > c || len == 0 {
            return Err(Error::invalid(format!(
                "slice_cols: {start}..{} out of range for {c} columns",
                start + len
            )));
        }
        let data = self.with(|t| {
            let d = t.data();
            (0..r).flat_map(|i| d[i * c + start..i * c + start + len].to_vec()).collect()
        });
        let rg = self.tape.rg(&[self.id]);
        Ok(self.tape.push(Tensor::new(&[r, len], data)?, Op::SliceCols(self.id, start), rg))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat_rows of nothing"))?;
        let (_, c) = dims2("concat_rows", &first.shape())?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            first.same_tape(p)?;
            let s = p.shape();
            let (r, c2) = dims2("concat_rows", &s)?;
            if c2 != c {
                return Err(mismatch("concat_rows", &first.shape(), &s));
            }
            rows += r;
            p.with(|t| data.extend_from_slice(t.data()));
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = first.tape.rg(&ids);
        Ok(first.tape.push(Tensor::new(&[rows, c], data)?, Op::ConcatRows(ids), rg))
    }
}
