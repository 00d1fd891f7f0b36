//! Minimal reverse-mode differentiation over flat `f64` arrays.
//!
//! A [`Tape`] records every forward operation in execution order, so the
//! node list is already topologically sorted and the backward pass is a
//! single reverse sweep. Only what the encoder and the losses need is here:
//! 1D convolutions, affine maps, leaky-relu, softmax and a handful of
//! elementwise ops.

use crate::error::{Error, Result};

/// Shaped array of values. Row-major, last axis contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(index: usize) -> Self {
        NodeId(index)
    }
}

/// Boundary handling for [`Tape::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    /// Out-of-range samples read as zero.
    #[default]
    Zero,
    /// Out-of-range samples wrap around (periodic signal).
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub mode: PaddingMode,
}

impl ConvSpec {
    /// Stride 1 with `(kernel - 1) / 2` padding: output length equals input length.
    pub fn same(kernel: usize, mode: PaddingMode) -> Self {
        Self {
            stride: 1,
            padding: (kernel - 1) / 2,
            mode,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, kernel: NodeId, bias: Option<NodeId>, spec: ConvSpec },
    LeakyRelu { x: NodeId, slope: f64 },
    Softmax { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    Log { x: NodeId },
    Abs { x: NodeId },
    Pow { x: NodeId, e: f64 },
    Sum { x: NodeId },
    Crop { x: NodeId, start: usize },
    /// Scalar whose partials with respect to its inputs were computed
    /// elsewhere (closed-form loss gradients).
    Linearized { inputs: Vec<(NodeId, Vec<f64>)> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` for nodes the output does not depend on or constants.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `id`, or zeros of length `len` when it received none.
    pub fn get_or_zeros(&self, id: NodeId, len: usize) -> Vec<f64> {
        self.get(id).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Shape(format!("{op}: {detail}"))
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

    /// Trainable input: gradients are accumulated for it.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        if !matches!(op, Op::Leaf | Op::Linearized { .. }) {
            debug_assert!(value.is_finite(), "non-finite forward value from {op:?}");
        }
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// `W x + b` for `x: [in]`, `W: [out, in]`, `b: [out]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape.len() != 1 || wv.shape.len() != 2 || bv.shape.len() != 1 {
            return Err(shape_err("affine", "expects x: [in], W: [out, in], b: [out]".into()));
        }
        let (out, inp) = (wv.shape[0], wv.shape[1]);
        if xv.shape[0] != inp || bv.shape[0] != out {
            return Err(shape_err(
                "affine",
                format!("x {:?}, W {:?}, b {:?}", xv.shape, wv.shape, bv.shape),
            ));
        }
        let data = (0..out)
            .map(|o| {
                let row = &wv.data[o * inp..(o + 1) * inp];
                bv.data[o] + row.iter().zip(&xv.data).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![out], data }, Op::Affine { x, w, b }, rg))
    }

    /// Cross-correlation of `x: [c_in, len]` with `kernel: [c_out, c_in, k]`,
    /// plus an optional per-channel `bias: [c_out]`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        let (xv, kv) = (self.value(x), self.value(kernel));
        if xv.shape.len() != 2 || kv.shape.len() != 3 {
            return Err(shape_err(
                "conv1d",
                format!("x {:?} must be [c_in, len], kernel {:?} must be [c_out, c_in, k]", xv.shape, kv.shape),
            ));
        }
        let (c_in, len) = (xv.shape[0], xv.shape[1]);
        let (c_out, kc_in, k) = (kv.shape[0], kv.shape[1], kv.shape[2]);
        if kc_in != c_in {
            return Err(shape_err("conv1d", format!("kernel expects {kc_in} input channels, got {c_in}")));
        }
        if spec.stride == 0 || len + 2 * spec.padding < k {
            return Err(shape_err("conv1d", format!("invalid stride/padding for len {len}, k {k}")));
        }
        if let Some(b) = bias {
            if self.value(b).shape != [c_out] {
                return Err(shape_err("conv1d", format!("bias must be [{c_out}]")));
            }
        }
        let out_len = (len + 2 * spec.padding - k) / spec.stride + 1;
        let mut out = vec![0.0; c_out * out_len];
        if let Some(b) = bias {
            let bv = &self.value(b).data;
            for (co, row) in out.chunks_mut(out_len).enumerate() {
                row.fill(bv[co]);
            }
        }
        let xd = &xv.data;
        let kd = &kv.data;
        for co in 0..c_out {
            let orow = &mut out[co * out_len..(co + 1) * out_len];
            for ci in 0..c_in {
                let xrow = &xd[ci * len..(ci + 1) * len];
                for t in 0..k {
                    let w = kd[(co * c_in + ci) * k + t];
                    for_each_tap(len, out_len, t, spec, |o, src| orow[o] += w * xrow[src]);
                }
            }
        }
        let rg = self.rg(x) || self.rg(kernel) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor { shape: vec![c_out, out_len], data: out },
            Op::Conv1d { x, kernel, bias, spec },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data.iter().map(|&a| if a > 0.0 { a } else { slope * a }).collect();
        let t = Tensor { shape: v.shape.clone(), data };
        let rg = self.rg(x);
        self.push(t, Op::LeakyRelu { x, slope }, rg)
    }

    /// Softmax over all elements.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape.clone(),
            data: softmax(&v.data),
        };
        let rg = self.rg(x);
        self.push(t, Op::Softmax { x }, rg)
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).shape != self.value(b).shape {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.value(a).shape, self.value(b).shape),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let t = Tensor { shape: av.shape.clone(), data };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let t = Tensor { shape: av.shape.clone(), data };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map(x, |a| a * c, Op::Scale { x, c })
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.map(x, f64::ln, Op::Log { x })
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.map(x, f64::abs, Op::Abs { x })
    }

    /// Elementwise `x^e` for a constant exponent.
    pub fn pow(&mut self, x: NodeId, e: f64) -> NodeId {
        self.map(x, |a| a.powf(e), Op::Pow { x, e })
    }

    fn map(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape.clone(),
            data: v.data.iter().map(|&a| f(a)).collect(),
        };
        let rg = self.rg(x);
        self.push(t, op, rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data.iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Keeps `len` entries of the last axis starting at `start`.
    pub fn crop(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        let last = *v.shape.last().expect("tensor has a shape");
        if len == 0 || start + len > last {
            return Err(shape_err("crop", format!("[{start}, {}) outside axis of {last}", start + len)));
        }
        let data = v
            .data
            .chunks(last)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = v.shape.clone();
        *shape.last_mut().expect("tensor has a shape") = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape, data }, Op::Crop { x, start }, rg))
    }

    /// Scalar node with externally computed partial derivatives
    /// `d value / d input` for each input.
    pub fn linearized(&mut self, value: f64, inputs: Vec<(NodeId, Vec<f64>)>) -> Result<NodeId> {
        for (id, g) in &inputs {
            if self.value(*id).len() != g.len() {
                return Err(shape_err(
                    "linearized",
                    format!("partial of length {} for node of length {}", g.len(), self.value(*id).len()),
                ));
            }
        }
        let rg = inputs.iter().any(|(id, _)| self.rg(*id));
        Ok(self.push(Tensor::scalar(value), Op::Linearized { inputs }, rg))
    }

    /// Gradients of a scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let n = self.value(loss).len();
        if n != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, node has {n} values")));
        }
        self.backward_with_seed(loss, &[1.0])
    }

    /// Vector-Jacobian product: propagates `seed` (the gradient of some
    /// downstream scalar with respect to `output`) back through the tape.
    pub fn backward_with_seed(&self, output: NodeId, seed: &[f64]) -> Result<Gradients> {
        if seed.len() != self.value(output).len() {
            return Err(Error::Contract(format!(
                "seed of length {} for node of length {}",
                seed.len(),
                self.value(output).len()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.to_vec());
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        for (idx, slot) in grads.iter_mut().enumerate() {
            if !self.nodes[idx].requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |id: NodeId| &self.nodes[id.0].value.data;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !self.rg(id) {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xd, wd) = (val(*x), val(*w));
                let inp = xd.len();
                acc(*x, &mut |gx| {
                    for (o, &go) in g.iter().enumerate() {
                        for (gxi, wi) in gx.iter_mut().zip(&wd[o * inp..(o + 1) * inp]) {
                            *gxi += go * wi;
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for (o, &go) in g.iter().enumerate() {
                        for (gwi, xi) in gw[o * inp..(o + 1) * inp].iter_mut().zip(xd) {
                            *gwi += go * xi;
                        }
                    }
                });
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(a, b)| *a += b));
            }
            Op::Conv1d { x, kernel, bias, spec } => {
                let xt = &self.nodes[x.0].value;
                let kt = &self.nodes[kernel.0].value;
                let (c_in, len) = (xt.shape[0], xt.shape[1]);
                let (c_out, k) = (kt.shape[0], kt.shape[2]);
                let out_len = node.value.shape[1];
                acc(*x, &mut |gx| {
                    for co in 0..c_out {
                        let grow = &g[co * out_len..(co + 1) * out_len];
                        for ci in 0..c_in {
                            let gxrow = &mut gx[ci * len..(ci + 1) * len];
                            for t in 0..k {
                                let w = kt.data[(co * c_in + ci) * k + t];
                                for_each_tap(len, out_len, t, *spec, |o, src| gxrow[src] += w * grow[o]);
                            }
                        }
                    }
                });
                acc(*kernel, &mut |gk| {
                    for co in 0..c_out {
                        let grow = &g[co * out_len..(co + 1) * out_len];
                        for ci in 0..c_in {
                            let xrow = &xt.data[ci * len..(ci + 1) * len];
                            for t in 0..k {
                                let mut s = 0.0;
                                for_each_tap(len, out_len, t, *spec, |o, src| s += grow[o] * xrow[src]);
                                gk[(co * c_in + ci) * k + t] += s;
                            }
                        }
                    }
                });
                if let Some(b) = bias {
                    acc(*b, &mut |gb| {
                        for (co, gbi) in gb.iter_mut().enumerate() {
                            *gbi += g[co * out_len..(co + 1) * out_len].iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xd = val(*x);
                acc(*x, &mut |gx| {
                    for ((gi, &xi), &go) in gx.iter_mut().zip(xd).zip(g) {
                        *gi += if xi > 0.0 { go } else { slope * go };
                    }
                });
            }
            Op::Softmax { x } => {
                let s = &node.value.data;
                let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
                acc(*x, &mut |gx| {
                    for ((gi, &si), &go) in gx.iter_mut().zip(s).zip(g) {
                        *gi += si * (go - dot);
                    }
                });
            }
            Op::Add { a, b } => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(p, q)| *p += q));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(p, q)| *p += q));
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((p, q), r) in ga.iter_mut().zip(g).zip(bd) {
                        *p += q * r;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((p, q), r) in gb.iter_mut().zip(g).zip(ad) {
                        *p += q * r;
                    }
                });
            }
            Op::Scale { x, c } => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(p, q)| *p += c * q)),
            Op::Log { x } => {
                let xd = val(*x);
                acc(*x, &mut |gx| {
                    for ((p, q), r) in gx.iter_mut().zip(g).zip(xd) {
                        *p += q / r;
                    }
                });
            }
            Op::Abs { x } => {
                let xd = val(*x);
                acc(*x, &mut |gx| {
                    for ((p, q), r) in gx.iter_mut().zip(g).zip(xd) {
                        *p += q * if *r > 0.0 { 1.0 } else if *r < 0.0 { -1.0 } else { 0.0 };
                    }
                });
            }
            Op::Pow { x, e } => {
                let xd = val(*x);
                acc(*x, &mut |gx| {
                    for ((p, q), r) in gx.iter_mut().zip(g).zip(xd) {
                        *p += q * e * r.powf(e - 1.0);
                    }
                });
            }
            Op::Sum { x } => acc(*x, &mut |gx| gx.iter_mut().for_each(|p| *p += g[0])),
            Op::Crop { x, start } => {
                let len = *node.value.shape.last().expect("shape");
                let last = *self.nodes[x.0].value.shape.last().expect("shape");
                acc(*x, &mut |gx| {
                    for (row_in, row_out) in gx.chunks_mut(last).zip(g.chunks(len)) {
                        row_in[*start..start + len]
                            .iter_mut()
                            .zip(row_out)
                            .for_each(|(p, q)| *p += q);
                    }
                });
            }
            Op::Linearized { inputs } => {
                for (id, partial) in inputs {
                    acc(*id, &mut |gx| {
                        gx.iter_mut().zip(partial).for_each(|(p, q)| *p += g[0] * q);
                    });
                }
            }
        }
    }
}

/// Calls `f(output_index, source_index)` for every output position that
/// reads input sample `o * stride + tap - padding`.
#[inline]
fn for_each_tap(len: usize, out_len: usize, tap: usize, spec: ConvSpec, mut f: impl FnMut(usize, usize)) {
    let (s, pad) = (spec.stride, spec.padding);
    match spec.mode {
        PaddingMode::Zero => {
            // o * s + tap >= pad and o * s + tap - pad < len
            let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(s) };
            let hi = if len + pad > tap { ((len + pad - tap - 1) / s + 1).min(out_len) } else { 0 };
            if s == 1 {
                let offset = tap as isize - pad as isize;
                for o in lo..hi {
                    f(o, (o as isize + offset) as usize);
                }
            } else {
                for o in lo..hi {
                    f(o, o * s + tap - pad);
                }
            }
        }
        PaddingMode::Circular => {
            let n = len as isize;
            for o in 0..out_len {
                let src = (o as isize * s as isize + tap as isize - pad as isize).rem_euclid(n);
                f(o, src as usize);
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Maximum over coordinates of
/// `|analytic - central| / (|analytic| + |central| + 1e-12)`, where
/// `central` is the central difference of `f` at `x` with step `eps`.
pub fn finite_diff_check(mut f: impl FnMut(&[f64]) -> f64, analytic: &[f64], x: &[f64], eps: f64) -> f64 {
    assert_eq!(analytic.len(), x.len(), "gradient and point lengths differ");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_constant_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![3.0; 5]));
        let s = tape.softmax(x);
        for &v in tape.value(s).data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn dirac_kernel_is_identity() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let x = tape.constant(Tensor::new(vec![1, 10], data.clone()).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
        let y = tape.conv1d(x, k, None, ConvSpec::same(5, PaddingMode::Zero)).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn leaky_relu_slope_one_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-2.0, 0.0, 1.5]));
        let y = tape.leaky_relu(x, 1.0);
        assert_eq!(tape.value(y).data(), &[-2.0, 0.0, 1.5]);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_half_square_is_identity() {
        let mut tape = Tape::new();
        let xs = vec![0.5, -1.25, 2.0];
        let x = tape.variable(Tensor::vector(xs.clone()));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let half = tape.scale(s, 0.5);
        let g = tape.backward(half).unwrap();
        assert_eq!(g.get(x).unwrap(), &xs[..]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.variable(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.variable(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, b), Err(Error::Shape(_))));
        let w = tape.variable(Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap());
        assert!(matches!(tape.affine(b, w, a), Err(Error::Shape(_))));
        let k = tape.variable(Tensor::new(vec![1, 2, 3], vec![1.0; 6]).unwrap());
        let x = tape.variable(Tensor::new(vec![1, 4], vec![1.0; 4]).unwrap());
        assert!(matches!(tape.conv1d(x, k, None, ConvSpec::same(3, PaddingMode::Zero)), Err(Error::Shape(_))));
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let v = tape.variable(Tensor::vector(vec![3.0, 4.0]));
        let p = tape.mul(c, v).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(v).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn finite_diff_check_quadratic_and_constant() {
        let x = [0.3, -1.2, 2.5];
        let f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let grad: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(finite_diff_check(f, &grad, &x, 1e-5) < 1e-8);
        assert_eq!(finite_diff_check(|_| 7.0, &[0.0; 3], &x, 1e-5), 0.0);
    }
}
