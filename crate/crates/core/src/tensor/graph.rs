use std::hash::{DefaultHasher, Hash, Hasher};

use super::kernels::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use super::kernels::pool::{self, MaxPoolGeometry};
use super::kernels::{linear_backward, linear_forward};
use super::{Conv2dParams, Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Which axis a global pool collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxis {
    /// N x C x H x W -> N x C x 1 x 1
    Spatial,
    /// N x C x H x W -> N x 1 x H x W
    Channel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Relu,
    LeakyRelu(f64),
    Abs,
    /// `log(1 + mu * clip(x, 0, 1)) / log(1 + mu)`
    MuLaw(f64),
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

/// How the right operand of a binary op lines up with the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// N x C x 1 x 1 over N x C x H x W
    PerChannel {
        plane: usize,
    },
    /// N x 1 x H x W over N x C x H x W
    PerPixel {
        c: usize,
        plane: usize,
    },
}

impl Broadcast {
    fn resolve(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self, TensorError> {
        if a == b {
            return Ok(Self::Same);
        }
        if let ([n, c, h, w], [bn, bc, bh, bw]) = (a, b) {
            if bn == n && bc == c && *bh == 1 && *bw == 1 {
                return Ok(Self::PerChannel { plane: h * w });
            }
            if bn == n && *bc == 1 && bh == h && bw == w {
                return Ok(Self::PerPixel { c: *c, plane: h * w });
            }
        }
        Err(TensorError::Broadcast {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }

    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Self::Same => i,
            Self::PerChannel { plane } => i / plane,
            Self::PerPixel { c, plane } => (i / (c * plane)) * plane + i % plane,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    Pool {
        input: Var,
        mode: PoolMode,
        axis: PoolAxis,
        argmax: Vec<usize>,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        input: Var,
        planes: usize,
        from: (usize, usize),
        to: (usize, usize),
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
        dims: (usize, usize, usize),
    },
    Unary {
        input: Var,
        kind: Unary,
    },
    Binary {
        a: Var,
        b: Var,
        kind: Binary,
        bcast: Broadcast,
    },
    Concat {
        parts: Vec<Var>,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    Reshape {
        input: Var,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Pool { .. } => "pool",
            Op::MaxPool2d { .. } => "max_pool2d",
            Op::Upsample { .. } => "upsample_nearest",
            Op::Linear { .. } => "linear",
            Op::Unary { kind, .. } => match kind {
                Unary::Sigmoid => "sigmoid",
                Unary::Relu => "relu",
                Unary::LeakyRelu(_) => "leaky_relu",
                Unary::Abs => "abs",
                Unary::MuLaw(_) => "mu_law",
                Unary::Scale(_) => "scale",
            },
            Op::Binary { kind, .. } => match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            },
            Op::Concat { .. } => "concat",
            Op::SliceChannels { .. } => "slice_channels",
            Op::Reshape { .. } => "reshape",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => [Some(*input), Some(*weight), *bias].into_iter().flatten().collect(),
            Op::Linear {
                input, weight, bias, ..
            } => vec![*input, *weight, *bias],
            Op::Binary { a, b, .. } => vec![*a, *b],
            Op::Concat { parts } => parts.clone(),
            Op::Pool { input, .. }
            | Op::MaxPool2d { input, .. }
            | Op::Upsample { input, .. }
            | Op::Unary { input, .. }
            | Op::SliceChannels { input, .. }
            | Op::Reshape { input }
            | Op::Sum { input }
            | Op::Mean { input } => vec![*input],
        }
    }
}

/// One recorded operation: its output value and how it was produced.
#[derive(Clone, Debug)]
pub struct TapeNode<T> {
    value: Tensor<T>,
    op: Op,
}

impl<T: Real> TapeNode<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn op_name(&self) -> &'static str {
        self.op.name()
    }

    pub fn inputs(&self) -> Vec<Var> {
        self.op.inputs()
    }
}

/// Define-by-run tape. Nodes are appended in execution order, which is a
/// topological order of the DAG; [`Graph::backward`] walks it in reverse.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<TapeNode<T>>,
    consumed: bool,
    branch_log: Option<Vec<u64>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
            branch_log: None,
        }
    }

    /// Records a digest of every branch decision taken by non-smooth ops
    /// (rectifier signs, max winners, clipping). Two evaluations with equal
    /// signatures lie on the same smooth piece of the function.
    pub fn with_branch_tracking() -> Self {
        Self {
            branch_log: Some(Vec::new()),
            ..Self::new()
        }
    }

    pub fn branch_signature(&self) -> Option<&[u64]> {
        self.branch_log.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> Result<&TapeNode<T>, TensorError> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    pub fn nodes(&self) -> &[TapeNode<T>] {
        &self.nodes
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes.get(v.0)?.value.grad()
    }

    /// Adds a leaf, keeping the tensor's own `requires_grad` flag.
    pub fn input(&mut self, tensor: Tensor<T>) -> Var {
        self.nodes.push(TapeNode {
            value: tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.input(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.input(tensor.with_requires_grad(false))
    }

    fn check(&self, vars: &[Var]) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        match vars.iter().find(|v| v.0 >= self.nodes.len()) {
            Some(v) => Err(TensorError::UnknownVar(v.0)),
            None => Ok(()),
        }
    }

    fn push(&mut self, shape: &[usize], data: Vec<T>, op: Op) -> Result<Var, TensorError> {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].value.requires_grad());
        let value = Tensor::new(shape, data)?.with_requires_grad(requires_grad);
        self.nodes.push(TapeNode { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn log_branches<I: Hash>(&mut self, items: impl Iterator<Item = I>) {
        if let Some(log) = self.branch_log.as_mut() {
            let mut h = DefaultHasher::new();
            items.for_each(|i| i.hash(&mut h));
            log.push(h.finish());
        }
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        params: Conv2dParams,
    ) -> Result<Var, TensorError> {
        self.check(&[input, weight])?;
        let geom = ConvGeometry::new(self.shape(input), self.shape(weight), params)?;
        if let Some(b) = bias {
            self.check(&[b])?;
            if self.shape(b) != [geom.oc] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![geom.oc],
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let out = conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        self.push(
            &geom.output_shape(),
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        )
    }

    pub fn pool(&mut self, input: Var, mode: PoolMode, axis: PoolAxis) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let (n, c, h, w) = self.value(input).dims4("pool")?;
        let max = mode == PoolMode::Max;
        let data = self.value(input).data();
        let (out, argmax, shape) = match axis {
            PoolAxis::Spatial => {
                let (o, a) = pool::spatial_pool(data, n * c, h * w, max);
                (o, a, [n, c, 1, 1])
            }
            PoolAxis::Channel => {
                let (o, a) = pool::channel_pool(data, n, c, h * w, max);
                (o, a, [n, 1, h, w])
            }
        };
        if max {
            self.log_branches(argmax.iter());
        }
        self.push(
            &shape,
            out,
            Op::Pool {
                input,
                mode,
                axis,
                argmax,
            },
        )
    }

    /// Windowed max pooling with `-inf` padding.
    pub fn max_pool2d(&mut self, input: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let (n, c, h, w) = self.value(input).dims4("max_pool2d")?;
        let geom =
            MaxPoolGeometry::new(n * c, h, w, kernel, stride, pad).ok_or_else(|| TensorError::InvalidArgument {
                op: "max_pool2d",
                detail: format!("kernel {kernel}, stride {stride}, pad {pad} invalid for {h}x{w} input"),
            })?;
        let (out, argmax) = pool::max_pool2d(&geom, self.value(input).data());
        self.log_branches(argmax.iter());
        self.push(&[n, c, geom.oh, geom.ow], out, Op::MaxPool2d { input, argmax })
    }

    pub fn upsample_nearest(&mut self, input: Var, size: (usize, usize)) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let (n, c, h, w) = self.value(input).dims4("upsample_nearest")?;
        if size.0 == 0 || size.1 == 0 {
            return Err(TensorError::InvalidArgument {
                op: "upsample_nearest",
                detail: format!("target size {size:?} is empty"),
            });
        }
        let out = pool::upsample_nearest(self.value(input).data(), n * c, (h, w), size);
        self.push(
            &[n, c, size.0, size.1],
            out,
            Op::Upsample {
                input,
                planes: n * c,
                from: (h, w),
                to: size,
            },
        )
    }

    /// `input (N x F) * weight^T (F x Out) + bias`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        self.check(&[input, weight, bias])?;
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        let (&[rows, inp], &[out, win], &[bout]) = (xs, ws, bs) else {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        };
        if win != inp || bout != out {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let y = linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            rows,
            inp,
            out,
        );
        self.push(
            &[rows, out],
            y,
            Op::Linear {
                input,
                weight,
                bias,
                dims: (rows, inp, out),
            },
        )
    }

    pub fn unary(&mut self, input: Var, kind: Unary) -> Result<Var, TensorError> {
        self.check(&[input])?;
        if let Unary::MuLaw(mu) = kind {
            if mu.is_nan() || mu <= 0.0 {
                return Err(TensorError::InvalidArgument {
                    op: "mu_law",
                    detail: format!("mu must be positive, got {mu}"),
                });
            }
        }
        let x = self.value(input).data();
        let out: Vec<T> = match kind {
            Unary::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Unary::Relu => x.iter().map(|&v| v.max(T::zero())).collect(),
            Unary::LeakyRelu(slope) => {
                let s = T::lit(slope);
                x.iter().map(|&v| if v > T::zero() { v } else { v * s }).collect()
            }
            Unary::Abs => x.iter().map(|&v| v.abs()).collect(),
            Unary::MuLaw(mu) => {
                let (mu_t, norm) = (T::lit(mu), T::lit(1.0 / mu.ln_1p()));
                x.iter()
                    .map(|&v| (mu_t * v.max(T::zero()).min(T::one())).ln_1p() * norm)
                    .collect()
            }
            Unary::Scale(c) => {
                let c = T::lit(c);
                x.iter().map(|&v| v * c).collect()
            }
        };
        match kind {
            Unary::Relu | Unary::LeakyRelu(_) | Unary::Abs => {
                let signs: Vec<bool> = x.iter().map(|&v| v > T::zero()).collect();
                self.log_branches(signs.into_iter());
            }
            Unary::MuLaw(_) => {
                let inside: Vec<bool> = x.iter().map(|&v| v >= T::zero() && v <= T::one()).collect();
                self.log_branches(inside.into_iter());
            }
            _ => {}
        }
        let shape = self.shape(input).to_vec();
        self.push(&shape, out, Op::Unary { input, kind })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, Unary::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, TensorError> {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(x, Unary::Abs)
    }

    pub fn mu_law(&mut self, x: Var, mu: f64) -> Result<Var, TensorError> {
        self.unary(x, Unary::MuLaw(mu))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.unary(x, Unary::Scale(c))
    }

    /// Elementwise binary op. `b` may be a per-channel (N x C x 1 x 1) or
    /// per-pixel (N x 1 x H x W) map over a rank-4 `a`; any other shape
    /// difference is an error.
    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var, TensorError> {
        self.check(&[a, b])?;
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let bcast = Broadcast::resolve(name, self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let out: Vec<T> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bv[bcast.index(i)];
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, out, Op::Binary { a, b, kind, bcast })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, Binary::Mul)
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.check(parts)?;
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                detail: "no parts".into(),
            });
        };
        let (n, _, h, w) = self.value(first).dims4("concat")?;
        let mut channels = Vec::with_capacity(parts.len());
        for (index, &p) in parts.iter().enumerate() {
            match self.value(p).dims4("concat")? {
                (pn, pc, ph, pw) if (pn, ph, pw) == (n, h, w) => channels.push(pc),
                _ => {
                    return Err(TensorError::ConcatMismatch {
                        index,
                        shape: self.shape(p).to_vec(),
                        expected: vec![n, h, w],
                    })
                }
            }
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for ni in 0..n {
            for (&p, &c) in parts.iter().zip(&channels) {
                out.extend_from_slice(&self.value(p).data()[ni * c * plane..(ni + 1) * c * plane]);
            }
        }
        self.push(&[n, total, h, w], out, Op::Concat { parts: parts.to_vec() })
    }

    /// Channels `start..start + len` of a rank-4 tensor.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let (n, c, h, w) = self.value(input).dims4("slice_channels")?;
        if len == 0 || start + len > c {
            return Err(TensorError::InvalidArgument {
                op: "slice_channels",
                detail: format!("range {start}..{} outside {c} channels", start + len),
            });
        }
        let plane = h * w;
        let data = self.value(input).data();
        let mut out = Vec::with_capacity(n * len * plane);
        for ni in 0..n {
            let base = (ni * c + start) * plane;
            out.extend_from_slice(&data[base..base + len * plane]);
        }
        self.push(&[n, len, h, w], out, Op::SliceChannels { input, start })
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.check(&[input])?;
        if shape.iter().product::<usize>() != self.value(input).numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(input).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.value(input).data().to_vec();
        self.push(shape, data, Op::Reshape { input })
    }

    pub fn sum(&mut self, input: Var) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let s = self.value(input).data().iter().copied().sum::<T>();
        self.push(&[1], vec![s], Op::Sum { input })
    }

    pub fn mean(&mut self, input: Var) -> Result<Var, TensorError> {
        self.check(&[input])?;
        let x = self.value(input).data();
        let s = x.iter().copied().sum::<T>() / T::lit(x.len() as f64);
        self.push(&[1], vec![s], Op::Mean { input })
    }

    /// Reverse pass from a scalar `loss`. Every `requires_grad` node reachable
    /// from the loss receives its gradient; the tape is then cleared and a
    /// second call fails until a new graph is recorded.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        self.check(&[loss])?;
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if self.nodes[i].value.requires_grad() {
                self.nodes[i].value.set_grad(Some(g));
            }
        }
        for node in &mut self.nodes {
            node.op = Op::Leaf;
        }
        self.consumed = true;
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, contrib: Vec<T>| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let grads_c = conv2d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    self.wants(*input),
                    self.wants(*weight),
                );
                if let Some(d) = grads_c.input {
                    acc(*input, d);
                }
                if let Some(d) = grads_c.weight {
                    acc(*weight, d);
                }
                if let Some(b) = bias {
                    acc(*b, grads_c.bias);
                }
            }
            Op::Pool {
                input,
                mode,
                axis,
                argmax,
            } => {
                if !self.wants(*input) {
                    return;
                }
                let x = self.value(*input);
                let len = x.numel();
                let d = match mode {
                    PoolMode::Max => pool::scatter_argmax(g, argmax, len),
                    PoolMode::Avg => {
                        let [_, c, h, w] = x.shape()[..] else { unreachable!() };
                        let plane = h * w;
                        match axis {
                            PoolAxis::Spatial => {
                                let s = T::lit(1.0 / plane as f64);
                                (0..len).map(|k| g[k / plane] * s).collect()
                            }
                            PoolAxis::Channel => {
                                let s = T::lit(1.0 / c as f64);
                                (0..len).map(|k| g[(k / (c * plane)) * plane + k % plane] * s).collect()
                            }
                        }
                    }
                };
                acc(*input, d);
            }
            Op::MaxPool2d { input, argmax } => {
                let len = self.value(*input).numel();
                acc(*input, pool::scatter_argmax(g, argmax, len));
            }
            Op::Upsample {
                input,
                planes,
                from,
                to,
            } => acc(*input, pool::upsample_nearest_backward(g, *planes, *from, *to)),
            Op::Linear {
                input,
                weight,
                bias,
                dims: (rows, inp, out),
            } => {
                let (dx, dw, db) = linear_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    *rows,
                    *inp,
                    *out,
                );
                acc(*input, dx);
                acc(*weight, dw);
                acc(*bias, db);
            }
            Op::Unary { input, kind } => {
                let x = self.value(*input).data();
                let y = node.value.data();
                let d: Vec<T> = match *kind {
                    Unary::Sigmoid => g.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect(),
                    Unary::Relu => g
                        .iter()
                        .zip(x)
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect(),
                    Unary::LeakyRelu(slope) => {
                        let s = T::lit(slope);
                        g.iter()
                            .zip(x)
                            .map(|(&g, &x)| if x > T::zero() { g } else { g * s })
                            .collect()
                    }
                    Unary::Abs => g
                        .iter()
                        .zip(x)
                        .map(|(&g, &x)| {
                            if x > T::zero() {
                                g
                            } else if x < T::zero() {
                                -g
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                    Unary::MuLaw(mu) => {
                        let (mu_t, norm) = (T::lit(mu), T::lit(1.0 / mu.ln_1p()));
                        g.iter()
                            .zip(x)
                            .map(|(&g, &x)| {
                                if x >= T::zero() && x <= T::one() {
                                    g * mu_t * norm / (T::one() + mu_t * x)
                                } else {
                                    T::zero()
                                }
                            })
                            .collect()
                    }
                    Unary::Scale(c) => {
                        let c = T::lit(c);
                        g.iter().map(|&g| g * c).collect()
                    }
                };
                acc(*input, d);
            }
            Op::Binary { a, b, kind, bcast } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let d = match kind {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().enumerate().map(|(i, &g)| g * bv[bcast.index(i)]).collect(),
                    };
                    acc(*a, d);
                }
                if self.wants(*b) {
                    let mut d = vec![T::zero(); bv.len()];
                    for (i, &gi) in g.iter().enumerate() {
                        let j = bcast.index(i);
                        d[j] += match kind {
                            Binary::Add => gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * av[i],
                        };
                    }
                    acc(*b, d);
                }
            }
            Op::Concat { parts } => {
                let [n, total, h, w] = node.value.shape()[..] else {
                    unreachable!()
                };
                let plane = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.wants(p) {
                        let mut d = Vec::with_capacity(n * c * plane);
                        for ni in 0..n {
                            let base = (ni * total + offset) * plane;
                            d.extend_from_slice(&g[base..base + c * plane]);
                        }
                        acc(p, d);
                    }
                    offset += c;
                }
            }
            Op::SliceChannels { input, start } => {
                let [n, c, h, w] = self.shape(*input)[..] else {
                    unreachable!()
                };
                let len = node.value.shape()[1];
                let plane = h * w;
                let mut d = vec![T::zero(); n * c * plane];
                for ni in 0..n {
                    let dst = (ni * c + start) * plane;
                    let src = ni * len * plane;
                    d[dst..dst + len * plane].copy_from_slice(&g[src..src + len * plane]);
                }
                acc(*input, d);
            }
            Op::Reshape { input } => acc(*input, g.to_vec()),
            Op::Sum { input } => acc(*input, vec![g[0]; self.value(*input).numel()]),
            Op::Mean { input } => {
                let len = self.value(*input).numel();
                acc(*input, vec![g[0] / T::lit(len as f64); len]);
            }
        }
    }
}

/// Logistic function, kept strictly inside (0, 1) even where the exact value
/// rounds to an endpoint.
fn sigmoid<T: Real>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let upper = T::one() - T::epsilon() / T::lit(2.0);
    y.max(T::min_positive_value()).min(upper)
}
