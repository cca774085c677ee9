use super::kernels::{self, ConvGeom};
use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    FullyConnected { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, k: Var, b: Option<Var>, geom: ConvGeom },
    Relu(Var),
    Sigmoid(Var),
    SpatialMean(Var),
    ChannelMean(Var),
    Concat(Vec<Var>),
    MulBroadcast { x: Var, a: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    TemporalMean { x: Var, t: usize },
    Add(Var, Var),
    Scale(Var, f64),
    WeightedSum { x: Var, weights: Tensor },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Operation tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a reverse topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `like`'s shape when nothing flowed to it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn finite(t: Tensor, op: &'static str) -> Result<Tensor, TensorError> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Which side of each kink the recorded values sit on: the sign of every
    /// ReLU input and the winner of every max-pool window. Two evaluations
    /// with equal patterns lie on the same smooth piece.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Relu(x) => out.extend(self.value(*x).data().iter().map(|&v| usize::from(v > 0.0))),
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    /// Records a constant input.
    pub fn input(&mut self, t: Tensor) -> Result<Var, TensorError> {
        let t = finite(t, "input")?;
        Ok(self.push(t, Op::Leaf))
    }

    /// Records the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `x (B, Cin) @ w (Cin, Cout) + b (Cout)`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
        const OP: &str = "fully_connected";
        let (rows, cin) = self.value(x).dims2(OP)?;
        let (wi, cout) = self.value(w).dims2(OP)?;
        if wi != cin {
            return Err(shape_err(OP, format!("x has {cin} features, w expects {wi}")));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(shape_err(OP, format!("bias {:?}, expected [{cout}]", self.value(b).shape())));
            }
        }
        let out = kernels::fc_forward(
            self.value(x).data(),
            rows,
            cin,
            self.value(w).data(),
            cout,
            b.map(|b| self.value(b).data()),
        );
        let t = finite(Tensor::new(&[rows, cout], out)?, OP)?;
        Ok(self.push(t, Op::FullyConnected { x, w, b }))
    }

    /// 2-D convolution with a square kernel `(Cout, Cin, k, k)`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var, TensorError> {
        const OP: &str = "conv2d";
        let (batch, cin, h, w) = self.value(x).dims4(OP)?;
        let (cout, kin, kh, kw) = self.value(k).dims4(OP)?;
        if kin != cin || kh != kw {
            return Err(shape_err(
                OP,
                format!("kernel {:?} incompatible with input {:?}", self.value(k).shape(), self.value(x).shape()),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(shape_err(OP, format!("bias {:?}, expected [{cout}]", self.value(b).shape())));
            }
        }
        let geom = ConvGeom::new(cin, h, w, cout, kh, stride, padding)
            .ok_or_else(|| shape_err(OP, format!("{h}x{w} input too small for kernel {kh}, padding {padding}")))?;
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            batch,
            self.value(k).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let t = finite(Tensor::new(&[batch, cout, geom.ho, geom.wo], out)?, OP)?;
        Ok(self.push(t, Op::Conv2d { x, k, b, geom }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        let t = Tensor::new(src.shape(), src.data().iter().map(|&v| v.max(0.0)).collect())?;
        Ok(self.push(finite(t, "relu")?, Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        let t = Tensor::new(src.shape(), src.data().iter().map(|&v| sigmoid(v)).collect())?;
        Ok(self.push(finite(t, "sigmoid")?, Op::Sigmoid(x)))
    }

    /// `(B, C, H, W) -> (B, C)`, mean over the spatial positions.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var, TensorError> {
        const OP: &str = "spatial_mean";
        let (b, c, h, w) = self.value(x).dims4(OP)?;
        let hw = h * w;
        let out = self
            .value(x)
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        let t = finite(Tensor::new(&[b, c], out)?, OP)?;
        Ok(self.push(t, Op::SpatialMean(x)))
    }

    /// Same as [`Graph::spatial_mean`]; the name used for classifier heads.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        self.spatial_mean(x)
    }

    /// `(B, C, H, W) -> (B, 1, H, W)`, mean over channels.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var, TensorError> {
        const OP: &str = "channel_mean";
        let (b, c, h, w) = self.value(x).dims4(OP)?;
        let hw = h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; b * hw];
        for bi in 0..b {
            let o = &mut out[bi * hw..(bi + 1) * hw];
            for ci in 0..c {
                let plane = &src[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                for (a, v) in o.iter_mut().zip(plane) {
                    *a += v;
                }
            }
            for a in o.iter_mut() {
                *a /= c as f64;
            }
        }
        let t = finite(Tensor::new(&[b, 1, h, w], out)?, OP)?;
        Ok(self.push(t, Op::ChannelMean(x)))
    }

    /// Concatenates along dimension 1. Inputs must be all 2-D `(B, C_i)` or all
    /// 4-D `(B, C_i, H, W)` with matching other dimensions.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        const OP: &str = "concat_channels";
        let first = self.value(*xs.first().ok_or_else(|| shape_err(OP, "no inputs".into()))?);
        let ndim = first.shape().len();
        if ndim != 2 && ndim != 4 {
            return Err(shape_err(OP, format!("expected 2-D or 4-D inputs, got {:?}", first.shape())));
        }
        let b = first.shape()[0];
        let tail: Vec<usize> = first.shape()[2..].to_vec();
        let inner: usize = tail.iter().product();
        let mut total_c = 0;
        for &v in xs {
            let s = self.value(v).shape();
            if s.len() != ndim || s[0] != b || s[2..] != tail[..] {
                return Err(shape_err(OP, format!("{:?} does not stack with {:?}", s, first.shape())));
            }
            total_c += s[1];
        }
        let mut out = Vec::with_capacity(b * total_c * inner);
        for bi in 0..b {
            for &v in xs {
                let t = self.value(v);
                let chunk = t.shape()[1] * inner;
                out.extend_from_slice(&t.data()[bi * chunk..(bi + 1) * chunk]);
            }
        }
        let mut shape = vec![b, total_c];
        shape.extend(&tail);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Concat(xs.to_vec())))
    }

    /// `x (B, C, H, W) ⊙ a`, where `a` is `(B, C)` (broadcast over H, W) or
    /// `(B, 1, H, W)` (broadcast over C).
    pub fn mul_broadcast(&mut self, x: Var, a: Var) -> Result<Var, TensorError> {
        const OP: &str = "mul_broadcast";
        let (b, c, h, w) = self.value(x).dims4(OP)?;
        let hw = h * w;
        let xs = self.value(x).data();
        let at = self.value(a);
        let per_channel = at.shape() == [b, c];
        let per_pixel = at.shape() == [b, 1, h, w];
        if !per_channel && !per_pixel {
            return Err(shape_err(OP, format!("gate {:?} does not broadcast to {:?}", at.shape(), [b, c, h, w])));
        }
        let ad = at.data();
        let mut out = Vec::with_capacity(xs.len());
        for bi in 0..b {
            for ci in 0..c {
                let plane = &xs[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                if per_channel {
                    let g = ad[bi * c + ci];
                    out.extend(plane.iter().map(|v| v * g));
                } else {
                    let gp = &ad[bi * hw..(bi + 1) * hw];
                    out.extend(plane.iter().zip(gp).map(|(v, g)| v * g));
                }
            }
        }
        let t = finite(Tensor::new(&[b, c, h, w], out)?, OP)?;
        Ok(self.push(t, Op::MulBroadcast { x, a }))
    }

    /// 3x3 max pooling with stride 2 and padding 1.
    pub fn max_pool_3x3_s2(&mut self, x: Var) -> Result<Var, TensorError> {
        const OP: &str = "max_pool_3x3_s2";
        let (b, c, h, w) = self.value(x).dims4(OP)?;
        if h == 0 || w == 0 {
            return Err(shape_err(OP, "empty spatial dims".into()));
        }
        let (out, argmax, ho, wo) = kernels::max_pool_forward(self.value(x).data(), b * c, h, w);
        let t = finite(Tensor::new(&[b, c, ho, wo], out)?, OP)?;
        Ok(self.push(t, Op::MaxPool { x, argmax }))
    }

    /// `(N*T, K) -> (N, K)`, averaging each run of `t` consecutive rows.
    pub fn temporal_mean(&mut self, x: Var, t: usize) -> Result<Var, TensorError> {
        const OP: &str = "temporal_mean";
        let (rows, k) = self.value(x).dims2(OP)?;
        if t == 0 || rows % t != 0 {
            return Err(shape_err(OP, format!("{rows} rows not divisible into segments of {t}")));
        }
        let n = rows / t;
        let src = self.value(x).data();
        let mut out = vec![0.0; n * k];
        for (r, row) in src.chunks_exact(k).enumerate() {
            let o = &mut out[(r / t) * k..(r / t + 1) * k];
            for (a, v) in o.iter_mut().zip(row) {
                *a += v / t as f64;
            }
        }
        let tt = finite(Tensor::new(&[n, k], out)?, OP)?;
        Ok(self.push(tt, Op::TemporalMean { x, t }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = finite(Tensor::new(ta.shape(), out)?, "add")?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, TensorError> {
        let src = self.value(x);
        let t = Tensor::new(src.shape(), src.data().iter().map(|v| v * s).collect())?;
        Ok(self.push(finite(t, "scale")?, Op::Scale(x, s)))
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean_of(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        let mut acc = *xs.first().ok_or_else(|| shape_err("mean_of", "no inputs".into()))?;
        for &v in &xs[1..] {
            acc = self.add(acc, v)?;
        }
        if xs.len() == 1 {
            Ok(acc)
        } else {
            self.scale(acc, 1.0 / xs.len() as f64)
        }
    }

    /// Scalar `sum(x ⊙ weights)` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.shape() != weights.shape() {
            return Err(shape_err("weighted_sum", format!("{:?} vs {:?}", src.shape(), weights.shape())));
        }
        let s = src.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let t = finite(Tensor::scalar(s), "weighted_sum")?;
        Ok(self.push(t, Op::WeightedSum { x, weights }))
    }

    /// Mean softmax cross-entropy of `(N, K)` logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        const OP: &str = "softmax_cross_entropy";
        let (n, k) = self.value(logits).dims2(OP)?;
        if labels.len() != n {
            return Err(shape_err(OP, format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Label { label, classes: k });
        }
        let probs = softmax_rows(self.value(logits));
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let row = &self.value(logits).data()[i * k..(i + 1) * k];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - row[l]
            })
            .sum::<f64>()
            / n as f64;
        let t = finite(Tensor::scalar(loss), OP)?;
        Ok(self.push(
            t,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, out: Var) -> Result<Gradients, TensorError> {
        let root = self.value(out);
        if root.len() != 1 {
            return Err(TensorError::NotScalar(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::new(root.shape(), vec![1.0])?);
        for idx in (0..=out.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            self.backward_node(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    /// Adds the parameter gradients of a sweep into the store.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                store.get_mut(*id).grad.add_assign(g);
            }
        }
    }

    fn backward_node(&self, idx: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, data: Vec<f64>| {
            let shape = self.value(v).shape();
            match &mut grads[v.0] {
                Some(g) => {
                    for (a, b) in g.data_mut().iter_mut().zip(&data) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(Tensor::new(shape, data).expect("gradient shape")),
            }
        };
        let dyd = dy.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::FullyConnected { x, w, b } => {
                let (rows, cin) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let cout = self.value(*w).shape()[1];
                let (dx, dw, db) =
                    kernels::fc_backward(self.value(*x).data(), rows, cin, self.value(*w).data(), cout, dyd);
                send(*x, dx);
                send(*w, dw);
                if let Some(b) = b {
                    send(*b, db);
                }
            }
            Op::Conv2d { x, k, b, geom } => {
                let batch = self.value(*x).shape()[0];
                let (dx, dk, db) =
                    kernels::conv2d_backward(self.value(*x).data(), batch, self.value(*k).data(), dyd, geom);
                send(*x, dx);
                send(*k, dk);
                if let Some(b) = b {
                    send(*b, db);
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                send(*x, xd.iter().zip(dyd).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect());
            }
            Op::Sigmoid(x) => {
                let yd = node.value.data();
                send(*x, yd.iter().zip(dyd).map(|(&y, &d)| d * y * (1.0 - y)).collect());
            }
            Op::SpatialMean(x) => {
                let s = self.value(*x).shape();
                let hw = s[2] * s[3];
                let mut dx = Vec::with_capacity(self.value(*x).len());
                for &d in dyd {
                    dx.extend(std::iter::repeat_n(d / hw as f64, hw));
                }
                send(*x, dx);
            }
            Op::ChannelMean(x) => {
                let s = self.value(*x).shape();
                let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
                let mut dx = Vec::with_capacity(b * c * hw);
                for bi in 0..b {
                    let plane = &dyd[bi * hw..(bi + 1) * hw];
                    for _ in 0..c {
                        dx.extend(plane.iter().map(|d| d / c as f64));
                    }
                }
                send(*x, dx);
            }
            Op::Concat(xs) => {
                let s = node.value.shape();
                let inner: usize = s[2..].iter().product();
                let b = s[0];
                let total = s[1] * inner;
                let mut offset = 0;
                for &v in xs {
                    let chunk = self.value(v).shape()[1] * inner;
                    let mut dx = Vec::with_capacity(b * chunk);
                    for bi in 0..b {
                        dx.extend_from_slice(&dyd[bi * total + offset..bi * total + offset + chunk]);
                    }
                    offset += chunk;
                    send(v, dx);
                }
            }
            Op::MulBroadcast { x, a } => {
                let s = self.value(*x).shape();
                let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
                let xd = self.value(*x).data();
                let ad = self.value(*a).data();
                let per_channel = self.value(*a).shape().len() == 2;
                let mut dx = Vec::with_capacity(xd.len());
                let mut da = vec![0.0; ad.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        let r = (bi * c + ci) * hw..(bi * c + ci + 1) * hw;
                        let (xp, dp) = (&xd[r.clone()], &dyd[r]);
                        if per_channel {
                            let g = ad[bi * c + ci];
                            dx.extend(dp.iter().map(|d| d * g));
                            da[bi * c + ci] += xp.iter().zip(dp).map(|(xv, d)| xv * d).sum::<f64>();
                        } else {
                            let gp = &ad[bi * hw..(bi + 1) * hw];
                            dx.extend(dp.iter().zip(gp).map(|(d, g)| d * g));
                            for (j, (xv, d)) in xp.iter().zip(dp).enumerate() {
                                da[bi * hw + j] += xv * d;
                            }
                        }
                    }
                }
                send(*x, dx);
                send(*a, da);
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (&i, &d) in argmax.iter().zip(dyd) {
                    dx[i] += d;
                }
                send(*x, dx);
            }
            Op::TemporalMean { x, t } => {
                let k = node.value.shape()[1];
                let rows = self.value(*x).shape()[0];
                let mut dx = Vec::with_capacity(rows * k);
                for r in 0..rows {
                    dx.extend(dyd[(r / t) * k..(r / t + 1) * k].iter().map(|d| d / *t as f64));
                }
                send(*x, dx);
            }
            Op::Add(a, b) => {
                send(*a, dyd.to_vec());
                send(*b, dyd.to_vec());
            }
            Op::Scale(x, s) => send(*x, dyd.iter().map(|d| d * s).collect()),
            Op::WeightedSum { x, weights } => {
                send(*x, weights.data().iter().map(|w| w * dyd[0]).collect());
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let k = probs.shape()[1];
                let n = labels.len() as f64;
                let mut dx: Vec<f64> = probs.data().iter().map(|p| p * dyd[0] / n).collect();
                for (i, &l) in labels.iter().enumerate() {
                    dx[i * k + l] -= dyd[0] / n;
                }
                send(*logits, dx);
            }
        }
    }
}

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::new(logits.shape(), out).expect("same shape")
}
