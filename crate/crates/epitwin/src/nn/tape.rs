//! Define-by-run reverse-mode autodiff over [`Tensor`] values.
//!
//! A fresh [`Graph`] is built per forward pass; `backward` walks the tape in
//! reverse and accumulates exact gradients for every node, including leaves
//! (parameters and, for latent inversion, the generator input).

use super::tensor::Tensor;

pub type NodeId = usize;

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    /// matrix (r x c) + row (1 x c)
    AddRow(NodeId, NodeId),
    /// matrix (r x c) * row (1 x c), broadcast over rows
    MulRow(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    ConcatCols(NodeId, NodeId),
    Mean(NodeId),
    Sum(NodeId),
    /// mean squared error against a constant target
    MseLoss(NodeId, Tensor),
    /// elementwise multiply by a constant tensor (dropout masks)
    MulConst(NodeId, Tensor),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mu: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        ch: usize,
        hw: usize,
        train: bool,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
    /// transposed conv with kernel == stride (exact block upsampling);
    /// weight shape [in_ch, out_ch, sh, sw]
    ConvT2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        sh: usize,
        sw: usize,
    },
    /// strided conv with kernel == stride (exact block downsampling);
    /// weight shape [out_ch, in_ch, kh, kw]
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients per node after a backward pass.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        self.grads[id].take().expect("no gradient at node")
    }
}

pub const BN_EPS: f64 = 1e-3;
pub const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Batch statistics of a training-mode batch-norm node (mean, var).
    pub fn batchnorm_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id].op {
            Op::BatchNorm { train: true, batch_mean, batch_var, .. } => {
                Some((batch_mean, batch_var))
            }
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape, self.nodes[b].value.shape, "add shapes");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(Tensor::new(shape, data), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape, self.nodes[b].value.shape, "sub shapes");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(Tensor::new(shape, data), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.shape, self.nodes[b].value.shape, "mul shapes");
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a].value.shape.clone();
        self.push(Tensor::new(shape, data), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a].value;
        let out = Tensor::new(v.shape.clone(), v.data.iter().map(|x| x * c).collect());
        self.push(out, Op::Scale(a, c))
    }

    /// (r x k) . (k x c)
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.cols(), vb.rows(), "matmul inner dims");
        let (r, k, c) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for kk in 0..k {
                let aik = va.data[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &vb.data[kk * c..(kk + 1) * c];
                let orow = &mut out[i * c..(i + 1) * c];
                for j in 0..c {
                    orow[j] += aik * brow[j];
                }
            }
        }
        self.push(Tensor::new(vec![r, c], out), Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (&self.nodes[a].value, &self.nodes[row].value);
        assert_eq!(va.cols(), vr.len(), "add_row width");
        let c = va.cols();
        let data = va
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + vr.data[i % c])
            .collect();
        let shape = va.shape.clone();
        self.push(Tensor::new(shape, data), Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (&self.nodes[a].value, &self.nodes[row].value);
        assert_eq!(va.cols(), vr.len(), "mul_row width");
        let c = va.cols();
        let data = va
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x * vr.data[i % c])
            .collect();
        let shape = va.shape.clone();
        self.push(Tensor::new(shape, data), Op::MulRow(a, row))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let data = v.data.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        let shape = v.shape.clone();
        self.push(Tensor::new(shape, data), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let data = v.data.iter().map(|&x| x.tanh()).collect();
        let shape = v.shape.clone();
        self.push(Tensor::new(shape, data), Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = &self.nodes[a].value;
        let data = v.data.iter().map(|&x| if x >= 0.0 { x } else { slope * x }).collect();
        let shape = v.shape.clone();
        self.push(Tensor::new(shape, data), Op::LeakyRelu(a, slope))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let data = v.data.iter().map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p()).collect();
        let shape = v.shape.clone();
        self.push(Tensor::new(shape, data), Op::Softplus(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.rows(), vb.rows(), "concat rows");
        let (r, ca, cb) = (va.rows(), va.cols(), vb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&va.data[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&vb.data[i * cb..(i + 1) * cb]);
        }
        self.push(Tensor::new(vec![r, ca + cb], data), Op::ConcatCols(a, b))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let m = v.data.iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let s = v.data.iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mse_loss(&mut self, a: NodeId, target: Tensor) -> NodeId {
        let v = &self.nodes[a].value;
        assert_eq!(v.shape, target.shape, "mse target shape");
        let n = v.len() as f64;
        let loss = v
            .data
            .iter()
            .zip(&target.data)
            .map(|(x, t)| (x - t) * (x - t))
            .sum::<f64>()
            / n;
        self.push(Tensor::scalar(loss), Op::MseLoss(a, target))
    }

    pub fn mul_const(&mut self, a: NodeId, mask: Tensor) -> NodeId {
        let v = &self.nodes[a].value;
        assert_eq!(v.shape, mask.shape, "mask shape");
        let data = v.data.iter().zip(&mask.data).map(|(x, m)| x * m).collect();
        let shape = v.shape.clone();
        self.push(Tensor::new(shape, data), Op::MulConst(a, mask))
    }

    /// Per-row layer normalisation with learned gain/bias (1 x c each).
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let (r, c) = (v.rows(), v.cols());
        assert_eq!(self.nodes[gamma].value.len(), c, "layer_norm gamma width");
        assert_eq!(self.nodes[beta].value.len(), c, "layer_norm beta width");
        let mut mu = vec![0.0; r];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &v.data[i * c..(i + 1) * c];
            let m = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            mu[i] = m;
            inv_std[i] = inv;
            for j in 0..c {
                let xhat = (row[j] - m) * inv;
                out[i * c + j] =
                    self.nodes[gamma].value.data[j] * xhat + self.nodes[beta].value.data[j];
            }
        }
        self.push(Tensor::new(vec![r, c], out), Op::LayerNorm { x, gamma, beta, mu, inv_std })
    }

    /// Per-channel batch normalisation over a (batch, ch*hw) tensor.
    /// In training mode the batch statistics are used (and retrievable via
    /// [`batchnorm_stats`]); in inference mode `running` supplies them.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        ch: usize,
        hw: usize,
        train: bool,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> NodeId {
        let v = &self.nodes[x].value;
        let batch = v.rows();
        assert_eq!(v.cols(), ch * hw, "batch_norm geometry");
        assert_eq!(self.nodes[gamma].value.len(), ch);
        assert_eq!(self.nodes[beta].value.len(), ch);
        let n = (batch * hw) as f64;
        let mut mean = vec![0.0; ch];
        let mut var = vec![0.0; ch];
        if train {
            for c in 0..ch {
                let mut acc = 0.0;
                for b in 0..batch {
                    for k in 0..hw {
                        acc += v.data[b * ch * hw + c * hw + k];
                    }
                }
                mean[c] = acc / n;
                let mut acc2 = 0.0;
                for b in 0..batch {
                    for k in 0..hw {
                        let d = v.data[b * ch * hw + c * hw + k] - mean[c];
                        acc2 += d * d;
                    }
                }
                var[c] = acc2 / n;
            }
        } else {
            mean.copy_from_slice(running_mean);
            var.copy_from_slice(running_var);
        }
        let mut inv_std = vec![0.0; ch];
        for c in 0..ch {
            inv_std[c] = 1.0 / (var[c] + BN_EPS).sqrt();
        }
        let mut xhat = vec![0.0; batch * ch * hw];
        let mut out = vec![0.0; batch * ch * hw];
        for b in 0..batch {
            for c in 0..ch {
                let g = self.nodes[gamma].value.data[c];
                let be = self.nodes[beta].value.data[c];
                for k in 0..hw {
                    let idx = b * ch * hw + c * hw + k;
                    let xh = (v.data[idx] - mean[c]) * inv_std[c];
                    xhat[idx] = xh;
                    out[idx] = g * xh + be;
                }
            }
        }
        let shape = v.shape.clone();
        self.push(
            Tensor::new(shape, out),
            Op::BatchNorm { x, gamma, beta, ch, hw, train, xhat, inv_std, batch_mean: mean, batch_var: var },
        )
    }

    /// Transposed convolution with kernel == stride. Input (batch,
    /// in_ch*in_h*in_w), weight [in_ch, out_ch, sh, sw], bias [out_ch];
    /// output (batch, out_ch * (in_h*sh) * (in_w*sw)).
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        sh: usize,
        sw: usize,
    ) -> NodeId {
        let v = &self.nodes[x].value;
        let wv = &self.nodes[w].value;
        let bv = &self.nodes[b].value;
        let batch = v.rows();
        assert_eq!(v.cols(), in_ch * in_h * in_w, "convT input geometry");
        assert_eq!(wv.len(), in_ch * out_ch * sh * sw, "convT weight shape");
        assert_eq!(bv.len(), out_ch, "convT bias shape");
        let (oh, ow) = (in_h * sh, in_w * sw);
        let mut out = vec![0.0; batch * out_ch * oh * ow];
        for bt in 0..batch {
            for oc in 0..out_ch {
                let base_o = bt * out_ch * oh * ow + oc * oh * ow;
                for i in 0..oh {
                    for j in 0..ow {
                        let (ii, di) = (i / sh, i % sh);
                        let (jj, dj) = (j / sw, j % sw);
                        let mut acc = bv.data[oc];
                        for ic in 0..in_ch {
                            let xin = v.data[bt * in_ch * in_h * in_w + ic * in_h * in_w + ii * in_w + jj];
                            let wgt = wv.data[((ic * out_ch + oc) * sh + di) * sw + dj];
                            acc += xin * wgt;
                        }
                        out[base_o + i * ow + j] = acc;
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![batch, out_ch * oh * ow], out),
            Op::ConvT2d { x, w, b, in_ch, out_ch, in_h, in_w, sh, sw },
        )
    }

    /// Strided convolution with kernel == stride. Input (batch,
    /// in_ch*in_h*in_w), weight [out_ch, in_ch, kh, kw], bias [out_ch];
    /// output (batch, out_ch * (in_h/kh) * (in_w/kw)).
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
    ) -> NodeId {
        let v = &self.nodes[x].value;
        let wv = &self.nodes[w].value;
        let bv = &self.nodes[b].value;
        let batch = v.rows();
        assert_eq!(v.cols(), in_ch * in_h * in_w, "conv input geometry");
        assert_eq!(in_h % kh, 0, "conv height divisibility");
        assert_eq!(in_w % kw, 0, "conv width divisibility");
        assert_eq!(wv.len(), out_ch * in_ch * kh * kw, "conv weight shape");
        assert_eq!(bv.len(), out_ch, "conv bias shape");
        let (oh, ow) = (in_h / kh, in_w / kw);
        let mut out = vec![0.0; batch * out_ch * oh * ow];
        for bt in 0..batch {
            for oc in 0..out_ch {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = bv.data[oc];
                        for ic in 0..in_ch {
                            for di in 0..kh {
                                for dj in 0..kw {
                                    let xin = v.data[bt * in_ch * in_h * in_w
                                        + ic * in_h * in_w
                                        + (i * kh + di) * in_w
                                        + (j * kw + dj)];
                                    let wgt = wv.data[((oc * in_ch + ic) * kh + di) * kw + dj];
                                    acc += xin * wgt;
                                }
                            }
                        }
                        out[bt * out_ch * oh * ow + oc * oh * ow + i * ow + j] = acc;
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![batch, out_ch * oh * ow], out),
            Op::Conv2d { x, w, b, in_ch, out_ch, in_h, in_w, kh, kw },
        )
    }

    /// Reverse-mode gradient of a scalar node with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Grads {
        assert_eq!(self.nodes[loss].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { grads }
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut grads[id] {
            Some(t) => {
                for (a, b) in t.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, g.clone());
                let neg = Tensor::new(g.shape.clone(), g.data.iter().map(|x| -x).collect());
                self.add_grad(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
                );
                let db = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().zip(&va.data).map(|(x, y)| x * y).collect(),
                );
                self.add_grad(grads, *a, da);
                self.add_grad(grads, *b, db);
            }
            Op::Scale(a, c) => {
                let da = Tensor::new(g.shape.clone(), g.data.iter().map(|x| x * c).collect());
                self.add_grad(grads, *a, da);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (r, k, c) = (va.rows(), va.cols(), vb.cols());
                // dA = G . B^T
                let mut da = vec![0.0; r * k];
                for i in 0..r {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..c {
                            acc += g.data[i * c + j] * vb.data[kk * c + j];
                        }
                        da[i * k + kk] = acc;
                    }
                }
                // dB = A^T . G
                let mut db = vec![0.0; k * c];
                for kk in 0..k {
                    for i in 0..r {
                        let aik = va.data[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            db[kk * c + j] += aik * g.data[i * c + j];
                        }
                    }
                }
                self.add_grad(grads, *a, Tensor::new(vec![r, k], da));
                self.add_grad(grads, *b, Tensor::new(vec![k, c], db));
            }
            Op::AddRow(a, row) => {
                self.add_grad(grads, *a, g.clone());
                let c = self.nodes[*row].value.len();
                let mut dr = vec![0.0; c];
                for (i, x) in g.data.iter().enumerate() {
                    dr[i % c] += x;
                }
                let shape = self.nodes[*row].value.shape.clone();
                self.add_grad(grads, *row, Tensor::new(shape, dr));
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (&self.nodes[*a].value, &self.nodes[*row].value);
                let c = vr.len();
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().enumerate().map(|(i, x)| x * vr.data[i % c]).collect(),
                );
                let mut dr = vec![0.0; c];
                for (i, x) in g.data.iter().enumerate() {
                    dr[i % c] += x * va.data[i];
                }
                self.add_grad(grads, *a, da);
                let shape = vr.shape.clone();
                self.add_grad(grads, *row, Tensor::new(shape, dr));
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[id].value;
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().zip(&y.data).map(|(x, s)| x * s * (1.0 - s)).collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[id].value;
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().zip(&y.data).map(|(x, t)| x * (1.0 - t * t)).collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::LeakyRelu(a, slope) => {
                let vx = &self.nodes[*a].value;
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&vx.data)
                        .map(|(x, v)| if *v >= 0.0 { *x } else { x * slope })
                        .collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::Softplus(a) => {
                let vx = &self.nodes[*a].value;
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&vx.data)
                        .map(|(x, v)| x / (1.0 + (-v).exp()))
                        .collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.nodes[*a].value.cols(), self.nodes[*b].value.cols());
                let r = self.nodes[*a].value.rows();
                let mut da = vec![0.0; r * ca];
                let mut db = vec![0.0; r * cb];
                for i in 0..r {
                    da[i * ca..(i + 1) * ca]
                        .copy_from_slice(&g.data[i * (ca + cb)..i * (ca + cb) + ca]);
                    db[i * cb..(i + 1) * cb]
                        .copy_from_slice(&g.data[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
                }
                self.add_grad(grads, *a, Tensor::new(vec![r, ca], da));
                self.add_grad(grads, *b, Tensor::new(vec![r, cb], db));
            }
            Op::Mean(a) => {
                let v = &self.nodes[*a].value;
                let s = g.data[0] / v.len() as f64;
                self.add_grad(grads, *a, Tensor::new(v.shape.clone(), vec![s; v.len()]));
            }
            Op::Sum(a) => {
                let v = &self.nodes[*a].value;
                self.add_grad(grads, *a, Tensor::new(v.shape.clone(), vec![g.data[0]; v.len()]));
            }
            Op::MseLoss(a, target) => {
                let v = &self.nodes[*a].value;
                let n = v.len() as f64;
                let da = Tensor::new(
                    v.shape.clone(),
                    v.data
                        .iter()
                        .zip(&target.data)
                        .map(|(x, t)| g.data[0] * 2.0 * (x - t) / n)
                        .collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::MulConst(a, mask) => {
                let da = Tensor::new(
                    g.shape.clone(),
                    g.data.iter().zip(&mask.data).map(|(x, m)| x * m).collect(),
                );
                self.add_grad(grads, *a, da);
            }
            Op::LayerNorm { x, gamma, beta, mu, inv_std } => {
                let vx = &self.nodes[*x].value;
                let vg = &self.nodes[*gamma].value;
                let (r, c) = (vx.rows(), vx.cols());
                let mut dx = vec![0.0; r * c];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for i in 0..r {
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    let mut xhat_row = vec![0.0; c];
                    let mut dxhat_row = vec![0.0; c];
                    for j in 0..c {
                        let idx = i * c + j;
                        let xh = (vx.data[idx] - mu[i]) * inv_std[i];
                        xhat_row[j] = xh;
                        let dxh = g.data[idx] * vg.data[j];
                        dxhat_row[j] = dxh;
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh;
                        dgamma[j] += g.data[idx] * xh;
                        dbeta[j] += g.data[idx];
                    }
                    let nf = c as f64;
                    for j in 0..c {
                        dx[i * c + j] = inv_std[i] / nf
                            * (nf * dxhat_row[j] - sum_dxhat - xhat_row[j] * sum_dxhat_xhat);
                    }
                }
                self.add_grad(grads, *x, Tensor::new(vec![r, c], dx));
                let gshape = vg.shape.clone();
                self.add_grad(grads, *gamma, Tensor::new(gshape, dgamma));
                let bshape = self.nodes[*beta].value.shape.clone();
                self.add_grad(grads, *beta, Tensor::new(bshape, dbeta));
            }
            Op::BatchNorm { x, gamma, beta, ch, hw, train, xhat, inv_std, .. } => {
                let vx = &self.nodes[*x].value;
                let vg = &self.nodes[*gamma].value;
                let batch = vx.rows();
                let n = (batch * hw) as f64;
                let mut dx = vec![0.0; vx.len()];
                let mut dgamma = vec![0.0; *ch];
                let mut dbeta = vec![0.0; *ch];
                for c in 0..*ch {
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for b in 0..batch {
                        for k in 0..*hw {
                            let idx = b * ch * hw + c * hw + k;
                            let dxh = g.data[idx] * vg.data[c];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat[idx];
                            dgamma[c] += g.data[idx] * xhat[idx];
                            dbeta[c] += g.data[idx];
                        }
                    }
                    for b in 0..batch {
                        for k in 0..*hw {
                            let idx = b * ch * hw + c * hw + k;
                            let dxh = g.data[idx] * vg.data[c];
                            dx[idx] = if *train {
                                inv_std[c] / n
                                    * (n * dxh - sum_dxhat - xhat[idx] * sum_dxhat_xhat)
                            } else {
                                dxh * inv_std[c]
                            };
                        }
                    }
                }
                let shape = vx.shape.clone();
                self.add_grad(grads, *x, Tensor::new(shape, dx));
                let gshape = vg.shape.clone();
                self.add_grad(grads, *gamma, Tensor::new(gshape, dgamma));
                let bshape = self.nodes[*beta].value.shape.clone();
                self.add_grad(grads, *beta, Tensor::new(bshape, dbeta));
            }
            Op::ConvT2d { x, w, b, in_ch, out_ch, in_h, in_w, sh, sw } => {
                let vx = &self.nodes[*x].value;
                let vw = &self.nodes[*w].value;
                let batch = vx.rows();
                let (oh, ow) = (in_h * sh, in_w * sw);
                let mut dx = vec![0.0; vx.len()];
                let mut dw = vec![0.0; vw.len()];
                let mut db = vec![0.0; *out_ch];
                for bt in 0..batch {
                    for oc in 0..*out_ch {
                        for i in 0..oh {
                            for j in 0..ow {
                                let go = g.data[bt * out_ch * oh * ow + oc * oh * ow + i * ow + j];
                                if go == 0.0 {
                                    continue;
                                }
                                db[oc] += go;
                                let (ii, di) = (i / sh, i % sh);
                                let (jj, dj) = (j / sw, j % sw);
                                for ic in 0..*in_ch {
                                    let xi = bt * in_ch * in_h * in_w + ic * in_h * in_w + ii * in_w + jj;
                                    let wi = ((ic * out_ch + oc) * sh + di) * sw + dj;
                                    dx[xi] += go * vw.data[wi];
                                    dw[wi] += go * vx.data[xi];
                                }
                            }
                        }
                    }
                }
                let xs = vx.shape.clone();
                self.add_grad(grads, *x, Tensor::new(xs, dx));
                let ws = vw.shape.clone();
                self.add_grad(grads, *w, Tensor::new(ws, dw));
                let bs = self.nodes[*b].value.shape.clone();
                self.add_grad(grads, *b, Tensor::new(bs, db));
            }
            Op::Conv2d { x, w, b, in_ch, out_ch, in_h, in_w, kh, kw } => {
                let vx = &self.nodes[*x].value;
                let vw = &self.nodes[*w].value;
                let batch = vx.rows();
                let (oh, ow) = (in_h / kh, in_w / kw);
                let mut dx = vec![0.0; vx.len()];
                let mut dw = vec![0.0; vw.len()];
                let mut db = vec![0.0; *out_ch];
                for bt in 0..batch {
                    for oc in 0..*out_ch {
                        for i in 0..oh {
                            for j in 0..ow {
                                let go = g.data[bt * out_ch * oh * ow + oc * oh * ow + i * ow + j];
                                if go == 0.0 {
                                    continue;
                                }
                                db[oc] += go;
                                for ic in 0..*in_ch {
                                    for di in 0..*kh {
                                        for dj in 0..*kw {
                                            let xi = bt * in_ch * in_h * in_w
                                                + ic * in_h * in_w
                                                + (i * kh + di) * in_w
                                                + (j * kw + dj);
                                            let wi = ((oc * in_ch + ic) * kh + di) * kw + dj;
                                            dx[xi] += go * vw.data[wi];
                                            dw[wi] += go * vx.data[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let xs = vx.shape.clone();
                self.add_grad(grads, *x, Tensor::new(xs, dx));
                let ws = vw.shape.clone();
                self.add_grad(grads, *w, Tensor::new(ws, dw));
                let bs = self.nodes[*b].value.shape.clone();
                self.add_grad(grads, *b, Tensor::new(bs, db));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_affine() {
        // W = 0, b = 0 -> sigmoid gives a 0.5 vector
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![3.0, -1.0]));
        let w = g.leaf(Tensor::zeros(&[2, 4]));
        let b = g.leaf(Tensor::zeros(&[1, 4]));
        let z = g.matmul(x, w);
        let z = g.add_row(z, b);
        let y = g.sigmoid(z);
        assert_eq!(g.value(y).data, vec![0.5; 4]);
    }

    #[test]
    fn linear_layer_extracts_columns() {
        // linear activation, b = 0, x = e_i -> y = row i of W
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let x = g.leaf(Tensor::row(vec![0.0, 1.0, 0.0]));
        let y = g.matmul(x, w);
        assert_eq!(g.value(y).data, vec![3.0, 4.0]);
    }

    #[test]
    fn matmul_backward_matches_hand_computation() {
        // f = sum(A.B); dA = 1.B^T, dB = A^T.1
        let mut g = Graph::new();
        let a = g.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.leaf(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let y = g.matmul(a, b);
        let loss = g.sum(y);
        let grads = g.backward(loss);
        assert_eq!(grads.get(a).unwrap().data, vec![11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads.get(b).unwrap().data, vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn softplus_is_stable_and_correct() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![-800.0, 0.0, 800.0, 2.0]));
        let y = g.softplus(x);
        let v = g.value(y);
        assert_eq!(v.data[0], 0.0);
        assert!((v.data[1] - (2.0f64).ln()).abs() < 1e-15);
        assert_eq!(v.data[2], 800.0);
        assert!((v.data[3] - (1.0 + (2.0f64).exp()).ln()).abs() < 1e-12);
    }
}
