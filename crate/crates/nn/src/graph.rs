//! Tape-based reverse-mode differentiation.

use crate::conv::{self, ConvShape, Padding};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::rotate;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Float> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv { x: usize, w: usize, b: Option<usize>, shape: ConvShape },
    ConvT { x: usize, w: usize, b: Option<usize>, shape: ConvShape },
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Gelu { x: usize, cdf: Vec<T> },
    Add { a: usize, b: usize },
    Scale { x: usize, s: T },
    Pool { x: usize, out_h: usize, out_w: usize },
    Rotate { x: usize, angles: Vec<f64> },
    Mse { pred: usize, target: Tensor<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    grad: Option<Tensor<T>>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn normal_cdf<T: Float>(x: T) -> T {
    T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn normal_pdf<T: Float>(x: T) -> T {
    (T::of(-0.5) * x * x).exp() * T::of(0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2)
}

/// PyTorch's adaptive pooling bins: `[floor(i*n/m), ceil((i+1)*n/m))`.
fn pool_bin(i: usize, n: usize, m: usize) -> (usize, usize) {
    (i * n / m, ((i + 1) * n).div_ceil(m))
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), check_finite: true }
    }

    /// Enables or disables the finiteness check run after every op.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, grad: None, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize], name: &'static str) -> Result<Var> {
        if self.check_finite {
            if let Some(index) = value.first_non_finite() {
                return Err(Error::NonFinite { op: name, index });
            }
        }
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, grad: None, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check_param(&self, v: Var, shape: &[usize], what: &str) -> Result<()> {
        let found = self.value(v).shape();
        if found != shape {
            return Err(Error::Shape(format!("{what} has shape {found:?}, expected {shape:?}")));
        }
        Ok(())
    }

    /// Cross-correlation with weight `(Cout, Cin, kh, kw)` and optional bias `(Cout)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: Padding) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if wcin != cin {
            return Err(Error::Shape(format!("conv2d: input has {cin} channels, weight expects {wcin}")));
        }
        if let Some(b) = b {
            self.check_param(b, &[cout], "conv2d bias")?;
        }
        let shape = ConvShape::new(cin, h, wd, kh, kw, stride, pad)?;
        let out = conv::conv2d_forward(
            &shape,
            n,
            cout,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::from_vec(&[n, cout, shape.out_h, shape.out_w], out)?;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(b.map(|b| b.0));
        self.push(value, Op::Conv { x: x.0, w: w.0, b: b.map(|b| b.0), shape }, &inputs, "conv2d")
    }

    /// Transposed convolution with weight `(Cin, Cout, kh, kw)`; output size
    /// `(H - 1) * stride - pad + k` per axis.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: Padding) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (wcin, cout, kh, kw) = self.value(w).dims4()?;
        if wcin != cin {
            return Err(Error::Shape(format!("conv_transpose2d: input has {cin} channels, weight expects {wcin}")));
        }
        if let Some(b) = b {
            self.check_param(b, &[cout], "conv_transpose2d bias")?;
        }
        if stride == 0 || h == 0 || wd == 0 {
            return Err(Error::Shape("conv_transpose2d needs a positive stride and input size".into()));
        }
        let oh = ((h - 1) * stride + kh).checked_sub(pad.top + pad.bottom);
        let ow = ((wd - 1) * stride + kw).checked_sub(pad.left + pad.right);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::Shape("conv_transpose2d padding exceeds the output".into()));
        };
        let shape = ConvShape::new(cout, oh, ow, kh, kw, stride, pad)?;
        if (shape.out_h, shape.out_w) != (h, wd) {
            return Err(Error::Shape("conv_transpose2d geometry is not invertible".into()));
        }
        let out = conv::conv_transpose2d_forward(
            &shape,
            n,
            cin,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::from_vec(&[n, cout, oh, ow], out)?;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(b.map(|b| b.0));
        self.push(value, Op::ConvT { x: x.0, w: w.0, b: b.map(|b| b.0), shape }, &inputs, "conv_transpose2d")
    }

    /// Per-channel batch normalization. Training mode normalizes with batch
    /// statistics and updates `stats`; eval mode uses `stats`.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, stats: &mut BatchNormStats<T>, train: bool) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if n == 0 {
            return Err(Error::Shape("batch_norm needs a non-empty batch".into()));
        }
        self.check_param(gamma, &[c], "batch_norm gamma")?;
        self.check_param(beta, &[c], "batch_norm beta")?;
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::Shape(format!("batch_norm stats for {} channels, input has {c}", stats.mean.len())));
        }
        let plane = h * w;
        let count = (n * plane) as f64;
        let eps = BN_EPS;
        let xv = self.value(x).data();
        let mut inv_std = vec![T::zero(); c];
        let mut means = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for bi in 0..n {
                    for &v in &xv[(bi * c + ch) * plane..(bi * c + ch + 1) * plane] {
                        let v = v.f64();
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / count;
                let var = (sq / count - mean * mean).max(0.0);
                let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                let m = T::of(BN_MOMENTUM);
                stats.mean[ch] = (T::one() - m) * stats.mean[ch] + m * T::of(mean);
                stats.var[ch] = (T::one() - m) * stats.var[ch] + m * T::of(unbiased);
                (mean, var)
            } else {
                (stats.mean[ch].f64(), stats.var[ch].f64())
            };
            means[ch] = mean;
            inv_std[ch] = T::of(1.0 / (var + eps).sqrt());
        }
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for bi in 0..n {
            for ch in 0..c {
                let mean = T::of(means[ch]);
                let range = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
                for i in range {
                    let xh = (xv[i] - mean) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        self.push(
            value,
            Op::BatchNorm { x: x.0, gamma: gamma.0, beta: beta.0, xhat, inv_std, train },
            &[x.0, gamma.0, beta.0],
            "batch_norm",
        )
    }

    /// `x * Φ(x)` with the exact Gaussian CDF.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let cdf: Vec<T> = xv.data().iter().map(|&v| normal_cdf(v)).collect();
        let out = xv.data().iter().zip(&cdf).map(|(&v, &c)| v * c).collect();
        let value = Tensor::from_vec(xv.shape(), out)?;
        self.push(value, Op::Gelu { x: x.0, cdf }, &[x.0], "gelu")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut value = ta.clone();
        value.add_assign(tb);
        self.push(value, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0], "add")
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let value = self.value(x).map(|v| v * s);
        self.push(value, Op::Scale { x: x.0, s }, &[x.0], "scale")
    }

    /// Average pooling onto an `out_h x out_w` grid with PyTorch's bin edges.
    pub fn adaptive_avg_pool2d(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
            return Err(Error::Shape(format!("cannot pool {h}x{w} to {out_h}x{out_w}")));
        }
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * out_h * out_w];
        for p in 0..n * c {
            let src = &xv[p * h * w..(p + 1) * h * w];
            for oi in 0..out_h {
                let (r0, r1) = pool_bin(oi, h, out_h);
                for oj in 0..out_w {
                    let (c0, c1) = pool_bin(oj, w, out_w);
                    let mut acc = T::zero();
                    for r in r0..r1 {
                        for cc in c0..c1 {
                            acc = acc + src[r * w + cc];
                        }
                    }
                    out[(p * out_h + oi) * out_w + oj] = acc / T::of(((r1 - r0) * (c1 - c0)) as f64);
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, out_h, out_w], out)?;
        self.push(value, Op::Pool { x: x.0, out_h, out_w }, &[x.0], "adaptive_avg_pool2d")
    }

    /// Rotates sample `i` of a square `(N, C, S, S)` batch counterclockwise
    /// by `angles_deg[i]`, bilinear with zeros outside.
    pub fn rotate(&mut self, x: Var, angles_deg: &[f64]) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h != w {
            return Err(Error::Shape(format!("rotation needs square planes, got {h}x{w}")));
        }
        if angles_deg.len() != n {
            return Err(Error::Shape(format!("{} rotation angles for a batch of {n}", angles_deg.len())));
        }
        let plane = h * w;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        for bi in 0..n {
            for ch in 0..c {
                let r = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
                rotate::rotate_plane(&xv[r.clone()], h, angles_deg[bi], &mut out[r]);
            }
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        self.push(value, Op::Rotate { x: x.0, angles: angles_deg.to_vec() }, &[x.0], "rotate")
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Shape(format!("mse_loss: {:?} vs {:?}", p.shape(), target.shape())));
        }
        let sum: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let d = (a - b).f64();
                d * d
            })
            .sum();
        let value = Tensor::scalar(T::of(sum / p.len().max(1) as f64));
        self.push(value, Op::Mse { pred: pred.0, target: target.clone() }, &[pred.0], "mse_loss")
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar; use backward_with".into()));
        }
        let shape = self.value(loss).shape().to_vec();
        self.backward_with(loss, Tensor::full(&shape, T::one()))
    }

    /// Backpropagates `seed` (same shape as `out`) through the tape. Only
    /// leaves keep their gradients afterwards.
    pub fn backward_with(&mut self, out: Var, seed: Tensor<T>) -> Result<()> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::Shape(format!(
                "seed shape {:?} differs from output {:?}",
                seed.shape(),
                self.value(out).shape()
            )));
        }
        self.nodes[out.0].grad = Some(seed);
        for i in (0..=out.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backprop(&op, &g);
            self.nodes[i].op = op;
        }
        Ok(())
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn accumulate(&mut self, i: usize, g: Tensor<T>) {
        let node = &mut self.nodes[i];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn zeros_like(&self, i: usize) -> Tensor<T> {
        Tensor::zeros(self.nodes[i].value.shape())
    }

    fn backprop(&mut self, op: &Op<T>, g: &Tensor<T>) {
        match op {
            Op::Leaf => {}
            Op::Conv { x, w, b, shape } => {
                let (x, w, b) = (*x, *w, *b);
                let n = self.nodes[x].value.shape()[0];
                let cout = self.nodes[w].value.shape()[0];
                let mut dx = self.needs(x).then(|| self.zeros_like(x));
                let mut dw = self.needs(w).then(|| self.zeros_like(w));
                let mut db = b.filter(|&b| self.needs(b)).map(|b| self.zeros_like(b));
                conv::conv2d_backward(
                    shape,
                    n,
                    cout,
                    self.nodes[x].value.data(),
                    self.nodes[w].value.data(),
                    g.data(),
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                if let Some(t) = dx {
                    self.accumulate(x, t);
                }
                if let Some(t) = dw {
                    self.accumulate(w, t);
                }
                if let (Some(b), Some(t)) = (b, db) {
                    self.accumulate(b, t);
                }
            }
            Op::ConvT { x, w, b, shape } => {
                let (x, w, b) = (*x, *w, *b);
                let (n, cin) = (self.nodes[x].value.shape()[0], self.nodes[x].value.shape()[1]);
                let mut dx = self.needs(x).then(|| self.zeros_like(x));
                let mut dw = self.needs(w).then(|| self.zeros_like(w));
                let mut db = b.filter(|&b| self.needs(b)).map(|b| self.zeros_like(b));
                conv::conv_transpose2d_backward(
                    shape,
                    n,
                    cin,
                    self.nodes[x].value.data(),
                    self.nodes[w].value.data(),
                    g.data(),
                    dx.as_mut().map(|t| t.data_mut()),
                    dw.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                if let Some(t) = dx {
                    self.accumulate(x, t);
                }
                if let Some(t) = dw {
                    self.accumulate(w, t);
                }
                if let (Some(b), Some(t)) = (b, db) {
                    self.accumulate(b, t);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (n, c, h, w) = self.nodes[x].value.dims4().expect("rank checked in forward");
                let plane = h * w;
                let count = T::of((n * plane) as f64);
                let gv = self.nodes[gamma].value.data().to_vec();
                let gd = g.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for bi in 0..n {
                    for ch in 0..c {
                        for i in (bi * c + ch) * plane..(bi * c + ch + 1) * plane {
                            dgamma[ch] = dgamma[ch] + gd[i] * xhat[i];
                            dbeta[ch] = dbeta[ch] + gd[i];
                        }
                    }
                }
                if self.needs(x) {
                    let mut dx = vec![T::zero(); gd.len()];
                    for bi in 0..n {
                        for ch in 0..c {
                            let k = gv[ch] * inv_std[ch];
                            for i in (bi * c + ch) * plane..(bi * c + ch + 1) * plane {
                                dx[i] = if *train {
                                    k * (gd[i] - (dbeta[ch] + xhat[i] * dgamma[ch]) / count)
                                } else {
                                    k * gd[i]
                                };
                            }
                        }
                    }
                    self.accumulate(x, Tensor::from_vec(&[n, c, h, w], dx).expect("same shape"));
                }
                self.accumulate(gamma, Tensor::from_vec(&[c], dgamma).expect("channel vector"));
                self.accumulate(beta, Tensor::from_vec(&[c], dbeta).expect("channel vector"));
            }
            Op::Gelu { x, cdf } => {
                let x = *x;
                if self.needs(x) {
                    let xv = self.nodes[x].value.data();
                    let data = xv
                        .iter()
                        .zip(cdf)
                        .zip(g.data())
                        .map(|((&v, &c), &gi)| gi * (c + v * normal_pdf(v)))
                        .collect();
                    let shape = self.nodes[x].value.shape().to_vec();
                    self.accumulate(x, Tensor::from_vec(&shape, data).expect("same shape"));
                }
            }
            Op::Add { a, b } => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Scale { x, s } => {
                let s = *s;
                self.accumulate(*x, g.map(|v| v * s));
            }
            Op::Pool { x, out_h, out_w } => {
                let x = *x;
                if self.needs(x) {
                    let (n, c, h, w) = self.nodes[x].value.dims4().expect("rank checked in forward");
                    let mut dx = Tensor::zeros(&[n, c, h, w]);
                    let d = dx.data_mut();
                    for p in 0..n * c {
                        for oi in 0..*out_h {
                            let (r0, r1) = pool_bin(oi, h, *out_h);
                            for oj in 0..*out_w {
                                let (c0, c1) = pool_bin(oj, w, *out_w);
                                let share = g.data()[(p * out_h + oi) * out_w + oj]
                                    / T::of(((r1 - r0) * (c1 - c0)) as f64);
                                for r in r0..r1 {
                                    for cc in c0..c1 {
                                        let k = p * h * w + r * w + cc;
                                        d[k] = d[k] + share;
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
            Op::Rotate { x, angles } => {
                let x = *x;
                if self.needs(x) {
                    let (n, c, h, w) = self.nodes[x].value.dims4().expect("rank checked in forward");
                    let plane = h * w;
                    let mut dx = Tensor::zeros(&[n, c, h, w]);
                    for bi in 0..n {
                        for ch in 0..c {
                            let r = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
                            rotate::rotate_plane_adjoint(&g.data()[r.clone()], h, angles[bi], &mut dx.data_mut()[r]);
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
            Op::Mse { pred, target } => {
                let pred = *pred;
                if self.needs(pred) {
                    let p = &self.nodes[pred].value;
                    let k = g.item() * T::of(2.0 / p.len().max(1) as f64);
                    let data = p.data().iter().zip(target.data()).map(|(&a, &b)| k * (a - b)).collect();
                    let shape = p.shape().to_vec();
                    self.accumulate(pred, Tensor::from_vec(&shape, data).expect("same shape"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_bins_match_adaptive_definition() {
        assert_eq!(pool_bin(0, 35, 8), (0, 5));
        assert_eq!(pool_bin(7, 35, 8), (30, 35));
        assert_eq!(pool_bin(1, 12, 8), (1, 3));
        for i in 0..4 {
            assert_eq!(pool_bin(i, 8, 4), (2 * i, 2 * i + 2));
        }
    }

    #[test]
    fn backward_requires_scalar_or_matching_seed() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 1, 2, 2]), true);
        let y = g.gelu(x).unwrap();
        assert!(g.backward(y).is_err());
        assert!(g.backward_with(y, Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::full(&[1, 1, 1, 1], f64::NAN), false);
        assert!(matches!(g.scale(x, 2.0), Err(Error::NonFinite { op: "scale", .. })));
        g.set_check_finite(false);
        assert!(g.scale(x, 2.0).is_ok());
    }
}
