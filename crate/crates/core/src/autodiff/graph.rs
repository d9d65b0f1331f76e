use std::sync::Arc;

use super::kernels::{self, ConvGeom};
use super::{AutodiffError, ParamId, ParamStore, Precision, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that preserves extents at stride 1 (`k / 2` before, rest after).
    SameZero,
    /// Symmetric zero padding of the given size on each border.
    Explicit(usize, usize),
}

/// A fixed real-linear operator embedded in the graph. Its backward pass is
/// the adjoint with respect to the real Euclidean inner product.
pub trait LinearMap: Send + Sync {
    fn input_len(&self) -> usize;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, batch: usize },
    ZeroInsert { x: Var, upx: usize, upy: usize, gain: f64 },
    Lowpass { x: Var, taps: Vec<f64> },
    BatchNorm { x: Var, scale: Var, shift: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu(Var),
    Softplus(Var),
    Scale(Var, f64),
    Concat(Var, Var),
    Mae { pred: Var, target: Var, mask: Option<Vec<f64>>, count: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    DivByScalar(Var, Var),
    MaxOne(Var),
    Sum(Var),
    SumSquares(Var),
    RowAbsSumMax { x: Var, rows: usize, argmax: usize },
    TotalVariation { x: Var, planes: usize, h: usize, w: usize },
    Linear { x: Var, map: Arc<dyn LinearMap> },
}

struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
}

/// A single-use tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backpropagation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    precision: Precision,
}

fn shape_err(op: &str, detail: impl std::fmt::Display) -> AutodiffError {
    AutodiffError::Shape(format!("{op}: {detail}"))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose convolutions run their GEMMs at `precision`.
    pub fn with_precision(precision: Precision) -> Self {
        Self { nodes: Vec::new(), precision }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant leaf; receives no gradient outside this graph.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a stored parameter as a leaf whose gradient flows back to the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).value.clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var, AutodiffError> {
        let (batch, cin, h, wd) = self.value(x).dims4().map_err(|e| shape_err("conv2d input", e))?;
        let (cout, wcin, kh, kw) = self.value(w).dims4().map_err(|e| shape_err("conv2d weight", e))?;
        if wcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("input channels {cin} do not match weight in-channels {wcin}"),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err("conv2d", format!("kernel extents must be odd, got {kh}x{kw}")));
        }
        if !(1..=2).contains(&stride) {
            return Err(AutodiffError::Invalid(format!("conv2d stride must be 1 or 2, got {stride}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(shape_err(
                    "conv2d",
                    format!("bias shape {:?} does not match out-channels {cout}", self.shape(b)),
                ));
            }
        }
        let (pad_t, pad_l) = match padding {
            Padding::SameZero => (kh / 2, kw / 2),
            Padding::Explicit(ph, pw) => (ph, pw),
        };
        if h + 2 * pad_t < kh || wd + 2 * pad_l < kw {
            return Err(shape_err("conv2d", format!("height/width {h}x{wd} smaller than kernel {kh}x{kw}")));
        }
        let ho = (h + 2 * pad_t - kh) / stride + 1;
        let wo = (wd + 2 * pad_l - kw) / stride + 1;
        let geom = ConvGeom { cin, h, w: wd, cout, kh, kw, stride, pad_t, pad_l, ho, wo };
        let out = kernels::conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            batch,
            &geom,
            self.precision,
        );
        let t = Tensor::new(vec![batch, cout, ho, wo], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, geom, batch }))
    }

    /// Interleaves zeros: output `(i·upy, j·upx)` holds `gain·input(i, j)`.
    pub fn zero_insert_upsample(&mut self, x: Var, upx: usize, upy: usize, gain: f64) -> Result<Var, AutodiffError> {
        if upx == 0 || upy == 0 {
            return Err(AutodiffError::Invalid(format!(
                "upsampling factors must be positive, got upx={upx}, upy={upy}"
            )));
        }
        let (b, c, h, w) = self.value(x).dims4()?;
        let (ho, wo) = (h * upy, w * upx);
        let src = self.value(x).data();
        let mut out = vec![0.0; b * c * ho * wo];
        for p in 0..b * c {
            for i in 0..h {
                for j in 0..w {
                    out[p * ho * wo + i * upy * wo + j * upx] = gain * src[p * h * w + i * w + j];
                }
            }
        }
        let t = Tensor::new(vec![b, c, ho, wo], out)?;
        Ok(self.push(t, Op::ZeroInsert { x, upx, upy, gain }))
    }

    /// Depthwise correlation with the frozen kernel `outer(taps, taps)`.
    pub fn fixed_lowpass_conv(&mut self, x: Var, taps: &[f64]) -> Result<Var, AutodiffError> {
        if taps.is_empty() {
            return Err(AutodiffError::Invalid("low-pass taps must be non-empty".into()));
        }
        let (b, c, h, w) = self.value(x).dims4()?;
        let out = kernels::separable_filter(self.value(x).data(), b * c, h, w, taps);
        let t = Tensor::new(vec![b, c, h, w], out)?;
        Ok(self.push(t, Op::Lowpass { x, taps: taps.to_vec() }))
    }

    /// Training-mode batch normalization with per-channel affine parameters.
    pub fn batchnorm2d(&mut self, x: Var, scale: Var, shift: Var, eps: f64) -> Result<Var, AutodiffError> {
        if eps <= 0.0 {
            return Err(AutodiffError::Invalid(format!("batchnorm eps must be positive, got {eps}")));
        }
        let (b, c, h, w) = self.value(x).dims4()?;
        if self.shape(scale) != [c] || self.shape(shift) != [c] {
            return Err(shape_err(
                "batchnorm2d",
                format!(
                    "channel count {c} does not match scale {:?} / shift {:?}",
                    self.shape(scale),
                    self.shape(shift)
                ),
            ));
        }
        let hw = h * w;
        let m = (b * hw) as f64;
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(scale).data(), self.value(shift).data());
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let idx = |bi: usize| (bi * c + ch) * hw;
            let mut mean = 0.0;
            for bi in 0..b {
                mean += xs[idx(bi)..idx(bi) + hw].iter().sum::<f64>();
            }
            mean /= m;
            let mut var = 0.0;
            for bi in 0..b {
                var += xs[idx(bi)..idx(bi) + hw].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            var /= m;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for bi in 0..b {
                for k in idx(bi)..idx(bi) + hw {
                    let xh = (xs[k] - mean) * is;
                    xhat[k] = xh;
                    out[k] = gs[ch] * xh + bs[ch];
                }
            }
        }
        let t = Tensor::new(vec![b, c, h, w], out)?;
        Ok(self.push(t, Op::BatchNorm { x, scale, shift, xhat, inv_std }))
    }

    fn map_unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| f(a)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map_unary(x, |a| a.max(0.0), Op::Relu(x))
    }

    /// `ln(1 + exp(x))`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.map_unary(x, softplus, Op::Softplus(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map_unary(x, |a| c * a, Op::Scale(x, c))
    }

    /// Elementwise `max(1, x)`.
    pub fn max_one(&mut self, x: Var) -> Var {
        self.map_unary(x, |a| a.max(1.0), Op::MaxOne(x))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ba, ca, ha, wa) = self.value(a).dims4()?;
        let (bb, cb, hb, wb) = self.value(b).dims4()?;
        if ba != bb || ha != hb || wa != wb {
            return Err(shape_err(
                "concat_channels",
                format!("batch/spatial extents differ: ({ba},{ha},{wa}) vs ({bb},{hb},{wb})"),
            ));
        }
        let hw = ha * wa;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for bi in 0..ba {
            out.extend_from_slice(&da[bi * ca * hw..(bi + 1) * ca * hw]);
            out.extend_from_slice(&db[bi * cb * hw..(bi + 1) * cb * hw]);
        }
        let t = Tensor::new(vec![ba, ca + cb, ha, wa], out)?;
        Ok(self.push(t, Op::Concat(a, b)))
    }

    /// Mean absolute error over entries where `mask` is nonzero (all entries without a mask).
    pub fn mae_loss(&mut self, pred: Var, target: Var, mask: Option<&[f64]>) -> Result<Var, AutodiffError> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err(
                "mae_loss",
                format!("pred {:?} vs target {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let n = self.value(pred).len();
        if let Some(m) = mask {
            if m.len() != n {
                return Err(shape_err("mae_loss", format!("mask length {} vs {n} entries", m.len())));
            }
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let (sum, count) = match mask {
            Some(m) => p
                .iter()
                .zip(t)
                .zip(m)
                .filter(|(_, &mk)| mk != 0.0)
                .fold((0.0, 0usize), |(s, c), ((a, b), _)| (s + (a - b).abs(), c + 1)),
            None => (p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum(), n),
        };
        if count == 0 {
            return Err(AutodiffError::EmptySelection);
        }
        let mask = mask.map(|m| m.to_vec());
        Ok(self.push(Tensor::scalar(sum / count as f64), Op::Mae { pred, target, mask, count }))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(shape_err(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let t = self.binary(a, b, "div", |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b)))
    }

    /// Divides every entry of `x` by the single-element tensor `s`.
    pub fn div_by_scalar(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        if self.value(s).len() != 1 {
            return Err(shape_err("div_by_scalar", format!("divisor has shape {:?}", self.shape(s))));
        }
        let d = self.value(s).item();
        let v = self.value(x);
        let t = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a / d).collect())?;
        Ok(self.push(t, Op::DivByScalar(x, s)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|a| a * a).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    /// ℓ∞ operator norm of `x` viewed as a `rows × (len / rows)` matrix:
    /// the largest absolute row sum.
    pub fn matrix_inf_norm(&mut self, x: Var, rows: usize) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        if rows == 0 || v.is_empty() || !v.len().is_multiple_of(rows) {
            return Err(shape_err(
                "matrix_inf_norm",
                format!("{} entries cannot form {rows} rows", v.len()),
            ));
        }
        let cols = v.len() / rows;
        let (mut best, mut argmax) = (f64::NEG_INFINITY, 0);
        for r in 0..rows {
            let s: f64 = v.data()[r * cols..(r + 1) * cols].iter().map(|a| a.abs()).sum();
            if s > best {
                best = s;
                argmax = r;
            }
        }
        Ok(self.push(Tensor::scalar(best), Op::RowAbsSumMax { x, rows, argmax }))
    }

    /// Anisotropic total variation summed over all planes of a
    /// `[.., H, W]` tensor (trailing two axes are spatial).
    pub fn total_variation(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(shape_err("total_variation", format!("needs at least 2 axes, got {shape:?}")));
        }
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        if h < 2 || w < 2 {
            return Err(shape_err("total_variation", format!("spatial extent {h}x{w} is degenerate")));
        }
        let planes = shape[..shape.len() - 2].iter().product();
        let d = self.value(x).data();
        let mut s = 0.0;
        for p in 0..planes {
            let img = &d[p * h * w..(p + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    if i + 1 < h {
                        s += (img[(i + 1) * w + j] - img[i * w + j]).abs();
                    }
                    if j + 1 < w {
                        s += (img[i * w + j + 1] - img[i * w + j]).abs();
                    }
                }
            }
        }
        Ok(self.push(Tensor::scalar(s), Op::TotalVariation { x, planes, h, w }))
    }

    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap>) -> Result<Var, AutodiffError> {
        if self.value(x).len() != map.input_len() {
            return Err(shape_err(
                "linear",
                format!("input has {} entries, operator expects {}", self.value(x).len(), map.input_len()),
            ));
        }
        let out = map.apply(self.value(x).data());
        let t = Tensor::new(map.output_shape(), out)?;
        Ok(self.push(t, Op::Linear { x, map }))
    }

    /// Backpropagates from a scalar `loss` and accumulates into the store's
    /// gradient buffers. Parameters bound to this graph but unreachable from
    /// `loss` receive an explicit zero gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), AutodiffError> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(grads) {
            if let Some(pid) = node.param {
                match g {
                    Some(g) => store.accumulate(pid, &g),
                    None => store.accumulate(pid, &vec![0.0; node.value.len()]),
                }
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to every node (`None` where unreachable).
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>, AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, contrib: Vec<f64>| match grads[v.0].as_mut() {
            Some(e) => e.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
            None => grads[v.0] = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, batch } => {
                if !self.is_constant_leaf(*x) {
                    acc(*x, kernels::conv_input_grad(g, self.value(*w).data(), *batch, geom, self.precision));
                }
                acc(*w, kernels::conv_weight_grad(self.value(*x).data(), g, *batch, geom, self.precision));
                if let Some(b) = b {
                    let npix = geom.ho * geom.wo;
                    let mut db = vec![0.0; geom.cout];
                    for bi in 0..*batch {
                        for (co, d) in db.iter_mut().enumerate() {
                            let off = (bi * geom.cout + co) * npix;
                            *d += g[off..off + npix].iter().sum::<f64>();
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::ZeroInsert { x, upx, upy, gain } => {
                let (b, c, h, w) = self.value(*x).dims4().expect("4-D");
                let wo = w * upx;
                let ho = h * upy;
                let mut dx = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for i in 0..h {
                        for j in 0..w {
                            dx[p * h * w + i * w + j] = gain * g[p * ho * wo + i * upy * wo + j * upx];
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Lowpass { x, taps } => {
                let (b, c, h, w) = self.value(*x).dims4().expect("4-D");
                acc(*x, kernels::separable_filter_adjoint(g, b * c, h, w, taps));
            }
            Op::BatchNorm { x, scale, shift, xhat, inv_std } => {
                let (b, c, h, w) = self.value(*x).dims4().expect("4-D");
                let hw = h * w;
                let m = (b * hw) as f64;
                let gs = self.value(*scale).data();
                let mut dx = vec![0.0; xhat.len()];
                let mut dscale = vec![0.0; c];
                let mut dshift = vec![0.0; c];
                for ch in 0..c {
                    let (mut sum_g, mut sum_gx) = (0.0, 0.0);
                    for bi in 0..b {
                        let off = (bi * c + ch) * hw;
                        for k in off..off + hw {
                            sum_g += g[k];
                            sum_gx += g[k] * xhat[k];
                        }
                    }
                    dscale[ch] = sum_gx;
                    dshift[ch] = sum_g;
                    let coef = gs[ch] * inv_std[ch] / m;
                    for bi in 0..b {
                        let off = (bi * c + ch) * hw;
                        for k in off..off + hw {
                            dx[k] = coef * (m * g[k] - sum_g - xhat[k] * sum_gx);
                        }
                    }
                }
                acc(*x, dx);
                acc(*scale, dscale);
                acc(*shift, dshift);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                acc(*x, g.iter().zip(xv).map(|(g, &a)| if a > 0.0 { *g } else { 0.0 }).collect());
            }
            Op::Softplus(x) => {
                let xv = self.value(*x).data();
                acc(*x, g.iter().zip(xv).map(|(g, &a)| g * sigmoid(a)).collect());
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|g| c * g).collect()),
            Op::MaxOne(x) => {
                let xv = self.value(*x).data();
                acc(*x, g.iter().zip(xv).map(|(g, &a)| if a > 1.0 { *g } else { 0.0 }).collect());
            }
            Op::Concat(a, b) => {
                let (ba, ca, h, w) = self.value(*a).dims4().expect("4-D");
                let cb = self.value(*b).dims4().expect("4-D").1;
                let hw = h * w;
                let (mut da, mut db) = (Vec::with_capacity(ba * ca * hw), Vec::with_capacity(ba * cb * hw));
                for bi in 0..ba {
                    let off = bi * (ca + cb) * hw;
                    da.extend_from_slice(&g[off..off + ca * hw]);
                    db.extend_from_slice(&g[off + ca * hw..off + (ca + cb) * hw]);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Mae { pred, target, mask, count } => {
                let scale = g[0] / *count as f64;
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let grad: Vec<f64> = p
                    .iter()
                    .zip(t)
                    .enumerate()
                    .map(|(i, (a, b))| match mask {
                        Some(m) if m[i] == 0.0 => 0.0,
                        _ => scale * sign(a - b),
                    })
                    .collect();
                if !self.is_constant_leaf(*target) {
                    acc(*target, grad.iter().map(|v| -v).collect());
                }
                acc(*pred, grad);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                acc(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(vb).map(|(g, y)| g / y).collect());
                acc(*b, g.iter().zip(va).zip(vb).map(|((g, x), y)| -g * x / (y * y)).collect());
            }
            Op::DivByScalar(x, s) => {
                let d = self.value(*s).item();
                let xv = self.value(*x).data();
                acc(*x, g.iter().map(|g| g / d).collect());
                let ds: f64 = g.iter().zip(xv).map(|(g, a)| g * a).sum::<f64>() * (-1.0 / (d * d));
                acc(*s, vec![ds]);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).len()]),
            Op::SumSquares(x) => acc(*x, self.value(*x).data().iter().map(|a| 2.0 * a * g[0]).collect()),
            Op::RowAbsSumMax { x, rows, argmax } => {
                let xv = self.value(*x).data();
                let cols = xv.len() / rows;
                let mut dx = vec![0.0; xv.len()];
                for k in argmax * cols..(argmax + 1) * cols {
                    dx[k] = g[0] * sign(xv[k]);
                }
                acc(*x, dx);
            }
            Op::TotalVariation { x, planes, h, w } => {
                let (h, w) = (*h, *w);
                let d = self.value(*x).data();
                let mut dx = vec![0.0; d.len()];
                for p in 0..*planes {
                    let off = p * h * w;
                    for i in 0..h {
                        for j in 0..w {
                            let k = off + i * w + j;
                            if i + 1 < h {
                                let s = g[0] * sign(d[k + w] - d[k]);
                                dx[k + w] += s;
                                dx[k] -= s;
                            }
                            if j + 1 < w {
                                let s = g[0] * sign(d[k + 1] - d[k]);
                                dx[k + 1] += s;
                                dx[k] -= s;
                            }
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Linear { x, map } => acc(*x, map.adjoint(g)),
        }
    }

    fn is_constant_leaf(&self, v: Var) -> bool {
        let n = &self.nodes[v.0];
        matches!(n.op, Op::Leaf) && n.param.is_none()
    }
}
