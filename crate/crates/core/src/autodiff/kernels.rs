//! Raw numeric kernels behind the differentiable ops. No graph bookkeeping.

use super::Precision;
use crate::par;

/// Output pixels handled per im2col block. Fixed so the reduction order does
/// not depend on the thread count.
const PIXEL_BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_t: usize,
    pub pad_l: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn npix(&self) -> usize {
        self.ho * self.wo
    }

    fn blocks(&self) -> usize {
        self.npix().div_ceil(PIXEL_BLOCK)
    }

    fn block_range(&self, blk: usize) -> (usize, usize) {
        let p0 = blk * PIXEL_BLOCK;
        (p0, (p0 + PIXEL_BLOCK).min(self.npix()))
    }
}

/// Visits the receptive-field entries of output pixels `p0..p1` of one image
/// as `(cols row, slot range, plane offset of the first valid entry)` runs;
/// entries outside the padded input are skipped.
fn for_each_run(g: &ConvGeom, p0: usize, p1: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let (h, w, s) = (g.h as isize, g.w as isize, g.stride as isize);
    for ci in 0..g.cin {
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (ci * g.kh + u) * g.kw + v;
                let mut p = p0;
                while p < p1 {
                    let i = p / g.wo;
                    let j0 = p % g.wo;
                    let j1 = (g.wo).min(j0 + (p1 - p));
                    let r = i as isize * s + u as isize - g.pad_t as isize;
                    if r >= 0 && r < h {
                        // valid j satisfy 0 <= j*s + v - pad_l < w
                        let off = v as isize - g.pad_l as isize;
                        let jlo = if off >= 0 { 0 } else { ((-off) + s - 1) / s } as usize;
                        let jhi = if w - off <= 0 { 0 } else { ((w - off + s - 1) / s) as usize };
                        let (a, b) = (j0.max(jlo), j1.min(jhi));
                        if a < b {
                            let base = (ci as isize * h + r) * w + a as isize * s + off;
                            f(row, p - p0 + (a - j0), b - a, base as usize);
                        }
                    }
                    p += j1 - j0;
                }
            }
        }
    }
}

/// Element type of the convolution GEMMs. Tensors stay `f64`; with `f32`
/// only the im2col buffers, kernels and GEMM accumulation are single precision.
pub(crate) trait Real: Copy + Default + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    /// C (m×n) = A (m×k) · B (k×n) with explicit strides; C row-major, overwritten.
    ///
    /// # Safety
    /// Extents and strides must address within the pointed-to buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(m: usize, k: usize, n: usize, a: *const Self, rsa: isize, csa: isize, b: *const Self, rsb: isize, csb: isize, c: *mut Self);
    /// Runs `f` on a reusable per-thread buffer of `len` values with arbitrary contents.
    fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [Self]) -> R) -> R;
}

thread_local! {
    static SCRATCH64: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
    static SCRATCH32: std::cell::RefCell<Vec<f32>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn scratch<T: Copy + Default, R>(cell: &std::cell::RefCell<Vec<T>>, len: usize, f: impl FnOnce(&mut [T]) -> R) -> R {
    let mut buf = cell.borrow_mut();
    if buf.len() < len {
        buf.resize(len, T::default());
    }
    f(&mut buf[..len])
}

impl Real for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(m: usize, k: usize, n: usize, a: *const f64, rsa: isize, csa: isize, b: *const f64, rsb: isize, csb: isize, c: *mut f64) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 0.0, c, n as isize, 1);
    }
    fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
        SCRATCH64.with(|c| scratch(c, len, f))
    }
}

impl Real for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(m: usize, k: usize, n: usize, a: *const f32, rsa: isize, csa: isize, b: *const f32, rsb: isize, csb: isize, c: *mut f32) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 0.0, c, n as isize, 1);
    }
    fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f32]) -> R) -> R {
        SCRATCH32.with(|c| scratch(c, len, f))
    }
}

/// Fills `cols` (K × nb, row-major) with the receptive fields of output
/// pixels `p0..p1` of one image. Every slot is written.
fn im2col_block<T: Real>(x: &[T], g: &ConvGeom, p0: usize, p1: usize, cols: &mut [T]) {
    let nb = p1 - p0;
    let (h, w, s) = (g.h as isize, g.w as isize, g.stride);
    for ci in 0..g.cin {
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = (ci * g.kh + u) * g.kw + v;
                let dst = &mut cols[row * nb..(row + 1) * nb];
                let off = v as isize - g.pad_l as isize;
                let si = s as isize;
                let jlo = (if off >= 0 { 0 } else { ((-off) + si - 1) / si } as usize).min(g.wo);
                let jhi = (if w - off <= 0 { 0 } else { ((w - off + si - 1) / si) as usize }).min(g.wo);
                let mut p = p0;
                while p < p1 {
                    let i = p / g.wo;
                    let j0 = p % g.wo;
                    let j1 = g.wo.min(j0 + (p1 - p));
                    let seg = &mut dst[p - p0..p - p0 + (j1 - j0)];
                    let r = i as isize * si + u as isize - g.pad_t as isize;
                    if r < 0 || r >= h || jlo >= jhi {
                        seg.fill(T::default());
                    } else {
                        let a = j0.max(jlo).min(j1);
                        let b = j1.min(jhi).max(a);
                        seg[..a - j0].fill(T::default());
                        seg[b - j0..].fill(T::default());
                        let base = ((ci as isize * h + r) * w + a as isize * si + off) as usize;
                        let mid = &mut seg[a - j0..b - j0];
                        if s == 1 {
                            mid.copy_from_slice(&x[base..base + mid.len()]);
                        } else {
                            mid.iter_mut().enumerate().for_each(|(t, d)| *d = x[base + t * s]);
                        }
                    }
                    p += j1 - j0;
                }
            }
        }
    }
}

/// Adjoint of [`im2col_block`]: scatter-adds `cols` into `x`.
fn col2im_block<T: Real>(cols: &[T], g: &ConvGeom, p0: usize, p1: usize, x: &mut [f64]) {
    let nb = p1 - p0;
    let s = g.stride;
    for_each_run(g, p0, p1, |row, slot, len, base| {
        let src = &cols[row * nb + slot..row * nb + slot + len];
        for (t, v) in src.iter().enumerate() {
            x[base + t * s] += v.to_f64();
        }
    });
}

/// C (m×n) = A (m×k) · B (k×n) with explicit strides; overwrites C.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], rsa: usize, csa: usize, b: &[T], rsb: usize, csb: usize, c: &mut [T]) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x = T::default());
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len() && (k - 1) * rsb + (n - 1) * csb < b.len());
    // SAFETY: the asserts above bound every addressed element; C is exclusively borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            c.as_mut_ptr(),
        );
    }
}

fn lower(x: &[f64]) -> Vec<f32> {
    x.iter().map(|&v| v as f32).collect()
}

/// Cross-correlation forward pass over a batch.
pub(crate) fn conv_forward(
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    batch: usize,
    g: &ConvGeom,
    prec: Precision,
) -> Vec<f64> {
    match prec {
        Precision::F64 => conv_forward_t(x, weight, bias, batch, g),
        Precision::F32 => conv_forward_t(&lower(x), &lower(weight), bias, batch, g),
    }
}

fn conv_forward_t<T: Real>(x: &[T], weight: &[T], bias: Option<&[f64]>, batch: usize, g: &ConvGeom) -> Vec<f64> {
    let k = g.k();
    let npix = g.npix();
    let in_sz = g.cin * g.h * g.w;
    let nblk = g.blocks();
    let parts = par::map(batch * nblk, |idx| {
        let (b, blk) = (idx / nblk, idx % nblk);
        let (p0, p1) = g.block_range(blk);
        let nb = p1 - p0;
        let mut out = vec![T::default(); g.cout * nb];
        T::with_scratch(k * nb, |cols| {
            im2col_block(&x[b * in_sz..(b + 1) * in_sz], g, p0, p1, cols);
            gemm(g.cout, k, nb, weight, k, 1, cols, nb, 1, &mut out);
        });
        out
    });
    let mut y = vec![0.0; batch * g.cout * npix];
    for (idx, part) in parts.iter().enumerate() {
        let (b, blk) = (idx / nblk, idx % nblk);
        let (p0, p1) = g.block_range(blk);
        let nb = p1 - p0;
        for co in 0..g.cout {
            let dst = &mut y[(b * g.cout + co) * npix + p0..(b * g.cout + co) * npix + p1];
            let src = &part[co * nb..(co + 1) * nb];
            let bv = bias.map_or(0.0, |bv| bv[co]);
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = s.to_f64() + bv);
        }
    }
    y
}

/// dL/dW given the forward input and dL/dY.
pub(crate) fn conv_weight_grad(x: &[f64], dy: &[f64], batch: usize, g: &ConvGeom, prec: Precision) -> Vec<f64> {
    match prec {
        Precision::F64 => conv_weight_grad_t(x, dy, batch, g),
        Precision::F32 => conv_weight_grad_t(&lower(x), &lower(dy), batch, g),
    }
}

fn conv_weight_grad_t<T: Real>(x: &[T], dy: &[T], batch: usize, g: &ConvGeom) -> Vec<f64> {
    let k = g.k();
    let npix = g.npix();
    let in_sz = g.cin * g.h * g.w;
    let nblk = g.blocks();
    let parts = par::map(batch * nblk, |idx| {
        let (b, blk) = (idx / nblk, idx % nblk);
        let (p0, p1) = g.block_range(blk);
        let nb = p1 - p0;
        let mut dw = vec![T::default(); g.cout * k];
        T::with_scratch(k * nb, |cols| {
            im2col_block(&x[b * in_sz..(b + 1) * in_sz], g, p0, p1, cols);
            // dY block is (cout × nb) with row stride npix; colsᵀ is (nb × k).
            let dy_blk = &dy[b * g.cout * npix + p0..];
            gemm(g.cout, nb, k, dy_blk, npix, 1, cols, 1, nb, &mut dw);
        });
        dw
    });
    let mut dw = vec![0.0; g.cout * k];
    for part in &parts {
        dw.iter_mut().zip(part).for_each(|(a, b)| *a += b.to_f64());
    }
    dw
}

/// dL/dX: `Wᵀ · dY` per pixel block, scattered back with col2im.
pub(crate) fn conv_input_grad(dy: &[f64], weight: &[f64], batch: usize, g: &ConvGeom, prec: Precision) -> Vec<f64> {
    match prec {
        Precision::F64 => conv_input_grad_t(dy, weight, batch, g),
        Precision::F32 => conv_input_grad_t(&lower(dy), &lower(weight), batch, g),
    }
}

fn conv_input_grad_t<T: Real>(dy: &[T], weight: &[T], batch: usize, g: &ConvGeom) -> Vec<f64> {
    let k = g.k();
    let npix = g.npix();
    let in_sz = g.cin * g.h * g.w;
    let nblk = g.blocks();
    let parts = par::map(batch * nblk, |idx| {
        let (b, blk) = (idx / nblk, idx % nblk);
        let (p0, p1) = g.block_range(blk);
        let nb = p1 - p0;
        let mut cols = vec![T::default(); k * nb];
        gemm(k, g.cout, nb, weight, 1, k, &dy[b * g.cout * npix + p0..], npix, 1, &mut cols);
        cols
    });
    let mut dx = vec![0.0; batch * in_sz];
    for (idx, cols) in parts.iter().enumerate() {
        let (b, blk) = (idx / nblk, idx % nblk);
        let (p0, p1) = g.block_range(blk);
        col2im_block(cols, g, p0, p1, &mut dx[b * in_sz..(b + 1) * in_sz]);
    }
    dx
}

/// Same-size padding split for a length-`len` filter: `len / 2` before.
pub(crate) fn same_pad(len: usize) -> (usize, usize) {
    let before = len / 2;
    (before, len - 1 - before)
}

/// Depthwise separable correlation with `outer(taps, taps)`, same-size zero padding.
pub(crate) fn separable_filter(x: &[f64], planes: usize, h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let (pb, _) = same_pad(taps.len());
    let mut tmp = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let t = &mut tmp[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (k, &c) in taps.iter().enumerate() {
                    let jj = j as isize + k as isize - pb as isize;
                    if jj >= 0 && (jj as usize) < w {
                        acc += c * src[i * w + jj as usize];
                    }
                }
                t[i * w + j] = acc;
            }
        }
        let o = &mut out[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (k, &c) in taps.iter().enumerate() {
                    let ii = i as isize + k as isize - pb as isize;
                    if ii >= 0 && (ii as usize) < h {
                        acc += c * t[ii as usize * w + j];
                    }
                }
                o[i * w + j] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`separable_filter`].
pub(crate) fn separable_filter_adjoint(
    dy: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    taps: &[f64],
) -> Vec<f64> {
    let (pb, _) = same_pad(taps.len());
    let mut tmp = vec![0.0; dy.len()];
    let mut out = vec![0.0; dy.len()];
    for p in 0..planes {
        let src = &dy[p * h * w..(p + 1) * h * w];
        let t = &mut tmp[p * h * w..(p + 1) * h * w];
        // vertical adjoint
        for i in 0..h {
            for j in 0..w {
                let g = src[i * w + j];
                if g == 0.0 {
                    continue;
                }
                for (k, &c) in taps.iter().enumerate() {
                    let ii = i as isize + k as isize - pb as isize;
                    if ii >= 0 && (ii as usize) < h {
                        t[ii as usize * w + j] += c * g;
                    }
                }
            }
        }
        let o = &mut out[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let g = t[i * w + j];
                if g == 0.0 {
                    continue;
                }
                for (k, &c) in taps.iter().enumerate() {
                    let jj = j as isize + k as isize - pb as isize;
                    if jj >= 0 && (jj as usize) < w {
                        o[i * w + jj as usize] += c * g;
                    }
                }
            }
        }
    }
    out
}
