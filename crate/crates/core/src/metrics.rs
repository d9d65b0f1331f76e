//! Image-quality metrics and filter frequency responses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mri::{dft2_centered, ComplexImage, SamplingMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("extent mismatch: {0} vs {1} values")]
    Extent(usize, usize),
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    TooSmall { height: usize, width: usize, window: usize },
    #[error("no masked region: every column is acquired")]
    NoMaskedRegion,
    #[error("empty image")]
    Empty,
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub masked_psnr: Option<f64>,
    pub data_range: f64,
}

fn check(x: &[f64], reference: &[f64]) -> Result<(), MetricError> {
    if x.len() != reference.len() {
        return Err(MetricError::Extent(x.len(), reference.len()));
    }
    if x.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn data_range(reference: &[f64]) -> f64 {
    reference.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn psnr_from_mse(range: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// `10 log10(max(ref)² / MSE)`; `+∞` when the images are identical.
pub fn psnr(x: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    check(x, reference)?;
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(psnr_from_mse(data_range(reference), mse))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(a: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for i in 0..h {
        for j in 0..wo {
            rows[i * wo + j] = taps.iter().enumerate().map(|(t, c)| c * a[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for i in 0..ho {
        for j in 0..wo {
            out[i * wo + j] = taps.iter().enumerate().map(|(t, c)| c * rows[(i + t) * wo + j]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully contained 11×11 Gaussian (σ = 1.5) windows,
/// with `K1 = 0.01`, `K2 = 0.03` and data range `max(ref)`.
pub fn ssim(x: &[f64], reference: &[f64], height: usize, width: usize) -> Result<f64, MetricError> {
    check(x, reference)?;
    if x.len() != height * width {
        return Err(MetricError::Extent(x.len(), height * width));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(MetricError::TooSmall { height, width, window: SSIM_WINDOW });
    }
    let taps = gaussian_window();
    let range = data_range(reference);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(reference).map(|(&a, &b)| f(a, b)).collect() };
    let mx = filter_valid(x, height, width, &taps);
    let my = filter_valid(reference, height, width, &taps);
    let mxx = filter_valid(&prod(&|a, _| a * a), height, width, &taps);
    let myy = filter_valid(&prod(&|_, b| b * b), height, width, &taps);
    let mxy = filter_valid(&prod(&|a, b| a * b), height, width, &taps);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// PSNR of the error `x − ref` restricted to the un-acquired k-space columns.
/// By Parseval the image-domain MSE of that restriction equals the spectral
/// energy on those columns divided by the pixel count. The data range is the
/// maximum magnitude of `ref`.
pub fn masked_region_psnr(x: &ComplexImage, reference: &ComplexImage, mask: &SamplingMask) -> Result<f64, MetricError> {
    if !x.same_extent(reference) {
        return Err(MetricError::Extent(x.len(), reference.len()));
    }
    if x.width() != mask.width() {
        return Err(MetricError::Extent(x.width(), mask.width()));
    }
    if mask.is_full() {
        return Err(MetricError::NoMaskedRegion);
    }
    if x.is_empty() {
        return Err(MetricError::Empty);
    }
    let (h, w) = (x.height(), x.width());
    let re: Vec<f64> = x.re().iter().zip(reference.re()).map(|(a, b)| a - b).collect();
    let im: Vec<f64> = x.im().iter().zip(reference.im()).map(|(a, b)| a - b).collect();
    let spec = dft2_centered(&ComplexImage::from_parts(h, w, re, im).expect("same extent"));
    let cols = mask.columns();
    let mut energy = 0.0;
    for i in 0..h {
        for j in (0..w).filter(|&j| !cols[j]) {
            let k = i * w + j;
            energy += spec.re()[k].powi(2) + spec.im()[k].powi(2);
        }
    }
    let range = data_range(&reference.magnitude());
    Ok(psnr_from_mse(range, energy / (h * w) as f64))
}

/// `|Σ_n taps[n] e^{-iωn}|` at each ω.
pub fn filter_frequency_response(taps: &[f64], omegas: &[f64]) -> Vec<f64> {
    assert!(!taps.is_empty(), "taps must be non-empty");
    omegas
        .iter()
        .map(|&om| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &t) in taps.iter().enumerate() {
                re += t * (om * n as f64).cos();
                im -= t * (om * n as f64).sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// `n` equally spaced frequencies covering `[0, π]`.
pub fn frequency_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64).collect(),
    }
}

/// PSNR and SSIM of magnitude images, plus the masked-region PSNR of the
/// complex images when the mask leaves columns un-acquired.
pub fn evaluate(x: &ComplexImage, reference: &ComplexImage, mask: Option<&SamplingMask>) -> Result<MetricReport, MetricError> {
    let (xm, rm) = (x.magnitude(), reference.magnitude());
    let masked_psnr = match mask {
        Some(m) if !m.is_full() => Some(masked_region_psnr(x, reference, m)?),
        _ => None,
    };
    Ok(MetricReport {
        psnr: psnr(&xm, &rm)?,
        ssim: ssim(&xm, &rm, x.height(), x.width())?,
        masked_psnr,
        data_range: data_range(&rm),
    })
}
