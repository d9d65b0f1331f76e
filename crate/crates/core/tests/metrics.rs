use std::f64::consts::PI;

use priorforge::arch::{BILINEAR_TAPS, L100_TAPS, NEAREST_TAPS};
use priorforge::metrics::{
    filter_frequency_response, frequency_grid, masked_region_psnr, psnr, ssim, MetricError,
};
use priorforge::mri::{dft2_centered, idft2_centered, ComplexImage, SamplingMask};
use priorforge::rng::SplitMix64;
use proptest::prelude::*;

#[path = "common/ssim_oracle.rs"]
mod ssim_oracle;
use ssim_oracle::ssim_oracle;

fn random_plane(n: usize, seed: u64) -> Vec<f64> {
    let mut r = SplitMix64::new(seed);
    (0..n).map(|_| r.next_f64()).collect()
}

#[test]
fn psnr_examples() {
    let r = vec![1.0, 0.0, 0.5, 0.25];
    assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
    let x: Vec<f64> = r.iter().map(|v| v + 0.1).collect();
    assert!((psnr(&x, &r).unwrap() - 20.0).abs() < 1e-9);
    assert!(matches!(psnr(&r, &r[..3]), Err(MetricError::Extent(4, 3))));
}

#[test]
fn ssim_examples() {
    let r = random_plane(24 * 24, 1);
    assert!((ssim(&r, &r, 24, 24).unwrap() - 1.0).abs() < 1e-12);
    // checkerboard: unit range, Gaussian-window means vanish to ~1e-5
    let board: Vec<f64> = (0..24 * 24).map(|k| if (k / 24 + k % 24) % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let neg: Vec<f64> = board.iter().map(|v| -v).collect();
    let s = ssim(&neg, &board, 24, 24).unwrap();
    assert!(s < -0.99, "{s}");
    assert!((s - ssim_oracle(&neg, &board, 24, 24)).abs() < 1e-6);
    assert!(matches!(ssim(&r[..100], &r[..100], 10, 10), Err(MetricError::TooSmall { .. })));
}

#[test]
fn ssim_matches_direct_oracle() {
    for seed in 0..5 {
        let (h, w) = (20 + seed as usize, 17 + 2 * seed as usize);
        let y = random_plane(h * w, seed);
        let noise = random_plane(h * w, seed + 100);
        let x: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + 0.3 * (b - 0.5)).collect();
        let got = ssim(&x, &y, h, w).unwrap();
        let want = ssim_oracle(&x, &y, h, w);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

fn test_image(n: usize, seed: u64) -> ComplexImage {
    let re = random_plane(n * n, seed);
    let im = random_plane(n * n, seed + 1);
    ComplexImage::from_parts(n, n, re, im).unwrap()
}

#[test]
fn masked_psnr_examples() {
    let n = 16;
    let r = test_image(n, 3);
    let mut cols = vec![false; n];
    for j in [2, 7, 8, 9, 13] {
        cols[j] = true;
    }
    let mask = SamplingMask::from_columns(n, cols.clone());
    assert_eq!(masked_region_psnr(&r, &r, &mask).unwrap(), f64::INFINITY);
    assert!(matches!(
        masked_region_psnr(&r, &r, &SamplingMask::full(n, n)),
        Err(MetricError::NoMaskedRegion)
    ));

    // an error living only on acquired columns leaves the masked region untouched
    let mut spec = dft2_centered(&ComplexImage::zeros(n, n));
    for i in 0..n {
        for j in 0..n {
            if cols[j] {
                spec.re_mut()[i * n + j] = (i + j) as f64 * 0.01;
                spec.im_mut()[i * n + j] = 0.02;
            }
        }
    }
    let err = idft2_centered(&spec);
    let re: Vec<f64> = r.re().iter().zip(err.re()).map(|(a, b)| a + b).collect();
    let im: Vec<f64> = r.im().iter().zip(err.im()).map(|(a, b)| a + b).collect();
    let x = ComplexImage::from_parts(n, n, re, im).unwrap();
    let p = masked_region_psnr(&x, &r, &mask).unwrap();
    assert!(p > 250.0, "{p}");

    // same error on the complement of the mask is measured in full
    let comp = mask.complement();
    let full_err: f64 = err.energy() / (n * n) as f64;
    let range = r.magnitude().iter().cloned().fold(f64::MIN, f64::max);
    let q = masked_region_psnr(&x, &r, &comp).unwrap();
    assert!((q - 10.0 * (range * range / full_err).log10()).abs() < 1e-9);
}

#[test]
#[allow(clippy::approx_constant)]
fn frequency_response_examples() {
    let grid = [0.0, PI / 2.0, PI];
    let nn = filter_frequency_response(&NEAREST_TAPS, &grid);
    let bl = filter_frequency_response(&BILINEAR_TAPS, &grid);
    let l = filter_frequency_response(&L100_TAPS, &grid);
    assert!((nn[0] - 1.0).abs() < 1e-15 && (bl[0] - 1.0).abs() < 1e-15 && (l[0] - 1.0).abs() < 1e-5);
    assert!(bl[2].abs() < 1e-15);
    assert!((nn[1] - 0.70711).abs() < 5e-6);
    assert!((bl[1] - 0.5).abs() < 1e-15);
}

#[test]
fn attenuation_ordering_on_512_point_grid() {
    let grid = frequency_grid(512);
    assert_eq!(grid.len(), 512);
    let nn = filter_frequency_response(&NEAREST_TAPS, &grid);
    let bl = filter_frequency_response(&BILINEAR_TAPS, &grid);
    let l = filter_frequency_response(&L100_TAPS, &grid);
    for i in 1..511 {
        assert!(bl[i] <= nn[i] + 1e-15, "ω={}", grid[i]);
        if grid[i] >= 0.35 * PI {
            assert!(l[i] <= bl[i], "ω={}", grid[i]);
        }
    }
}

proptest! {
    #[test]
    fn psnr_permutation_invariant(seed in 0u64..1000, shift in 1usize..63) {
        let r = random_plane(64, seed);
        let x = random_plane(64, seed + 1);
        let perm = |v: &[f64]| -> Vec<f64> { (0..64).map(|i| v[(i * 5 + shift) % 64]).collect() };
        let a = psnr(&x, &r).unwrap();
        let b = psnr(&perm(&x), &perm(&r)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ssim_bounded(seed in 0u64..1000, scale in -3.0f64..3.0) {
        let r = random_plane(16 * 16, seed);
        let x: Vec<f64> = random_plane(16 * 16, seed + 7).iter().map(|v| v * scale).collect();
        let s = ssim(&x, &r, 16, 16).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
