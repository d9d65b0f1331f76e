use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::ComplexImage;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// 1-D transform along every line of length `n` with stride `stride`,
/// starting at offsets `starts`. Applies the centered index convention:
/// input is ifftshifted, output fftshifted.
fn transform_lines(buf: &mut [Complex64], n: usize, lines: usize, line_start: impl Fn(usize) -> usize, stride: usize, dir: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir));
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let c = n / 2;
    for l in 0..lines {
        let s = line_start(l);
        // ifftshift: centered index c moves to 0.
        for (k, slot) in line.iter_mut().enumerate() {
            *slot = buf[s + ((k + c) % n) * stride];
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        // fftshift: index 0 moves to c.
        for (k, v) in line.iter().enumerate() {
            buf[s + ((k + c) % n) * stride] = *v;
        }
    }
}

fn transform(img: &ComplexImage, dir: FftDirection) -> ComplexImage {
    let (h, w) = (img.height(), img.width());
    let mut buf: Vec<Complex64> = img.re().iter().zip(img.im()).map(|(&r, &i)| Complex64::new(r, i)).collect();
    transform_lines(&mut buf, w, h, |row| row * w, 1, dir);
    transform_lines(&mut buf, h, w, |col| col, w, dir);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let re = buf.iter().map(|z| z.re * scale).collect();
    let im = buf.iter().map(|z| z.im * scale).collect();
    ComplexImage::from_parts(h, w, re, im).expect("extents preserved")
}

/// Orthonormal 2-D DFT with the DC coefficient at `(h / 2, w / 2)`.
pub fn dft2_centered(img: &ComplexImage) -> ComplexImage {
    transform(img, FftDirection::Forward)
}

/// Inverse of [`dft2_centered`].
pub fn idft2_centered(img: &ComplexImage) -> ComplexImage {
    transform(img, FftDirection::Inverse)
}
