use super::phantom::normalized_coords;
use super::DataError;
use crate::mri::{CoilSensitivities, ComplexImage};

/// Gaussian width of each raw coil profile, in normalized units.
const BUMP_WIDTH: f64 = 0.8;
/// Distance of coil centers from the image center.
const COIL_RADIUS: f64 = 1.2;

/// `c` smooth complex profiles centered at equally spaced angles around the
/// border (starting at 45°), pixelwise normalized to `Σ|S_i|² = 1`.
pub fn generate_csm(coils: usize, size: usize) -> Result<CoilSensitivities, DataError> {
    if coils == 0 {
        return Err(DataError::Invalid("coil count must be at least 1".into()));
    }
    if size == 0 {
        return Err(DataError::Invalid("CSM size must be positive".into()));
    }
    let n = size;
    let mut raw: Vec<ComplexImage> = Vec::with_capacity(coils);
    for c in 0..coils {
        let theta = std::f64::consts::FRAC_PI_4 + 2.0 * std::f64::consts::PI * c as f64 / coils as f64;
        let (cx, cy) = (COIL_RADIUS * theta.cos(), COIL_RADIUS * theta.sin());
        let mut img = ComplexImage::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = normalized_coords(i, j, n);
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                let mag = (-d2 / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp();
                let phase = std::f64::consts::PI * c as f64 / coils as f64 + 0.5 * (x * theta.cos() + y * theta.sin());
                img.re_mut()[i * n + j] = mag * phase.cos();
                img.im_mut()[i * n + j] = mag * phase.sin();
            }
        }
        raw.push(img);
    }
    let norm: Vec<f64> = CoilSensitivities::new(raw.clone())
        .expect("equal extents")
        .sum_of_squares()
        .into_iter()
        .map(f64::sqrt)
        .collect();
    for img in &mut raw {
        for (k, s) in norm.iter().enumerate() {
            img.re_mut()[k] /= s;
            img.im_mut()[k] /= s;
        }
    }
    Ok(CoilSensitivities::new(raw).expect("equal extents"))
}
