use serde::{Deserialize, Serialize};

use super::DataError;
use crate::mri::ComplexImage;
use crate::rng::SplitMix64;

/// Ellipse in normalized coordinates: the image spans `[-1, 1)` on both axes
/// with the origin on pixel `(N/2, N/2)`; `x` grows with the column index
/// and `y` with the row index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Rotation in degrees, counter-clockwise.
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.to_radians().sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    pub ellipses: Vec<Ellipse>,
    pub seed: u64,
}

/// Modified Shepp-Logan head: ten ellipses with intensities chosen so the
/// superposition stays within `[0, 1]`.
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    #[rustfmt::skip]
    let table: [(f64, f64, f64, f64, f64, f64); 10] = [
        // intensity, semi_x, semi_y, center_x, center_y, angle
        ( 1.0, 0.69,   0.92,   0.0,   0.0,    0.0),
        (-0.8, 0.6624, 0.8740, 0.0,  -0.0184, 0.0),
        (-0.2, 0.11,   0.31,   0.22,  0.0,  -18.0),
        (-0.2, 0.16,   0.41,  -0.22,  0.0,   18.0),
        ( 0.1, 0.21,   0.25,   0.0,   0.35,   0.0),
        ( 0.1, 0.046,  0.046,  0.0,   0.1,    0.0),
        ( 0.1, 0.046,  0.046,  0.0,  -0.1,    0.0),
        ( 0.1, 0.046,  0.023, -0.08, -0.605,  0.0),
        ( 0.1, 0.023,  0.023,  0.0,  -0.606,  0.0),
        ( 0.1, 0.023,  0.046,  0.06, -0.605,  0.0),
    ];
    table
        .iter()
        .map(|&(intensity, semi_x, semi_y, center_x, center_y, angle)| Ellipse {
            center_x,
            center_y,
            semi_x,
            semi_y,
            angle,
            intensity,
        })
        .collect()
}

impl PhantomSpec {
    pub fn shepp_logan(size: usize, seed: u64) -> Self {
        Self { size, ellipses: shepp_logan_ellipses(), seed }
    }
}

/// Pixel `(i, j)` in normalized coordinates.
pub(crate) fn normalized_coords(i: usize, j: usize, n: usize) -> (f64, f64) {
    let half = (n / 2) as f64;
    ((j as f64 - half) / half, (i as f64 - half) / half)
}

/// Rasterizes the ellipse superposition and applies a smooth seeded phase
/// `φ(x, y) = a₀ + a₁x + a₂y + a₃xy + a₄x² + a₅y²`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<ComplexImage, DataError> {
    let n = spec.size;
    if n < 16 {
        return Err(DataError::Invalid(format!("phantom size must be at least 16, got {n}")));
    }
    if let Some(k) = spec.ellipses.iter().position(|e| e.semi_x <= 0.0 || e.semi_y <= 0.0) {
        return Err(DataError::Invalid(format!("ellipse {k} has a non-positive semi-axis")));
    }
    let mut rng = SplitMix64::derive(spec.seed, 0x5048_4153_45);
    let coeffs: Vec<f64> = (0..6).map(|_| rng.uniform(-0.4, 0.4)).collect();
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = normalized_coords(i, j, n);
            let mag: f64 = spec.ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
            let phase = coeffs[0]
                + coeffs[1] * x
                + coeffs[2] * y
                + coeffs[3] * x * y
                + coeffs[4] * x * x
                + coeffs[5] * y * y;
            re[i * n + j] = mag * phase.cos();
            im[i * n + j] = mag * phase.sin();
        }
    }
    Ok(ComplexImage::from_parts(n, n, re, im).expect("n×n planes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_is_zero() {
        let img = generate_phantom(&PhantomSpec { size: 32, ellipses: vec![], seed: 0 }).unwrap();
        assert!(img.magnitude().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn centered_disc_is_indicator() {
        let n = 32;
        let disc = Ellipse { center_x: 0.0, center_y: 0.0, semi_x: 0.5, semi_y: 0.5, angle: 0.0, intensity: 1.0 };
        let img = generate_phantom(&PhantomSpec { size: n, ellipses: vec![disc], seed: 4 }).unwrap();
        let mag = img.magnitude();
        for i in 0..n {
            for j in 0..n {
                let r = ((i as f64 - 16.0).powi(2) + (j as f64 - 16.0).powi(2)).sqrt();
                let m = mag[i * n + j];
                if r < 7.5 {
                    assert!((m - 1.0).abs() < 1e-12);
                } else if r > 8.5 {
                    assert_eq!(m, 0.0);
                }
            }
        }
    }

    #[test]
    fn head_phantom_is_bounded_and_deterministic() {
        let a = generate_phantom(&PhantomSpec::shepp_logan(64, 9)).unwrap();
        let b = generate_phantom(&PhantomSpec::shepp_logan(64, 9)).unwrap();
        assert_eq!(a, b);
        let max = a.magnitude().into_iter().fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-12 && max > 0.5);
        assert!(a.im().iter().any(|v| v.abs() > 1e-3), "phase must be non-trivial");
    }

    #[test]
    fn rejects_degenerate_input() {
        let mut spec = PhantomSpec::shepp_logan(64, 0);
        spec.ellipses[3].semi_y = 0.0;
        assert!(generate_phantom(&spec).is_err());
        assert!(generate_phantom(&PhantomSpec::shepp_logan(8, 0)).is_err());
    }
}
