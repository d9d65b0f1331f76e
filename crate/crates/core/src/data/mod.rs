//! Synthetic acquisitions: phantoms, coil maps, Cartesian masks, noisy
//! k-space, and the binary `.cplx` / `.mask` file formats.

mod coils;
pub mod io;
mod mask;
mod phantom;

pub use coils::generate_csm;
pub use mask::{generate_cartesian_mask, MaskSpec};
pub use phantom::{generate_phantom, shepp_logan_ellipses, Ellipse, PhantomSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mri::{forward_operator, CoilSensitivities, ComplexImage, KSpace, MriError, SamplingMask};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid specification: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mri(#[from] MriError),
    #[error(transparent)]
    Io(#[from] io::FormatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per real/imaginary component.
    pub sigma: f64,
    pub seed: u64,
}

/// `forward_operator(x)` plus i.i.d. complex Gaussian noise on acquired
/// entries. Draw order: coil, row, column; real then imaginary.
pub fn simulate_kspace(
    x: &ComplexImage,
    sens: &CoilSensitivities,
    mask: &SamplingMask,
    noise: &NoiseSpec,
) -> Result<KSpace, DataError> {
    if !(noise.sigma >= 0.0) {
        return Err(DataError::Invalid(format!("noise sigma must be >= 0, got {}", noise.sigma)));
    }
    let mut y = forward_operator(x, sens, mask)?;
    if noise.sigma == 0.0 {
        return Ok(y);
    }
    let mut rng = SplitMix64::derive(noise.seed, 0x4E4F_4953_45);
    let w = y.width();
    for coil in y.coils_mut() {
        for k in 0..coil.len() {
            if mask.columns()[k % w] {
                coil.re_mut()[k] += noise.sigma * rng.normal();
                coil.im_mut()[k] += noise.sigma * rng.normal();
            }
        }
    }
    Ok(y)
}
