use super::{ArchError, UpsamplerKind};
use crate::autodiff::{AutodiffError, Graph, Var};

pub const NEAREST_TAPS: [f64; 2] = [0.5, 0.5];
pub const BILINEAR_TAPS: [f64; 3] = [0.25, 0.5, 0.25];
/// Kaiser-window low-pass (β = 10, cutoff 0.1), 17 taps.
pub const L100_TAPS: [f64; 17] = [
    0.000015, 0.000541, 0.003707, 0.014130, 0.037396, 0.075367, 0.121291, 0.159962, 0.175182, 0.159962,
    0.121291, 0.075367, 0.037396, 0.014130, 0.003707, 0.000541, 0.000015,
];

/// Unlearnt interpolation: zero insertion followed by a frozen separable
/// low-pass filter. The transposed kind carries no taps; its learnable
/// kernel is owned by the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Upsampler {
    pub kind: UpsamplerKind,
    pub factor: usize,
    pub taps: Vec<f64>,
    pub gain: f64,
}

pub fn make_upsampler(kind: UpsamplerKind, factor: usize) -> Result<Upsampler, ArchError> {
    if factor == 0 {
        return Err(ArchError::Invalid { field: "upsampler", msg: "factor must be positive".into() });
    }
    let taps = match kind {
        UpsamplerKind::Nearest => NEAREST_TAPS.to_vec(),
        UpsamplerKind::Bilinear => BILINEAR_TAPS.to_vec(),
        UpsamplerKind::L100 => L100_TAPS.to_vec(),
        UpsamplerKind::Transposed => Vec::new(),
        UpsamplerKind::None => {
            return Err(ArchError::Invalid { field: "upsampler", msg: "`none` has no upsampling layer".into() })
        }
    };
    let gain = match kind {
        UpsamplerKind::Transposed => 1.0,
        _ => (factor * factor) as f64,
    };
    Ok(Upsampler { kind, factor, taps, gain })
}

impl Upsampler {
    /// Applies the unlearnt path. For the transposed kind only the zero
    /// insertion happens here; the caller follows with its learnable conv.
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var, AutodiffError> {
        let z = g.zero_insert_upsample(x, self.factor, self.factor, self.gain)?;
        if self.taps.is_empty() {
            return Ok(z);
        }
        g.fixed_lowpass_conv(z, &self.taps)
    }

    pub fn is_learnable(&self) -> bool {
        self.kind == UpsamplerKind::Transposed
    }
}

/// Initial kernel of a learnable `k×k` transposed upsampler: the bilinear
/// interpolation stencil (×4 for the zero-insertion loss) on the channel
/// diagonal, centered in the kernel.
pub fn bilinear_transposed_init(channels: usize, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; channels * channels * k * k];
    let off = k / 2 - 1;
    for c in 0..channels {
        for u in 0..3 {
            for v in 0..3 {
                w[((c * channels + c) * k + off + u) * k + off + v] = 4.0 * BILINEAR_TAPS[u] * BILINEAR_TAPS[v];
            }
        }
    }
    w
}
