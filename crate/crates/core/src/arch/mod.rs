//! Network families: the isotropic encoder-decoder `A_d_s_w_k`, ConvDecoder
//! and Deep Decoder, with selectable upsampling.

mod network;
mod spec;
pub mod upsample;

pub use network::{
    build, build_decoder, build_encoder_decoder, count_params, decoder_upsample_count, make_noise_input, skip_levels,
    NetworkInstance, WeightTransform, DECODER_LAYERS, SKIP_CHANNELS,
};
pub use spec::{ArchSpec, Family, SkipPolicy, UpsamplerKind};
pub use upsample::{make_upsampler, Upsampler, BILINEAR_TAPS, L100_TAPS, NEAREST_TAPS};

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("cannot parse {field}: `{value}`")]
    Parse { field: &'static str, value: String },
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
