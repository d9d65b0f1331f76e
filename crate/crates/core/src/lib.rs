//! Untrained convolutional priors for under-sampled multi-coil MRI.
//!
//! The crate bundles a small reverse-mode differentiation engine, the
//! multi-coil Cartesian acquisition model, synthetic phantom/coil/mask
//! generators, the encoder-decoder and decoder-only network families, the
//! bandwidth-constrained input and learnable-Lipschitz remedies, and the
//! reconstruction loop with self-validation early stopping.

pub mod autodiff;
pub mod par;
pub mod rng;
pub mod data;
pub mod mri;
pub mod arch;
pub mod reg;
pub mod metrics;
pub mod recon;
