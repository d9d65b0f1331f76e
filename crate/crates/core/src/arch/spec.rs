use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ArchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    EncoderDecoder,
    ConvDecoder,
    DeepDecoder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipPolicy {
    Zero,
    Half,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpsamplerKind {
    Nearest,
    Bilinear,
    L100,
    Transposed,
    None,
}

impl FromStr for SkipPolicy {
    type Err = ArchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(Self::Zero),
            "half" => Ok(Self::Half),
            "full" => Ok(Self::Full),
            _ => Err(ArchError::Parse { field: "skips", value: s.into() }),
        }
    }
}

impl fmt::Display for SkipPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::Half => "half",
            Self::Full => "full",
        })
    }
}

impl FromStr for UpsamplerKind {
    type Err = ArchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" | "nn" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "l100" | "l-100" | "kaiser" => Ok(Self::L100),
            "transposed" => Ok(Self::Transposed),
            "none" => Ok(Self::None),
            _ => Err(ArchError::Parse { field: "upsampler", value: s.into() }),
        }
    }
}

impl fmt::Display for UpsamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nearest => "nearest",
            Self::Bilinear => "bilinear",
            Self::L100 => "l100",
            Self::Transposed => "transposed",
            Self::None => "none",
        })
    }
}

/// Declarative network description.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    pub depth: usize,
    pub skips: SkipPolicy,
    pub width: usize,
    pub kernel: usize,
    pub upsampler: UpsamplerKind,
    /// Output side length N.
    pub size: usize,
    pub seed: u64,
}

impl ArchSpec {
    pub fn encoder_decoder(depth: usize, skips: SkipPolicy, width: usize, kernel: usize, size: usize) -> Self {
        Self {
            family: Family::EncoderDecoder,
            depth,
            skips,
            width,
            kernel,
            upsampler: UpsamplerKind::Nearest,
            size,
            seed: 0,
        }
    }

    pub fn conv_decoder(width: usize, size: usize) -> Self {
        Self {
            family: Family::ConvDecoder,
            depth: 7,
            skips: SkipPolicy::Zero,
            width,
            kernel: 3,
            upsampler: UpsamplerKind::Nearest,
            size,
            seed: 0,
        }
    }

    pub fn deep_decoder(width: usize, size: usize) -> Self {
        Self {
            family: Family::DeepDecoder,
            depth: 7,
            skips: SkipPolicy::Zero,
            width,
            kernel: 1,
            upsampler: UpsamplerKind::Bilinear,
            size,
            seed: 0,
        }
    }

    pub fn with_upsampler(mut self, upsampler: UpsamplerKind) -> Self {
        self.upsampler = upsampler;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Parses `A_<d>_<skips>_<w>_<k>`, `conv-decoder_<w>` or `deep-decoder_<w>`.
    /// Upsampler defaults to nearest (bilinear for deep-decoder); size and
    /// seed come from the caller.
    pub fn parse_label(label: &str, size: usize) -> Result<Self, ArchError> {
        let parts: Vec<&str> = label.split('_').collect();
        let num = |field: &'static str, s: &str| -> Result<usize, ArchError> {
            s.parse().map_err(|_| ArchError::Parse { field, value: s.into() })
        };
        let spec = match parts[0] {
            "A" => {
                if parts.len() != 5 {
                    return Err(ArchError::Parse { field: "arch", value: label.into() });
                }
                Self::encoder_decoder(
                    num("depth", parts[1])?,
                    parts[2].parse()?,
                    num("width", parts[3])?,
                    num("kernel", parts[4])?,
                    size,
                )
            }
            "conv-decoder" | "deep-decoder" => {
                if parts.len() != 2 {
                    return Err(ArchError::Parse { field: "arch", value: label.into() });
                }
                let w = num("width", parts[1])?;
                if parts[0] == "conv-decoder" {
                    Self::conv_decoder(w, size)
                } else {
                    Self::deep_decoder(w, size)
                }
            }
            _ => return Err(ArchError::Parse { field: "arch", value: label.into() }),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Label in the `A_<d>_<skips>_<w>_<k>` scheme (or `<family>_<w>`).
    pub fn label(&self) -> String {
        match self.family {
            Family::EncoderDecoder => format!("A_{}_{}_{}_{}", self.depth, self.skips, self.width, self.kernel),
            Family::ConvDecoder => format!("conv-decoder_{}", self.width),
            Family::DeepDecoder => format!("deep-decoder_{}", self.width),
        }
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let bad = |field: &'static str, msg: String| Err(ArchError::Invalid { field, msg });
        if self.depth == 0 {
            return bad("depth", "depth must be at least 1".into());
        }
        if self.width == 0 {
            return bad("width", "width must be at least 1".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel", format!("kernel must be odd, got {}", self.kernel));
        }
        if self.family == Family::DeepDecoder && self.kernel != 1 {
            return bad("kernel", "deep-decoder uses 1x1 learnable convolutions".into());
        }
        if self.family == Family::EncoderDecoder && self.upsampler == UpsamplerKind::None {
            return bad("upsampler", "encoder-decoder needs an upsampler to restore resolution".into());
        }
        if self.size == 0 {
            return bad("size", "output size must be positive".into());
        }
        Ok(())
    }
}
