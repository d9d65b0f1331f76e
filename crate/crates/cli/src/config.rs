//! TOML configuration files. Every key mirrors a command-line flag; flags
//! given on the command line take precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use toml::Spanned;

use priorforge::recon::ProblemSpec;

/// Environment variable consulted when neither a flag nor a config file sets the seed.
pub const SEED_ENV: &str = "PRIORFORGE_SEED";

/// A parsed file together with its source, for line-numbered diagnostics.
pub struct Loaded<T> {
    pub path: PathBuf,
    pub source: String,
    pub value: T,
}

impl<T> Loaded<T> {
    /// `path:line` of a spanned value, for diagnostics.
    pub fn at<V>(&self, raw: &Spanned<V>) -> String {
        format!("{}:{}", self.path.display(), line_of(&self.source, raw.span().start))
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Loaded<T>> {
    let source = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value = toml::from_str(&source).map_err(|e| {
        let at = e.span().map(|s| format!(":{}", line_of(&source, s.start))).unwrap_or_default();
        anyhow!("{}{at}: {}", path.display(), e.message())
    })?;
    Ok(Loaded { path: path.to_path_buf(), source, value })
}

/// One-based line number of a byte offset.
pub fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Flag, then config file, then `PRIORFORGE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| anyhow!("{SEED_ENV}: `{v}` is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReconFile {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arch: Option<Spanned<String>>,
    pub upsampler: Option<Spanned<String>>,
    pub input_filter: Option<Spanned<String>>,
    pub lipschitz: Option<f64>,
    pub tv: Option<f64>,
    pub l2: Option<f64>,
    pub iters: Option<usize>,
    pub lr: Option<f64>,
    pub self_val: Option<Spanned<String>>,
    pub precision: Option<Spanned<String>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ProblemFile {
    pub size: Option<usize>,
    pub coils: Option<usize>,
    pub accel: Option<f64>,
    pub center_lines: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
}

impl ProblemFile {
    pub fn to_spec(&self, default_seed: u64) -> ProblemSpec {
        let d = ProblemSpec::default();
        ProblemSpec {
            size: self.size.unwrap_or(d.size),
            coils: self.coils.unwrap_or(d.coils),
            accel: self.accel.unwrap_or(d.accel),
            center_lines: self.center_lines.unwrap_or(d.center_lines),
            noise_sigma: self.noise.unwrap_or(d.noise_sigma),
            seed: self.seed.unwrap_or(default_seed),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepFile {
    /// Directory written by `phantom`; alternative to `[problem]`.
    pub data: Option<PathBuf>,
    pub problem: Option<ProblemFile>,
    pub out: Option<PathBuf>,
    /// Explicit architecture labels; alternative to the four axes below.
    #[serde(default)]
    pub arch: Vec<Spanned<String>>,
    #[serde(default)]
    pub depth: Vec<usize>,
    #[serde(default)]
    pub width: Vec<usize>,
    #[serde(default)]
    pub skips: Vec<Spanned<String>>,
    #[serde(default)]
    pub kernel: Vec<usize>,
    #[serde(default)]
    pub upsampler: Vec<Spanned<String>>,
    #[serde(default)]
    pub regularizer: Vec<Spanned<String>>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub iters: Option<usize>,
    pub lr: Option<f64>,
    pub self_val: Option<Spanned<String>>,
    pub precision: Option<Spanned<String>>,
    pub jobs: Option<usize>,
}

/// `off`, or `FRACTION:WINDOW` (e.g. `0.05:30`).
pub fn parse_self_val(s: &str) -> Result<Option<priorforge::recon::SelfValidation>> {
    let s = s.trim();
    if s == "off" || s == "none" {
        return Ok(None);
    }
    let (f, w) = s.split_once(':').ok_or_else(|| anyhow!("expected FRACTION:WINDOW or `off`, got `{s}`"))?;
    let fraction: f64 = f.parse().map_err(|_| anyhow!("holdout fraction `{f}` is not a number"))?;
    let window: usize = w.parse().map_err(|_| anyhow!("window `{w}` is not an integer"))?;
    if !(fraction > 0.0 && fraction < 0.5) || window == 0 {
        bail!("self-validation needs 0 < fraction < 0.5 and window >= 1, got `{s}`");
    }
    Ok(Some(priorforge::recon::SelfValidation { fraction, window }))
}

pub fn parse_precision(s: &str) -> Result<priorforge::autodiff::Precision> {
    use priorforge::autodiff::Precision;
    match s.trim().to_ascii_lowercase().as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => bail!("precision must be f32 or f64, got `{other}`"),
    }
}
