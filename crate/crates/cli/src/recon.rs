use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use priorforge::arch::{ArchSpec, UpsamplerKind};
use priorforge::data::io::write_cplx;
use priorforge::metrics;
use priorforge::recon::{log_to_csv, run_reconstruction_with, ReconConfig, ReconData, ReconResult};
use priorforge::reg::{InputFilter, RegConfig};

use crate::config::{load, parse_precision, parse_self_val, resolve_seed, Loaded, ReconFile};
use crate::data::load_problem;
use crate::ReconArgs;

pub const RECON_FILE: &str = "recon.cplx";
pub const LOG_FILE: &str = "log.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Final and best-image quality of one run. Metric fields are null without a reference.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub arch: String,
    pub upsampler: String,
    pub regularizer: String,
    pub seed: u64,
    pub iterations: usize,
    pub params: usize,
    pub stop_iter: usize,
    pub best_iter: usize,
    /// Gaussian input-filter σ actually used.
    pub sigma: Option<f64>,
    pub psnr_final: Option<f64>,
    pub psnr_best: Option<f64>,
    pub ssim_final: Option<f64>,
    pub ssim_best: Option<f64>,
    pub masked_psnr_final: Option<f64>,
    pub masked_psnr_best: Option<f64>,
    pub wall_time_s: f64,
}

pub fn summarize(cfg: &ReconConfig, data: &ReconData, res: &ReconResult) -> Result<Summary> {
    let (fin, best) = match &data.reference {
        Some(r) => (
            Some(metrics::evaluate(&res.final_image, r, Some(&data.mask))?),
            Some(metrics::evaluate(&res.best_image, r, Some(&data.mask))?),
        ),
        None => (None, None),
    };
    Ok(Summary {
        arch: cfg.arch.label(),
        upsampler: cfg.arch.upsampler.to_string(),
        regularizer: cfg.reg.label(),
        seed: cfg.seed,
        iterations: cfg.iterations,
        params: res.params,
        stop_iter: res.stop_iter,
        best_iter: res.best_iter,
        sigma: res.sigma,
        psnr_final: fin.map(|m| m.psnr),
        psnr_best: best.map(|m| m.psnr),
        ssim_final: fin.map(|m| m.ssim),
        ssim_best: best.map(|m| m.ssim),
        masked_psnr_final: fin.and_then(|m| m.masked_psnr),
        masked_psnr_best: best.and_then(|m| m.masked_psnr),
        wall_time_s: res.elapsed.as_secs_f64(),
    })
}

/// Architecture with an optional upsampler override, sized to the data.
pub fn make_arch(label: &str, upsampler: Option<UpsamplerKind>, size: usize) -> Result<ArchSpec> {
    let spec = ArchSpec::parse_label(label, size)?;
    let spec = match upsampler {
        Some(u) => spec.with_upsampler(u),
        None => spec,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parses `off` or a single `gaussian:...` term.
pub fn parse_input_filter(s: &str) -> Result<InputFilter> {
    if s.trim() == "off" {
        return Ok(InputFilter::Off);
    }
    let cfg: RegConfig = s.parse()?;
    if cfg.lipschitz.is_some() || cfg.tv.is_some() || cfg.l2.is_some() {
        return Err(anyhow!("expected `off` or `gaussian:SIZE:SIGMA`, got `{s}`"));
    }
    Ok(cfg.input_filter)
}

struct Resolved {
    cfg: ReconConfig,
    data: ReconData,
    out: PathBuf,
}

/// Flag value if given, else the spanned file value, parsed with `parse`.
fn pick<T>(
    flag: &Option<String>,
    file: Option<(&Loaded<ReconFile>, &toml::Spanned<String>)>,
    field: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<Option<T>> {
    if let Some(v) = flag {
        return parse(v).map(Some).map_err(|e| anyhow!("--{field}: {e:#}"));
    }
    match file {
        Some((loaded, raw)) => parse(raw.get_ref()).map(Some).map_err(|e| anyhow!("{}: invalid `{field}`: {e:#}", loaded.at(raw))),
        None => Ok(None),
    }
}

fn resolve(a: &ReconArgs) -> Result<Resolved> {
    let loaded = a.config.as_deref().map(load::<ReconFile>).transpose()?;
    let empty = ReconFile::default();
    let f = loaded.as_ref().map(|l| &l.value).unwrap_or(&empty);
    fn with<'a>(l: &'a Option<Loaded<ReconFile>>, raw: &'a Option<toml::Spanned<String>>) -> Option<(&'a Loaded<ReconFile>, &'a toml::Spanned<String>)> {
        l.as_ref().zip(raw.as_ref())
    }

    let data_dir = a.data.clone().or_else(|| f.data.clone()).ok_or_else(|| anyhow!("missing `data` (flag --data or config key)"))?;
    let out = a.out.clone().or_else(|| f.out.clone()).ok_or_else(|| anyhow!("missing `out` (flag --out or config key)"))?;

    let upsampler = pick(&a.upsampler, with(&loaded, &f.upsampler), "upsampler", |s| Ok(s.parse::<UpsamplerKind>()?))?;
    let input_filter = pick(&a.input_filter, with(&loaded, &f.input_filter), "input-filter", parse_input_filter)?;
    let self_val = pick(&a.self_val, with(&loaded, &f.self_val), "self-val", parse_self_val)?.flatten();
    let precision = pick(&a.precision, with(&loaded, &f.precision), "precision", parse_precision)?;
    // Label syntax is checked before any file is read; sizing needs the data.
    pick(&a.arch, with(&loaded, &f.arch), "arch", |s| Ok(ArchSpec::parse_label(s, 256)?))?
        .ok_or_else(|| anyhow!("missing `arch` (flag --arch or config key)"))?;

    let data = load_problem(&data_dir)?;
    let size = data.kspace.height();
    let arch = pick(&a.arch, with(&loaded, &f.arch), "arch", |s| make_arch(s, upsampler, size))?.expect("checked above");

    let mut cfg = ReconConfig::new(arch);
    cfg.reg = RegConfig {
        input_filter: input_filter.unwrap_or(InputFilter::Off),
        lipschitz: a.lipschitz.or(f.lipschitz),
        tv: a.tv.or(f.tv),
        l2: a.l2.or(f.l2),
        seed: 0,
    };
    if let Some(n) = a.iters.or(f.iters) {
        cfg.iterations = n;
    }
    if let Some(lr) = a.lr.or(f.lr) {
        cfg.learning_rate = lr;
    }
    cfg.self_val = self_val;
    if let Some(p) = precision {
        cfg.precision = p;
    }
    cfg.seed = resolve_seed(a.seed, f.seed)?;
    cfg.reg.seed = cfg.seed;
    cfg.validate()?;
    Ok(Resolved { cfg, data, out })
}

pub fn run(a: &ReconArgs) -> Result<()> {
    let Resolved { cfg, data, out } = resolve(a)?;
    let verbose = a.verbose;
    let res = run_reconstruction_with(&cfg, &data, |r| {
        if verbose {
            eprintln!(
                "iter {:5} train_mae {:.5} psnr {}",
                r.iter,
                r.train_mae,
                r.psnr_full.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into())
            );
        }
    })
    .map_err(|e| match e {
        priorforge::recon::ReconError::NonFinite { iter, log } => {
            let partial = out.join(LOG_FILE);
            let saved = std::fs::create_dir_all(&out)
                .and_then(|_| std::fs::write(&partial, log_to_csv(&log, has_penalty(&cfg))))
                .map(|_| format!("; partial log in {}", partial.display()))
                .unwrap_or_default();
            anyhow!("non-finite loss at iteration {iter}{saved}")
        }
        e => e.into(),
    })?;
    let summary = summarize(&cfg, &data, &res)?;
    write_outputs(&out, &cfg, &res, &summary)?;
    eprintln!(
        "{} {}: stop {} psnr {} -> {}",
        summary.arch,
        summary.regularizer,
        summary.stop_iter,
        summary.psnr_best.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into()),
        out.display()
    );
    Ok(())
}

fn write_outputs(out: &Path, cfg: &ReconConfig, res: &ReconResult, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_cplx(out.join(RECON_FILE), std::slice::from_ref(&res.best_image))?;
    std::fs::write(out.join(LOG_FILE), log_to_csv(&res.log, has_penalty(cfg)))?;
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    std::fs::write(out.join(SUMMARY_FILE), json)?;
    Ok(())
}

fn has_penalty(cfg: &ReconConfig) -> bool {
    cfg.reg.lipschitz.is_some() || cfg.reg.tv.is_some() || cfg.reg.l2.is_some()
}
