use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

use priorforge::arch::{BILINEAR_TAPS, L100_TAPS, NEAREST_TAPS};
use priorforge::data::io::{read_cplx, read_mask};
use priorforge::metrics::{self, filter_frequency_response, frequency_grid};

use crate::{FreqArgs, MetricsArgs};

pub const FREQ_HEADER: &str = "omega,nearest,bilinear,l100";

pub fn freq_table(points: usize) -> String {
    let omegas = frequency_grid(points);
    let cols = [&NEAREST_TAPS[..], &BILINEAR_TAPS[..], &L100_TAPS[..]].map(|t| filter_frequency_response(t, &omegas));
    let mut s = format!("{FREQ_HEADER}\n");
    for (i, om) in omegas.iter().enumerate() {
        let _ = writeln!(s, "{om},{},{},{}", cols[0][i], cols[1][i], cols[2][i]);
    }
    s
}

pub fn freq(a: &FreqArgs) -> Result<()> {
    if a.points < 2 {
        bail!("--points must be at least 2");
    }
    let table = freq_table(a.points);
    match &a.out {
        Some(p) => std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}

pub fn metrics(a: &MetricsArgs) -> Result<()> {
    let first = |p: &std::path::Path| -> Result<_> {
        read_cplx(p)
            .with_context(|| format!("reading {}", p.display()))?
            .into_iter()
            .next()
            .with_context(|| format!("{} holds no images", p.display()))
    };
    let x = first(&a.recon)?;
    let reference = first(&a.reference)?;
    let mask = a.mask.as_deref().map(|p| read_mask(p).with_context(|| format!("reading {}", p.display()))).transpose()?;
    let report = metrics::evaluate(&x, &reference, mask.as_ref())?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match &a.out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}
