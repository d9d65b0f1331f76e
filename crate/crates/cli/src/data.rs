use std::path::Path;

use anyhow::{bail, Context, Result};

use priorforge::data::io::{read_cplx, read_mask, write_cplx, write_mask};
use priorforge::data::{generate_cartesian_mask, MaskSpec};
use priorforge::mri::{CoilSensitivities, KSpace};
use priorforge::recon::{phantom_problem, ProblemSpec, ReconData};

use crate::config::resolve_seed;
use crate::{MaskArgs, PhantomArgs};

pub const IMAGE_FILE: &str = "image.cplx";
pub const CSM_FILE: &str = "csm.cplx";
pub const MASK_FILE: &str = "mask.mask";
pub const KSPACE_FILE: &str = "kspace.cplx";

pub fn phantom(a: &PhantomArgs) -> Result<()> {
    let spec = ProblemSpec {
        size: a.size,
        coils: a.coils,
        accel: a.accel,
        center_lines: a.center_lines,
        noise_sigma: a.noise.unwrap_or(ProblemSpec::default().noise_sigma),
        seed: resolve_seed(a.seed, None)?,
    };
    let data = phantom_problem(&spec)?;
    write_problem(&data, &a.out)?;
    eprintln!(
        "wrote {}x{} phantom, {} coils, {} of {} columns to {}",
        spec.size,
        spec.size,
        spec.coils,
        data.mask.sampled_columns(),
        spec.size,
        a.out.display()
    );
    Ok(())
}

pub fn write_problem(data: &ReconData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(x) = &data.reference {
        write_cplx(dir.join(IMAGE_FILE), std::slice::from_ref(x))?;
    }
    write_cplx(dir.join(CSM_FILE), data.sens.coils())?;
    write_mask(dir.join(MASK_FILE), &data.mask)?;
    write_cplx(dir.join(KSPACE_FILE), data.kspace.coils())?;
    Ok(())
}

/// Loads a directory written by `phantom`. The reference image is optional.
pub fn load_problem(dir: &Path) -> Result<ReconData> {
    let ctx = |f: &str| format!("reading {}", dir.join(f).display());
    let kspace = KSpace::new(read_cplx(dir.join(KSPACE_FILE)).with_context(|| ctx(KSPACE_FILE))?)?;
    let sens = CoilSensitivities::new(read_cplx(dir.join(CSM_FILE)).with_context(|| ctx(CSM_FILE))?)?;
    let mask = read_mask(dir.join(MASK_FILE)).with_context(|| ctx(MASK_FILE))?;
    let reference = match dir.join(IMAGE_FILE) {
        p if p.exists() => {
            let mut imgs = read_cplx(&p).with_context(|| ctx(IMAGE_FILE))?;
            if imgs.len() != 1 {
                bail!("{} holds {} images, expected 1", p.display(), imgs.len());
            }
            imgs.pop()
        }
        _ => None,
    };
    if kspace.count() != sens.count() {
        bail!("k-space has {} coils but csm.cplx has {}", kspace.count(), sens.count());
    }
    Ok(ReconData { kspace, sens, mask, center_lines: None, reference })
}

pub fn mask(a: &MaskArgs) -> Result<()> {
    let spec = MaskSpec {
        height: a.height.unwrap_or(a.width),
        width: a.width,
        accel: a.accel,
        center_lines: a.center_lines,
        seed: resolve_seed(a.seed, None)?,
    };
    let m = generate_cartesian_mask(&spec)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_mask(&a.out, &m)?;
    eprintln!("wrote {} of {} columns to {}", m.sampled_columns(), m.width(), a.out.display());
    Ok(())
}
