use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};

use priorforge::arch::UpsamplerKind;
use priorforge::recon::{phantom_problem, run_reconstruction, ReconConfig, ReconData, SelfValidation};
use priorforge::reg::RegConfig;
use priorforge::autodiff::Precision;

use crate::config::{load, parse_precision, parse_self_val, resolve_seed, Loaded, ProblemFile, SweepFile};
use crate::data::load_problem;
use crate::recon::{make_arch, summarize};
use crate::SweepArgs;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "arch,upsampler,regularizer,seed,psnr_final,psnr_best,ssim_final,stop_iter,params,error";

/// One grid point. Its key (first four CSV columns) identifies it on resume.
#[derive(Clone, Debug)]
struct Cell {
    cfg: ReconConfig,
}

impl Cell {
    fn key(&self) -> String {
        format!("{},{},{},{}", self.cfg.arch.label(), self.cfg.arch.upsampler, self.cfg.reg.label(), self.cfg.seed)
    }
}

struct Plan {
    cells: Vec<Cell>,
    data: ReconData,
    jobs: usize,
    out: std::path::PathBuf,
}

fn spanned_list<T>(
    loaded: &Loaded<SweepFile>,
    items: &[toml::Spanned<String>],
    field: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<Vec<T>> {
    items
        .iter()
        .map(|raw| {
            parse(raw.get_ref()).map_err(|e| anyhow!("{}: invalid `{field}` entry `{}`: {e:#}", loaded.at(raw), raw.get_ref()))
        })
        .collect()
}

fn plan(a: &SweepArgs) -> Result<Plan> {
    let loaded = load::<SweepFile>(&a.config)?;
    let f = &loaded.value;
    let at = |raw: &toml::Spanned<String>| loaded.at(raw);

    let labels = arch_labels(&loaded)?;
    let upsamplers: Vec<Option<UpsamplerKind>> = if f.upsampler.is_empty() {
        vec![None]
    } else {
        spanned_list(&loaded, &f.upsampler, "upsampler", |s| Ok(Some(s.parse::<UpsamplerKind>()?)))?
    };
    let regs: Vec<RegConfig> = if f.regularizer.is_empty() {
        vec![RegConfig::default()]
    } else {
        spanned_list(&loaded, &f.regularizer, "regularizer", |s| Ok(s.parse::<RegConfig>()?))?
    };
    let self_val: Option<SelfValidation> = match &f.self_val {
        Some(raw) => parse_self_val(raw.get_ref()).map_err(|e| anyhow!("{}: invalid `self-val`: {e:#}", at(raw)))?,
        None => None,
    };
    let precision: Option<Precision> = match &f.precision {
        Some(raw) => Some(parse_precision(raw.get_ref()).map_err(|e| anyhow!("{}: invalid `precision`: {e:#}", at(raw)))?),
        None => None,
    };
    let seeds = if f.seeds.is_empty() { vec![resolve_seed(a.seed, None)?] } else { f.seeds.clone() };
    let out = a.out.clone().or_else(|| f.out.clone()).ok_or_else(|| anyhow!("missing `out` (flag --out or config key)"))?;
    let jobs = a.jobs.or(f.jobs).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be >= 1");
    }

    let data = match (&f.data, &f.problem) {
        (Some(_), Some(_)) => bail!("{}: set either `data` or `[problem]`, not both", loaded.path.display()),
        (Some(dir), None) => load_problem(dir)?,
        (None, p) => {
            let p = p.as_ref().map_or_else(|| ProblemFile::default().to_spec(0), |p| p.to_spec(0));
            phantom_problem(&p)?
        }
    };
    let size = data.kspace.height();

    // Every cell is validated before anything is written.
    let archs = spanned_list(&loaded, &labels, "arch", |s| make_arch(s, None, size))?;
    let mut cells = Vec::new();
    for (arch, raw) in archs.iter().zip(&labels) {
        for up in &upsamplers {
            let arch = match up {
                Some(u) => make_arch(raw.get_ref(), Some(*u), size).map_err(|e| anyhow!("{}: invalid `arch`/`upsampler` pair: {e:#}", at(raw)))?,
                None => arch.clone(),
            };
            for reg in &regs {
                for &seed in &seeds {
                    let mut cfg = ReconConfig::new(arch.clone());
                    cfg.reg = RegConfig { seed, ..*reg };
                    cfg.seed = seed;
                    cfg.self_val = self_val;
                    if let Some(n) = a.iters.or(f.iters) {
                        cfg.iterations = n;
                    }
                    if let Some(lr) = f.lr {
                        cfg.learning_rate = lr;
                    }
                    if let Some(p) = precision {
                        cfg.precision = p;
                    }
                    cfg.validate()?;
                    cells.push(Cell { cfg });
                }
            }
        }
    }
    Ok(Plan { cells, data, jobs, out })
}

/// Architecture labels from `arch`, or the product of the
/// `depth × width × skips × kernel` axes. Generated labels carry the span of
/// their `skips` entry for diagnostics.
fn arch_labels(loaded: &Loaded<SweepFile>) -> Result<Vec<toml::Spanned<String>>> {
    let f = &loaded.value;
    let axes = !(f.depth.is_empty() && f.width.is_empty() && f.skips.is_empty() && f.kernel.is_empty());
    match (f.arch.is_empty(), axes) {
        (false, false) => Ok(f.arch.clone()),
        (false, true) => bail!("{}: give either `arch` or the depth/width/skips/kernel axes, not both", loaded.path.display()),
        (true, false) => bail!("{}: no architectures: set `arch` or the depth/width/skips/kernel axes", loaded.path.display()),
        (true, true) => {
            for (name, empty) in [("depth", f.depth.is_empty()), ("width", f.width.is_empty()), ("skips", f.skips.is_empty()), ("kernel", f.kernel.is_empty())] {
                if empty {
                    bail!("{}: grid axis `{name}` is empty", loaded.path.display());
                }
            }
            let mut out = Vec::new();
            for &d in &f.depth {
                for &w in &f.width {
                    for s in &f.skips {
                        for &k in &f.kernel {
                            out.push(toml::Spanned::new(s.span(), format!("A_{d}_{}_{w}_{k}", s.get_ref())));
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Keys of rows already in `path`. A trailing partial line left by an
/// interrupted write is truncated away.
fn existing_keys(path: &Path) -> Result<HashSet<String>> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete.len() as u64)?;
    }
    let mut lines = complete.lines();
    match lines.next() {
        Some(h) if h == SWEEP_HEADER => {}
        Some(h) => bail!("{} has header `{h}`, expected `{SWEEP_HEADER}`", path.display()),
        None => return Ok(keys),
    }
    for line in lines.filter(|l| !l.is_empty()) {
        let key: Vec<&str> = line.splitn(5, ',').take(4).collect();
        keys.insert(key.join(","));
    }
    Ok(keys)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV row for one cell and whether it failed.
fn run_cell(cell: &Cell, data: &ReconData) -> (String, bool) {
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<_> {
        let res = run_reconstruction(&cell.cfg, data)?;
        summarize(&cell.cfg, data, &res)
    }));
    let error = match &outcome {
        Ok(Ok(_)) => None,
        Ok(Err(e)) => Some(format!("{e:#}")),
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Some(format!("panic: {}", msg.unwrap_or_default()))
        }
    };
    let fields = match &outcome {
        Ok(Ok(s)) => [opt(s.psnr_final), opt(s.psnr_best), opt(s.ssim_final), s.stop_iter.to_string(), s.params.to_string()],
        _ => Default::default(),
    };
    let row = format!("{},{},{}\n", cell.key(), fields.join(","), csv_field(error.as_deref().unwrap_or("")));
    (row, error.is_some())
}

pub fn run(a: &SweepArgs) -> Result<()> {
    let Plan { cells, data, jobs, out } = plan(a)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(SWEEP_FILE);
    let done = existing_keys(&path)?;
    let todo: Vec<&Cell> = cells.iter().filter(|c| !done.contains(&c.key())).collect();
    let fresh = !path.exists() || std::fs::metadata(&path)?.len() == 0;
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(file, "{SWEEP_HEADER}")?;
        file.flush()?;
    }
    eprintln!("{} cells, {} already present, running {}", cells.len(), cells.len() - todo.len(), todo.len());

    let file: Mutex<File> = Mutex::new(file);
    let next = AtomicUsize::new(0);
    let failures = AtomicUsize::new(0);
    let write_err: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(todo.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = todo.get(i) else { break };
                let (row, failed) = run_cell(cell, &data);
                if failed {
                    failures.fetch_add(1, Ordering::SeqCst);
                }
                let mut f = file.lock().expect("sweep file lock");
                if let Err(e) = f.write_all(row.as_bytes()).and_then(|_| f.flush()) {
                    *write_err.lock().expect("error slot") = Some(e.into());
                    break;
                }
                eprint!("{row}");
            });
        }
    });
    if let Some(e) = write_err.into_inner().expect("error slot") {
        return Err(e.context(format!("appending to {}", path.display())));
    }
    let failed = failures.load(Ordering::SeqCst);
    if failed > 0 {
        eprintln!("{failed} cell(s) failed; see the error column of {}", path.display());
    }
    Ok(())
}
