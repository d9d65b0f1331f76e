//! Fitting an untrained network to under-sampled measurements, with optional
//! self-validation early stopping and per-iteration diagnostics.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{build, count_params, ArchError, ArchSpec, NetworkInstance, WeightTransform};
use crate::autodiff::{Adam, AdamConfig, AutodiffError, Graph, Precision, Tensor, Var};
use crate::metrics::{self, MetricError};
use crate::mri::{dft2_centered, ComplexImage, CoilSensitivities, KSpace, MriError, MriOperator, SamplingMask};
use crate::reg::{self, bandlimit_input, LipschitzState, RegConfig, RegError};
use crate::rng::SplitMix64;

pub const LOG_EVERY: usize = 10;
pub const LOG_HEADER: &str = "iter,train_mae,val_mae,psnr_full,psnr_masked,ssim,low_band_err,high_band_err";

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("invalid reconstruction setting: {0}")]
    Invalid(String),
    #[error("non-finite loss at iteration {iter}")]
    NonFinite { iter: usize, log: Vec<IterationLog> },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Mri(#[from] MriError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfValidation {
    pub fraction: f64,
    pub window: usize,
}

impl Default for SelfValidation {
    fn default() -> Self {
        Self { fraction: 0.05, window: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub arch: ArchSpec,
    pub reg: RegConfig,
    pub iterations: usize,
    pub learning_rate: f64,
    pub self_val: Option<SelfValidation>,
    /// Drives weight init, the network input, σ sampling and the holdout split.
    pub seed: u64,
    /// Convolution GEMM arithmetic.
    pub precision: Precision,
}

impl ReconConfig {
    pub fn new(arch: ArchSpec) -> Self {
        Self { arch, reg: RegConfig::default(), iterations: 3000, learning_rate: 0.008, self_val: None, seed: 0, precision: Precision::F32 }
    }

    pub fn validate(&self) -> Result<(), ReconError> {
        if self.iterations == 0 {
            return Err(ReconError::Invalid("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ReconError::Invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(sv) = self.self_val {
            if !(sv.fraction > 0.0 && sv.fraction < 0.5) {
                return Err(ReconError::Invalid(format!("holdout fraction must lie in (0, 0.5), got {}", sv.fraction)));
            }
            if sv.window == 0 {
                return Err(ReconError::Invalid("self-validation window must be >= 1".into()));
            }
        }
        self.arch.validate()?;
        self.reg.validate()?;
        Ok(())
    }
}

/// Measurements and geometry for one reconstruction.
#[derive(Clone, Debug)]
pub struct ReconData {
    pub kspace: KSpace,
    pub sens: CoilSensitivities,
    pub mask: SamplingMask,
    /// Width of the protected center block; detected from the mask when absent.
    pub center_lines: Option<usize>,
    /// Ground truth, used only for diagnostics.
    pub reference: Option<ComplexImage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub train_mae: f64,
    pub val_mae: Option<f64>,
    pub psnr_full: Option<f64>,
    pub psnr_masked: Option<f64>,
    pub ssim: Option<f64>,
    pub low_band_err: Option<f64>,
    pub high_band_err: Option<f64>,
    /// Sum of enabled penalty terms.
    pub penalty: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Renders the log as CSV. A trailing `penalty` column is added when any
/// penalty is enabled.
pub fn log_to_csv(log: &[IterationLog], with_penalty: bool) -> String {
    let mut s = String::from(LOG_HEADER);
    if with_penalty {
        s.push_str(",penalty");
    }
    s.push('\n');
    for r in log {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            r.train_mae,
            opt(r.val_mae),
            opt(r.psnr_full),
            opt(r.psnr_masked),
            opt(r.ssim),
            opt(r.low_band_err),
            opt(r.high_band_err)
        );
        if with_penalty {
            let _ = write!(s, ",{}", r.penalty);
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    /// Complex network output after the last iteration.
    pub final_image: ComplexImage,
    /// `|G(z)|` after the last iteration.
    pub final_magnitude: Vec<f64>,
    /// Output at the restored best iteration (the final output without self-validation).
    pub best_image: ComplexImage,
    pub best_iter: usize,
    pub stop_iter: usize,
    pub log: Vec<IterationLog>,
    pub val_history: Vec<f64>,
    pub sigma: Option<f64>,
    pub params: usize,
    pub elapsed: Duration,
}

/// Synthetic single-slice problem: phantom, coil maps, Cartesian mask and noisy k-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub size: usize,
    pub coils: usize,
    pub accel: f64,
    pub center_lines: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { size: 64, coils: 4, accel: 4.0, center_lines: 5, noise_sigma: DEFAULT_NOISE_SIGMA, seed: 0 }
    }
}

/// Complex Gaussian noise level of [`ProblemSpec::default`].
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

pub fn phantom_problem(spec: &ProblemSpec) -> Result<ReconData, ReconError> {
    use crate::data::{generate_cartesian_mask, generate_csm, generate_phantom, simulate_kspace, MaskSpec, NoiseSpec, PhantomSpec};
    let err = |e: crate::data::DataError| ReconError::Invalid(e.to_string());
    let x = generate_phantom(&PhantomSpec::shepp_logan(spec.size, spec.seed)).map_err(err)?;
    let sens = generate_csm(spec.coils, spec.size).map_err(err)?;
    let mask = generate_cartesian_mask(&MaskSpec {
        height: spec.size,
        width: spec.size,
        accel: spec.accel,
        center_lines: spec.center_lines,
        seed: spec.seed,
    })
    .map_err(err)?;
    let kspace = simulate_kspace(&x, &sens, &mask, &NoiseSpec { sigma: spec.noise_sigma, seed: spec.seed }).map_err(err)?;
    Ok(ReconData { kspace, sens, mask, center_lines: Some(spec.center_lines), reference: Some(x) })
}

/// Leading run of sampled columns around the DC column.
pub fn detect_center_lines(mask: &SamplingMask) -> usize {
    let cols = mask.columns();
    let c = cols.len() / 2;
    if cols.is_empty() || !cols[c] {
        return 0;
    }
    let lo = (0..=c).rev().take_while(|&j| cols[j]).last().unwrap_or(c);
    let hi = (c..cols.len()).take_while(|&j| cols[j]).last().unwrap_or(c);
    hi - lo + 1
}

/// Holds out `ceil(fraction · acquired)` acquired non-center columns, drawn
/// uniformly without replacement. Returns `(train, val)`.
pub fn split_self_validation(
    mask: &SamplingMask,
    fraction: f64,
    center_lines: usize,
    seed: u64,
) -> Result<(SamplingMask, SamplingMask), ReconError> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(ReconError::Invalid(format!("holdout fraction must lie in [0, 0.5), got {fraction}")));
    }
    let w = mask.width();
    let empty = SamplingMask::from_columns(mask.height(), vec![false; w]);
    if fraction == 0.0 {
        return Ok((mask.clone(), empty));
    }
    let count = (fraction * mask.sampled_columns() as f64).ceil() as usize;
    let start = (w / 2).saturating_sub(center_lines / 2);
    let center = start..(start + center_lines).min(w);
    let mut candidates: Vec<usize> = (0..w).filter(|&j| mask.columns()[j] && !center.contains(&j)).collect();
    if count == 0 || count > candidates.len() {
        return Err(ReconError::Invalid(format!(
            "cannot hold out {count} of {} outer acquired columns",
            candidates.len()
        )));
    }
    let mut rng = SplitMix64::derive(seed, 0x5350_4C49_54);
    let mut val = vec![false; w];
    for _ in 0..count {
        let j = candidates.swap_remove(rng.below(candidates.len()));
        val[j] = true;
    }
    let val = SamplingMask::from_columns(mask.height(), val);
    Ok((mask.minus(&val), val))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop { best_iter: usize },
}

/// Windowed-mean early stopping: stop once the mean of the last `window`
/// validation errors has not reached a new minimum for `window` evaluations.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    window: usize,
    recent: VecDeque<f64>,
    best_mean: f64,
    best_iter: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "window must be >= 1");
        Self { window, recent: VecDeque::with_capacity(window), best_mean: f64::INFINITY, best_iter: 0, stale: 0 }
    }

    pub fn best_iter(&self) -> usize {
        self.best_iter
    }

    /// Returns whether `iter` set a new best windowed mean, and the decision.
    pub fn push(&mut self, iter: usize, val: f64) -> (bool, StopDecision) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(val);
        if self.recent.len() < self.window {
            return (false, StopDecision::Continue);
        }
        let mean = self.recent.iter().sum::<f64>() / self.window as f64;
        if mean < self.best_mean {
            self.best_mean = mean;
            self.best_iter = iter;
            self.stale = 0;
            return (true, StopDecision::Continue);
        }
        self.stale += 1;
        if self.stale >= self.window {
            (false, StopDecision::Stop { best_iter: self.best_iter })
        } else {
            (false, StopDecision::Continue)
        }
    }
}

/// Applies [`EarlyStopper`] to a complete history (iterations numbered from 1).
pub fn early_stop_check(history: &[f64], window: usize) -> Option<(usize, usize)> {
    let mut s = EarlyStopper::new(window);
    for (i, &v) in history.iter().enumerate() {
        if let (_, StopDecision::Stop { best_iter }) = s.push(i + 1, v) {
            return Some((i + 1, best_iter));
        }
    }
    None
}

/// Mean error-spectrum magnitude at radius `≤ N/8` and `> N/4` from DC.
pub fn band_errors(output: &ComplexImage, reference: &ComplexImage) -> Result<(f64, f64), ReconError> {
    if !output.same_extent(reference) {
        return Err(ReconError::Invalid("band error extents differ".into()));
    }
    let (h, w) = (output.height(), output.width());
    let re = output.re().iter().zip(reference.re()).map(|(a, b)| a - b).collect();
    let im = output.im().iter().zip(reference.im()).map(|(a, b)| a - b).collect();
    let e = dft2_centered(&ComplexImage::from_parts(h, w, re, im)?);
    let n = h.min(w) as f64;
    let (mut lo, mut lo_n, mut hi, mut hi_n) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..h {
        for j in 0..w {
            let r = ((i as f64 - (h / 2) as f64).powi(2) + (j as f64 - (w / 2) as f64).powi(2)).sqrt();
            let k = i * w + j;
            let m = e.re()[k].hypot(e.im()[k]);
            if r <= n / 8.0 {
                lo += m;
                lo_n += 1;
            } else if r > n / 4.0 {
                hi += m;
                hi_n += 1;
            }
        }
    }
    Ok((lo / lo_n.max(1) as f64, hi / hi_n.max(1) as f64))
}

fn planes_to_image(t: &Tensor) -> ComplexImage {
    let s = t.shape();
    let (h, w) = (s[2], s[3]);
    let n = h * w;
    ComplexImage::from_parts(h, w, t.data()[..n].to_vec(), t.data()[n..2 * n].to_vec()).expect("two planes")
}

/// Per-entry 0/1 selector over `(coils, 2, H, W)` k-space planes.
fn plane_selector(mask: &SamplingMask, coils: usize) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::with_capacity(coils * 2 * h * w);
    for _ in 0..coils * 2 * h {
        out.extend(mask.columns().iter().map(|&c| if c { 1.0 } else { 0.0 }));
    }
    out
}

fn masked_mae(pred: &[f64], target: &[f64], sel: &[f64]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for ((p, t), m) in pred.iter().zip(target).zip(sel) {
        if *m != 0.0 {
            s += (p - t).abs();
            n += 1;
        }
    }
    s / n as f64
}

/// Network, optimizer and the pieces of the objective that stay fixed
/// across iterations.
pub struct Trainer {
    pub net: NetworkInstance,
    pub lipschitz: Option<LipschitzState>,
    pub reg: RegConfig,
    pub input: Tensor,
    pub sigma: Option<f64>,
    op: Arc<MriOperator>,
    target: Tensor,
    train_sel: Vec<f64>,
    val_sel: Option<Vec<f64>>,
    adam: Adam,
    precision: Precision,
}

/// Values produced by one [`Trainer::step`].
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub data_loss: f64,
    pub penalty: f64,
    pub val_mae: Option<f64>,
    /// Network output that produced the losses (before the update).
    pub output: Tensor,
}

impl Trainer {
    pub fn new(
        cfg: &ReconConfig,
        data: &ReconData,
        train: &SamplingMask,
        val: Option<&SamplingMask>,
    ) -> Result<Self, ReconError> {
        let arch = cfg.arch.clone().with_seed(cfg.seed);
        let mut net = build(&arch)?;
        let reg = RegConfig { seed: cfg.seed, ..cfg.reg };
        let (input, sigma) = bandlimit_input(&net.input, &reg)?;
        let lipschitz = match reg.lipschitz {
            Some(_) => Some(LipschitzState::register(&mut net)?),
            None => None,
        };
        let full = SamplingMask::full(data.mask.height(), data.mask.width());
        let op = Arc::new(MriOperator::new(data.sens.clone(), full)?);
        let coils = data.kspace.count();
        let (h, w) = (data.kspace.height(), data.kspace.width());
        let target = Tensor::new(vec![coils, 2, h, w], data.kspace.to_planes())?;
        let params: Vec<_> = net.store.ids().collect();
        let adam = Adam::new(AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() }, params, &net.store);
        Ok(Self {
            net,
            lipschitz,
            reg,
            input,
            sigma,
            op,
            target,
            train_sel: plane_selector(train, coils),
            val_sel: val.filter(|v| v.sampled_columns() > 0).map(|v| plane_selector(v, coils)),
            adam,
            precision: cfg.precision,
        })
    }

    fn transform(&self) -> Option<&dyn WeightTransform> {
        self.lipschitz.as_ref().map(|l| l as &dyn WeightTransform)
    }

    /// Network output for the current parameters.
    pub fn output(&self) -> Result<Tensor, ReconError> {
        let mut g = Graph::with_precision(self.precision);
        let z = g.constant(self.input.clone());
        let y = self.net.forward(&mut g, z, self.transform())?;
        Ok(g.value(y).clone())
    }

    /// Held-out MAE of an output tensor.
    pub fn val_mae_of(&self, output: &Tensor) -> Option<f64> {
        use crate::autodiff::LinearMap;
        let sel = self.val_sel.as_ref()?;
        let k = self.op.apply(output.data());
        Some(masked_mae(&k, self.target.data(), sel))
    }

    fn penalties(&self, g: &mut Graph, out: Var) -> Result<Option<Var>, ReconError> {
        let mut terms = Vec::new();
        if let (Some(lambda), Some(state)) = (self.reg.lipschitz, &self.lipschitz) {
            terms.push(reg::lipschitz_penalty(g, &self.net.store, state, lambda)?);
        }
        if let Some(lambda) = self.reg.tv {
            let tv = reg::tv_penalty(g, out)?;
            terms.push(g.scale(tv, lambda));
        }
        if let Some(lambda) = self.reg.l2 {
            terms.push(reg::l2_penalty(g, &self.net.store, self.net.conv_weights(), lambda)?);
        }
        let mut it = terms.into_iter();
        let Some(mut acc) = it.next() else { return Ok(None) };
        for t in it {
            acc = g.add(acc, t)?;
        }
        Ok(Some(acc))
    }

    /// Forward, loss, backward and one Adam update.
    pub fn step(&mut self) -> Result<StepOutput, ReconError> {
        let mut g = Graph::with_precision(self.precision);
        let z = g.constant(self.input.clone());
        let out = self.net.forward(&mut g, z, self.transform())?;
        let k = g.linear(out, self.op.clone())?;
        let target = g.constant(self.target.clone());
        let data = g.mae_loss(k, target, Some(&self.train_sel))?;
        let (loss, penalty) = match self.penalties(&mut g, out)? {
            Some(p) => (g.add(data, p)?, g.value(p).item()),
            None => (data, 0.0),
        };
        let data_loss = g.value(data).item();
        let total = g.value(loss).item();
        let val_mae = self.val_sel.as_ref().map(|sel| masked_mae(g.value(k).data(), self.target.data(), sel));
        let output = g.value(out).clone();
        if !total.is_finite() {
            return Err(ReconError::NonFinite { iter: self.adam.step_count() as usize + 1, log: Vec::new() });
        }
        g.backward(loss, &mut self.net.store)?;
        self.adam.step(&mut self.net.store)?;
        Ok(StepOutput { data_loss, penalty, val_mae, output })
    }
}

fn diagnostics(
    row: &mut IterationLog,
    output: &Tensor,
    data: &ReconData,
) -> Result<(), ReconError> {
    let Some(reference) = &data.reference else { return Ok(()) };
    let img = planes_to_image(output);
    let report = metrics::evaluate(&img, reference, Some(&data.mask))?;
    let (lo, hi) = band_errors(&img, reference)?;
    row.psnr_full = Some(report.psnr);
    row.psnr_masked = report.masked_psnr;
    row.ssim = Some(report.ssim);
    row.low_band_err = Some(lo);
    row.high_band_err = Some(hi);
    Ok(())
}

/// Runs the full optimization. Iteration `t` evaluates the parameters after
/// `t − 1` updates; log rows are emitted every [`LOG_EVERY`] iterations and
/// at the last one.
pub fn run_reconstruction(cfg: &ReconConfig, data: &ReconData) -> Result<ReconResult, ReconError> {
    run_reconstruction_with(cfg, data, |_| {})
}

/// As [`run_reconstruction`], calling `on_log` with each log row as it is produced.
pub fn run_reconstruction_with(
    cfg: &ReconConfig,
    data: &ReconData,
    mut on_log: impl FnMut(&IterationLog),
) -> Result<ReconResult, ReconError> {
    cfg.validate()?;
    let start = Instant::now();
    let (h, w) = (data.kspace.height(), data.kspace.width());
    if (h, w) != (cfg.arch.size, cfg.arch.size) || data.mask.width() != w || data.sens.height() != h {
        return Err(ReconError::Invalid(format!(
            "geometry mismatch: k-space {h}x{w}, network output {n}x{n}",
            n = cfg.arch.size
        )));
    }
    if let Some(r) = &data.reference {
        if (r.height(), r.width()) != (h, w) {
            return Err(ReconError::Invalid("reference extent differs from k-space".into()));
        }
    }
    let (train, val) = match cfg.self_val {
        Some(sv) => {
            let center = data.center_lines.unwrap_or_else(|| detect_center_lines(&data.mask));
            let (t, v) = split_self_validation(&data.mask, sv.fraction, center, cfg.seed)?;
            (t, Some(v))
        }
        None => (data.mask.clone(), None),
    };
    let mut trainer = Trainer::new(cfg, data, &train, val.as_ref())?;
    let mut stopper = cfg.self_val.map(|sv| EarlyStopper::new(sv.window));
    let mut snapshot: Option<(usize, Vec<Tensor>)> = None;
    let mut log = Vec::new();
    let mut val_history = Vec::new();
    let mut stop_iter = cfg.iterations;
    let mut stopped_best = None;
    for t in 1..=cfg.iterations {
        let before = stopper.as_ref().map(|_| trainer.net.store.snapshot());
        let step = match trainer.step() {
            Ok(s) => s,
            Err(ReconError::NonFinite { .. }) => return Err(ReconError::NonFinite { iter: t, log }),
            Err(e) => return Err(e),
        };
        if t % LOG_EVERY == 0 || t == cfg.iterations {
            let mut row = IterationLog {
                iter: t,
                train_mae: step.data_loss,
                val_mae: step.val_mae,
                psnr_full: None,
                psnr_masked: None,
                ssim: None,
                low_band_err: None,
                high_band_err: None,
                penalty: step.penalty,
            };
            diagnostics(&mut row, &step.output, data)?;
            on_log(&row);
            log.push(row);
        }
        if let (Some(s), Some(v)) = (stopper.as_mut(), step.val_mae) {
            val_history.push(v);
            let (improved, decision) = s.push(t, v);
            if improved {
                snapshot = before.map(|p| (t, p));
            }
            if let StopDecision::Stop { best_iter } = decision {
                stop_iter = t;
                stopped_best = Some(best_iter);
                break;
            }
        }
    }
    let final_out = trainer.output()?;
    let final_image = planes_to_image(&final_out);
    let (best_image, best_iter) = match snapshot {
        Some((it, params)) => {
            trainer.net.store.restore(&params);
            (planes_to_image(&trainer.output()?), stopped_best.unwrap_or(it))
        }
        None => (final_image.clone(), stop_iter),
    };
    Ok(ReconResult {
        final_magnitude: final_image.magnitude(),
        final_image,
        best_image,
        best_iter,
        stop_iter,
        log,
        val_history,
        sigma: trainer.sigma,
        params: count_params(&trainer.net),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowed_rule_by_hand() {
        assert_eq!(early_stop_check(&[5.0, 4.0, 3.0, 3.5, 4.0, 4.5], 2), Some((6, 4)));
        let dec: Vec<f64> = (0..200).map(|i| 100.0 - i as f64).collect();
        assert_eq!(early_stop_check(&dec, 5), None);
        // window one: patience one on raw values
        assert_eq!(early_stop_check(&[3.0, 2.0, 2.5], 1), Some((3, 2)));
    }

    #[test]
    fn split_partitions_mask() {
        let mut cols = vec![false; 64];
        cols[30..35].fill(true);
        for j in [2, 8, 14, 20, 26, 38, 44, 50, 56, 60, 62] {
            cols[j] = true;
        }
        let m = SamplingMask::from_columns(64, cols);
        assert_eq!(m.sampled_columns(), 16);
        let (t, v) = split_self_validation(&m, 0.05, 5, 7).unwrap();
        assert_eq!(v.sampled_columns(), 1);
        assert_eq!(t.sampled_columns(), 15);
        for j in 0..64 {
            assert!(!(t.columns()[j] && v.columns()[j]));
            assert_eq!(t.columns()[j] || v.columns()[j], m.columns()[j]);
        }
        assert!(v.columns()[30..35].iter().all(|&c| !c));
        let (t0, v0) = split_self_validation(&m, 0.0, 5, 7).unwrap();
        assert_eq!(t0, m);
        assert_eq!(v0.sampled_columns(), 0);
        assert_eq!(detect_center_lines(&m), 5);
    }

    #[test]
    fn bands_of_pure_tone() {
        let n = 32;
        let reference = ComplexImage::zeros(n, n);
        assert_eq!(band_errors(&reference, &reference).unwrap(), (0.0, 0.0));
        // alternating columns: all energy at the Nyquist column
        let re = (0..n * n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let tone = ComplexImage::from_parts(n, n, re, vec![0.0; n * n]).unwrap();
        let (lo, hi) = band_errors(&tone, &reference).unwrap();
        assert!(lo < 1e-12 && hi > 0.0);
    }

    #[test]
    fn csv_header_exact() {
        let row = IterationLog {
            iter: 10,
            train_mae: 0.5,
            val_mae: None,
            psnr_full: Some(20.0),
            psnr_masked: None,
            ssim: Some(0.5),
            low_band_err: Some(1.0),
            high_band_err: Some(2.0),
            penalty: 0.0,
        };
        let csv = log_to_csv(&[row], false);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        assert_eq!(lines.next(), Some("10,0.5,,20,,0.5,1,2"));
    }
}
