//! Remedies against overfitting: a Gaussian-blurred (bandwidth-constrained)
//! network input and learnable per-layer Lipschitz bounds, plus the TV and
//! ℓ2 baselines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{NetworkInstance, WeightTransform};
use crate::autodiff::{kernels, AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error("invalid regularizer setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma {
    Fixed(f64),
    /// Drawn once per reconstruction, uniformly from `[lo, hi]`.
    Range(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFilter {
    Off,
    Gaussian { size: usize, sigma: Sigma },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub input_filter: InputFilter,
    /// λ of the Lipschitz penalty; `None` disables weight normalization too.
    pub lipschitz: Option<f64>,
    pub tv: Option<f64>,
    pub l2: Option<f64>,
    pub seed: u64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self { input_filter: InputFilter::Off, lipschitz: None, tv: None, l2: None, seed: 0 }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<(), RegError> {
        if let InputFilter::Gaussian { size, sigma } = self.input_filter {
            if size % 2 == 0 {
                return Err(RegError::Invalid(format!("gaussian size must be odd, got {size}")));
            }
            match sigma {
                Sigma::Fixed(s) if !(s > 0.0) => {
                    return Err(RegError::Invalid(format!("gaussian sigma must be positive, got {s}")))
                }
                Sigma::Range(lo, hi) if !(lo > 0.0 && hi >= lo) => {
                    return Err(RegError::Invalid(format!("gaussian sigma range [{lo}, {hi}] is invalid")))
                }
                _ => {}
            }
        }
        for (name, v) in [("lipschitz", self.lipschitz), ("tv", self.tv), ("l2", self.l2)] {
            if let Some(l) = v {
                if !(l >= 0.0) {
                    return Err(RegError::Invalid(format!("{name} weight must be >= 0, got {l}")));
                }
            }
        }
        Ok(())
    }

    /// Short tag for logs and sweep tables.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let InputFilter::Gaussian { size, sigma } = self.input_filter {
            parts.push(match sigma {
                Sigma::Fixed(s) => format!("gaussian:{size}:{s}"),
                Sigma::Range(lo, hi) => format!("gaussian:{size}:{lo}-{hi}"),
            });
        }
        if let Some(l) = self.lipschitz {
            parts.push(format!("lip:{l}"));
        }
        if let Some(l) = self.tv {
            parts.push(format!("tv:{l}"));
        }
        if let Some(l) = self.l2 {
            parts.push(format!("l2:{l}"));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

impl std::str::FromStr for RegConfig {
    type Err = RegError;

    /// Parses the [`RegConfig::label`] form: `none`, or `+`-joined terms
    /// `gaussian:SIZE:SIGMA`, `gaussian:SIZE:LO-HI`, `lip:λ`, `tv:λ`, `l2:λ`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = RegConfig::default();
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(cfg);
        }
        let num = |v: &str, what: &str| -> Result<f64, RegError> {
            v.trim().parse::<f64>().map_err(|_| RegError::Invalid(format!("{what}: `{v}` is not a number")))
        };
        for term in s.split('+') {
            let parts: Vec<&str> = term.trim().split(':').collect();
            match parts.as_slice() {
                ["gaussian" | "gauss", size, sigma] => {
                    let size = size
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| RegError::Invalid(format!("gaussian size: `{size}` is not an integer")))?;
                    let sigma = match sigma.split_once('-') {
                        Some((lo, hi)) => Sigma::Range(num(lo, "gaussian sigma")?, num(hi, "gaussian sigma")?),
                        None => Sigma::Fixed(num(sigma, "gaussian sigma")?),
                    };
                    cfg.input_filter = InputFilter::Gaussian { size, sigma };
                }
                ["lip" | "lipschitz", l] => cfg.lipschitz = Some(num(l, "lipschitz")?),
                ["tv", l] => cfg.tv = Some(num(l, "tv")?),
                ["l2", l] => cfg.l2 = Some(num(l, "l2")?),
                _ => return Err(RegError::Invalid(format!("unknown regularizer term `{term}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Normalized 1-D Gaussian taps `∝ exp(-(i - c)² / 2σ²)`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>, RegError> {
    if size.is_multiple_of(2) {
        return Err(RegError::Invalid(format!("gaussian size must be odd, got {size}")));
    }
    if !(sigma > 0.0) {
        return Err(RegError::Invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// σ used by `cfg` (sampled from the range with `cfg.seed` when given one).
pub fn resolve_sigma(cfg: &RegConfig) -> Option<f64> {
    match cfg.input_filter {
        InputFilter::Off => None,
        InputFilter::Gaussian { sigma: Sigma::Fixed(s), .. } => Some(s),
        InputFilter::Gaussian { sigma: Sigma::Range(lo, hi), .. } => {
            Some(SplitMix64::derive(cfg.seed, 0x5349_474D_41).uniform(lo, hi))
        }
    }
}

/// Blurs each channel of `z` with the 2-D Gaussian `outer(taps, taps)`
/// (same-size zero padding). Returns the filtered input and the σ used;
/// with the filter off, `z` is returned unchanged and σ is `None`.
pub fn bandlimit_input(z: &Tensor, cfg: &RegConfig) -> Result<(Tensor, Option<f64>), RegError> {
    let InputFilter::Gaussian { size, .. } = cfg.input_filter else {
        return Ok((z.clone(), None));
    };
    let sigma = resolve_sigma(cfg).expect("filter is on");
    let taps = gaussian_kernel(size, sigma)?;
    let (b, c, h, w) = z.dims4()?;
    let out = kernels::separable_filter(z.data(), b * c, h, w, &taps);
    Ok((Tensor::new(z.shape().to_vec(), out)?, Some(sigma)))
}

/// ℓ∞ operator norm: the largest absolute row sum.
pub fn matrix_inf_norm(data: &[f64], rows: usize) -> f64 {
    assert!(rows > 0 && !data.is_empty() && data.len().is_multiple_of(rows), "non-empty matrix required");
    let cols = data.len() / rows;
    data.chunks(cols).map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// `W / max(1, ‖W‖∞ / SoftPlus(k))` with `W` viewed as
/// `out_channels × (in_channels·kh·kw)`. Stays differentiable in `W` and `k`.
pub fn lipschitz_normalize(g: &mut Graph, weight: Var, k: Var) -> Result<Var, AutodiffError> {
    let rows = g.shape(weight).first().copied().unwrap_or(1);
    let norm = g.matrix_inf_norm(weight, rows)?;
    let bound = g.softplus(k);
    let ratio = g.div(norm, bound)?;
    let denom = g.max_one(ratio);
    g.div_by_scalar(weight, denom)
}

/// One learnable scalar `k_ℓ` per convolution layer.
#[derive(Clone, Debug)]
pub struct LipschitzState {
    ks: Vec<ParamId>,
}

impl LipschitzState {
    /// Registers `k_ℓ` for every learnable conv of `net`, initialized so that
    /// `SoftPlus(k_ℓ)` equals the layer's initial `‖W_ℓ‖∞`.
    pub fn register(net: &mut NetworkInstance) -> Result<Self, RegError> {
        let weights = net.conv_weights().to_vec();
        let mut ks = Vec::with_capacity(weights.len());
        for (i, w) in weights.into_iter().enumerate() {
            let t = &net.store.get(w).value;
            let n = matrix_inf_norm(t.data(), t.shape()[0]).max(1e-6);
            let id = net.store.add(format!("lipschitz.{i}"), Tensor::scalar(softplus_inverse(n)))?;
            ks.push(id);
        }
        Ok(Self { ks })
    }

    pub fn from_params(ks: Vec<ParamId>) -> Self {
        Self { ks }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.ks
    }

    /// Current bounds `SoftPlus(k_ℓ)`.
    pub fn bounds(&self, store: &ParamStore) -> Vec<f64> {
        self.ks.iter().map(|&k| softplus(store.get(k).value.item())).collect()
    }
}

impl WeightTransform for LipschitzState {
    fn transform(&self, g: &mut Graph, store: &ParamStore, conv_index: usize, weight: Var) -> Result<Var, AutodiffError> {
        let k = g.param(store, self.ks[conv_index]);
        lipschitz_normalize(g, weight, k)
    }
}

/// `λ Σ_ℓ SoftPlus(k_ℓ)²`
pub fn lipschitz_penalty(g: &mut Graph, store: &ParamStore, state: &LipschitzState, lambda: f64) -> Result<Var, AutodiffError> {
    let mut total: Option<Var> = None;
    for &k in state.params() {
        let kv = g.param(store, k);
        let sp = g.softplus(kv);
        let sq = g.sum_squares(sp);
        total = Some(match total {
            Some(t) => g.add(t, sq)?,
            None => sq,
        });
    }
    Ok(match total {
        Some(t) => g.scale(t, lambda),
        None => g.constant(Tensor::scalar(0.0)),
    })
}

/// Anisotropic TV of a `(.., 2, H, W)` output, summed over the channels.
pub fn tv_penalty(g: &mut Graph, x: Var) -> Result<Var, AutodiffError> {
    g.total_variation(x)
}

/// `λ Σ ‖θ‖²` over the given parameters.
pub fn l2_penalty(g: &mut Graph, store: &ParamStore, params: &[ParamId], lambda: f64) -> Result<Var, AutodiffError> {
    let mut total: Option<Var> = None;
    for &p in params {
        let v = g.param(store, p);
        let sq = g.sum_squares(v);
        total = Some(match total {
            Some(t) => g.add(t, sq)?,
            None => sq,
        });
    }
    Ok(match total {
        Some(t) => g.scale(t, lambda),
        None => g.constant(Tensor::scalar(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_taps_match_closed_form() {
        let t = gaussian_kernel(3, 1.0).unwrap();
        let e = (-0.5f64).exp();
        let expect = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t[0] - 0.27407).abs() < 5e-6 && (t[1] - 0.45186).abs() < 5e-6);
        // listed to five decimals; 1/(1 + 2e^-2) = 0.786986...
        let t = gaussian_kernel(3, 0.5).unwrap();
        assert!((t[0] - 0.10651).abs() < 1e-5 && (t[1] - 0.78698).abs() < 1e-5);
    }

    #[test]
    fn labels_parse_back() {
        for label in ["none", "gaussian:3:1", "gaussian:5:0.5-2", "gaussian:3:1+lip:1", "tv:0.01+l2:0.0001"] {
            let cfg: RegConfig = label.parse().unwrap();
            assert_eq!(cfg.label(), label);
        }
        assert!("gaussian:4:1".parse::<RegConfig>().is_err());
        assert!("lip:x".parse::<RegConfig>().is_err());
        assert!("dropout:0.5".parse::<RegConfig>().is_err());
    }

    #[test]
    fn gaussian_taps_symmetric_and_normalized() {
        for &(size, sigma) in &[(3, 0.3), (5, 2.0), (7, 1.1), (1, 4.0)] {
            let t = gaussian_kernel(size, sigma).unwrap();
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..size {
                assert_eq!(t[i], t[size - 1 - i]);
            }
        }
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(3, 0.0).is_err());
    }

    #[test]
    fn inf_norm_examples() {
        assert_eq!(matrix_inf_norm(&[1.0, -2.0, 3.0, 4.0], 2), 7.0);
        let eye: Vec<f64> = (0..16).map(|k| if k % 5 == 0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(matrix_inf_norm(&eye, 4), 1.0);
        let scaled: Vec<f64> = [1.0, -2.0, 3.0, 4.0].iter().map(|v| 2.5 * v).collect();
        assert_eq!(matrix_inf_norm(&scaled, 2), 17.5);
    }

    #[test]
    fn softplus_values_and_inverse() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(40.0) - 40.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        for y in [1e-4, 0.3, 1.0, 7.0, 50.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn normalization_examples() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap());
        let k = g.constant(Tensor::scalar(0.0));
        let wn = lipschitz_normalize(&mut g, w, k).unwrap();
        let ln2 = std::f64::consts::LN_2;
        for (a, b) in g.value(wn).data().iter().zip([1.0, -2.0, 3.0, 4.0]) {
            assert!((a - b * ln2 / 7.0).abs() < 1e-15);
        }
        assert!((matrix_inf_norm(g.value(wn).data(), 2) - ln2).abs() < 1e-15);

        let small = g.constant(Tensor::new(vec![2, 2], vec![0.25, -0.25, 0.1, 0.2]).unwrap());
        let same = lipschitz_normalize(&mut g, small, k).unwrap();
        assert_eq!(g.value(same).data(), &[0.25, -0.25, 0.1, 0.2]);
    }

    #[test]
    fn penalty_examples() {
        let mut store = ParamStore::new();
        let a = store.add("k0", Tensor::scalar(0.0)).unwrap();
        let b = store.add("k1", Tensor::scalar(0.0)).unwrap();
        let state = LipschitzState::from_params(vec![a, b]);
        let mut g = Graph::new();
        let p = lipschitz_penalty(&mut g, &store, &state, 1.0).unwrap();
        assert!((g.value(p).item() - 0.960906).abs() < 1e-6);
        let z = lipschitz_penalty(&mut g, &store, &state, 0.0).unwrap();
        assert_eq!(g.value(z).item(), 0.0);

        let w = store.add("w", Tensor::scalar(3.0)).unwrap();
        let l2 = l2_penalty(&mut g, &store, &[w], 1.0).unwrap();
        assert_eq!(g.value(l2).item(), 9.0);
        g.backward(l2, &mut store).unwrap();
        assert_eq!(store.get(w).grad.as_ref().unwrap()[0], 6.0);
    }

    #[test]
    fn tv_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap());
        let t = tv_penalty(&mut g, x).unwrap();
        assert_eq!(g.value(t).item(), 6.0);
        let c = g.constant(Tensor::filled(vec![1, 2, 4, 4], 0.7));
        let t = tv_penalty(&mut g, c).unwrap();
        assert_eq!(g.value(t).item(), 0.0);
        let one = g.constant(Tensor::zeros(vec![1, 1, 1, 4]));
        assert!(tv_penalty(&mut g, one).is_err());
    }

    #[test]
    fn bandlimit_constant_interior_unchanged() {
        let z = Tensor::filled(vec![1, 2, 8, 8], 0.6);
        let cfg = RegConfig {
            input_filter: InputFilter::Gaussian { size: 3, sigma: Sigma::Fixed(1.0) },
            ..RegConfig::default()
        };
        let (out, sigma) = bandlimit_input(&z, &cfg).unwrap();
        assert_eq!(sigma, Some(1.0));
        for c in 0..2 {
            for i in 1..7 {
                for j in 1..7 {
                    assert!((out.data()[c * 64 + i * 8 + j] - 0.6).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sampled_sigma_is_deterministic_and_in_range() {
        let cfg = RegConfig {
            input_filter: InputFilter::Gaussian { size: 3, sigma: Sigma::Range(0.5, 2.0) },
            seed: 42,
            ..RegConfig::default()
        };
        let s = resolve_sigma(&cfg).unwrap();
        assert!((0.5..=2.0).contains(&s));
        let z = crate::arch::make_noise_input(3, 16, 16, 1);
        let (a, sa) = bandlimit_input(&z, &cfg).unwrap();
        let (b, sb) = bandlimit_input(&z, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
