use super::upsample::{bilinear_transposed_init, make_upsampler, Upsampler};
use super::{ArchError, ArchSpec, Family, SkipPolicy, UpsamplerKind};
use crate::autodiff::{AutodiffError, Graph, Padding, ParamId, ParamStore, Tensor, Var};
use crate::rng::SplitMix64;

/// Channels carried by each skip branch (1×1 projection of the encoder feature).
pub const SKIP_CHANNELS: usize = 4;
/// Layer count of the decoder-only families.
pub const DECODER_LAYERS: usize = 7;
/// Upsampling layers in the decoder-only families never exceed this.
pub const MAX_DECODER_UPSAMPLES: usize = 6;
const BN_EPS: f64 = 1e-5;

/// Hook applied to every learnable convolution weight before use.
pub trait WeightTransform {
    fn transform(&self, g: &mut Graph, store: &ParamStore, conv_index: usize, weight: Var) -> Result<Var, AutodiffError>;
}

#[derive(Clone, Debug)]
struct Conv {
    weight: ParamId,
    bias: Option<ParamId>,
    stride: usize,
    index: usize,
}

#[derive(Clone, Debug)]
struct Norm {
    scale: ParamId,
    shift: ParamId,
}

#[derive(Clone, Debug)]
struct Up {
    fixed: Upsampler,
    learnable: Option<Conv>,
}

#[derive(Clone, Debug)]
struct EncLevel {
    down: (Conv, Norm),
    conv: (Conv, Norm),
    skip: Option<(Conv, Norm)>,
}

#[derive(Clone, Debug)]
struct DecLevel {
    up: Up,
    conv: (Conv, Norm),
    mix: (Conv, Norm),
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    up: Option<Up>,
    conv: Conv,
    norm: Norm,
}

#[derive(Clone, Debug)]
enum Body {
    EncoderDecoder { enc: Vec<EncLevel>, dec: Vec<DecLevel> },
    Decoder { layers: Vec<DecoderLayer> },
}

/// A built network: parameters, fixed input, and forward structure.
#[derive(Clone, Debug)]
pub struct NetworkInstance {
    pub spec: ArchSpec,
    pub store: ParamStore,
    /// The fixed network input `z`, shape `(1, C, H, W)`.
    pub input: Tensor,
    net_params: Vec<ParamId>,
    conv_weights: Vec<ParamId>,
    body: Body,
    head: Conv,
    concat_count: usize,
}

struct Builder {
    store: ParamStore,
    rng: SplitMix64,
    net_params: Vec<ParamId>,
    conv_weights: Vec<ParamId>,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self {
            store: ParamStore::new(),
            rng: SplitMix64::derive(seed, 0x5745_4947_4854),
            net_params: Vec::new(),
            conv_weights: Vec::new(),
        }
    }

    fn add(&mut self, name: String, t: Tensor) -> Result<ParamId, ArchError> {
        let id = self.store.add(name, t)?;
        self.net_params.push(id);
        Ok(id)
    }

    /// He-style uniform fan-in init, `U(-√(6/fan_in), √(6/fan_in))`; zero bias.
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, bias: bool) -> Result<Conv, ArchError> {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let data: Vec<f64> = (0..cout * cin * k * k).map(|_| self.rng.uniform(-bound, bound)).collect();
        self.conv_with(name, Tensor::new(vec![cout, cin, k, k], data)?, bias, stride)
    }

    fn conv_with(&mut self, name: &str, weight: Tensor, bias: bool, stride: usize) -> Result<Conv, ArchError> {
        let cout = weight.shape()[0];
        let w = self.add(format!("{name}.weight"), weight)?;
        let b = if bias { Some(self.add(format!("{name}.bias"), Tensor::zeros(vec![cout]))?) } else { None };
        let index = self.conv_weights.len();
        self.conv_weights.push(w);
        Ok(Conv { weight: w, bias: b, stride, index })
    }

    fn norm(&mut self, name: &str, c: usize) -> Result<Norm, ArchError> {
        Ok(Norm {
            scale: self.add(format!("{name}.scale"), Tensor::filled(vec![c], 1.0))?,
            shift: self.add(format!("{name}.shift"), Tensor::zeros(vec![c]))?,
        })
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<(Conv, Norm), ArchError> {
        let c = self.conv(&format!("{name}.conv"), cin, cout, k, stride, true)?;
        let n = self.norm(&format!("{name}.bn"), cout)?;
        Ok((c, n))
    }

    fn up(&mut self, name: &str, kind: UpsamplerKind, channels: usize, k: usize) -> Result<Up, ArchError> {
        let fixed = make_upsampler(kind, 2)?;
        let learnable = if fixed.is_learnable() {
            let k = k.max(3);
            let w = Tensor::new(vec![channels, channels, k, k], bilinear_transposed_init(channels, k))?;
            Some(self.conv_with(&format!("{name}.up"), w, false, 1)?)
        } else {
            None
        };
        Ok(Up { fixed, learnable })
    }
}

/// Fixed noise input: i.i.d. `U(0, 1)` entries from the seeded generator.
pub fn make_noise_input(channels: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::derive(seed, 0x494E_5055_54);
    let data = (0..channels * h * w).map(|_| rng.next_f64()).collect();
    Tensor::new(vec![1, channels, h, w], data).expect("sized")
}

/// Which encoder levels (1-based) carry a skip branch.
pub fn skip_levels(depth: usize, policy: SkipPolicy) -> Vec<usize> {
    match policy {
        SkipPolicy::Zero => Vec::new(),
        SkipPolicy::Full => (1..=depth).collect(),
        // the ⌈d/2⌉ deepest levels
        SkipPolicy::Half => (depth - depth.div_ceil(2) + 1..=depth).collect(),
    }
}

/// Isotropic encoder-decoder: `d` stride-2 encoder levels, mirrored decoder
/// levels with skip concatenation, and a linear 1×1 head to two channels.
pub fn build_encoder_decoder(spec: &ArchSpec) -> Result<NetworkInstance, ArchError> {
    if spec.family != Family::EncoderDecoder {
        return Err(ArchError::Invalid { field: "family", msg: "expected encoder-decoder".into() });
    }
    spec.validate()?;
    let (d, w, k, n) = (spec.depth, spec.width, spec.kernel, spec.size);
    if d >= usize::BITS as usize || n % (1usize << d) != 0 {
        return Err(ArchError::Invalid {
            field: "size",
            msg: format!("output size {n} is not divisible by 2^{d}"),
        });
    }
    let skips = skip_levels(d, spec.skips);
    let mut b = Builder::new(spec.seed);
    let mut enc = Vec::with_capacity(d);
    for lvl in 1..=d {
        let down = b.block(&format!("enc{lvl}.down"), w, w, k, 2)?;
        let conv = b.block(&format!("enc{lvl}.body"), w, w, k, 1)?;
        let skip = if skips.contains(&lvl) { Some(b.block(&format!("skip{lvl}"), w, SKIP_CHANNELS, 1, 1)?) } else { None };
        enc.push(EncLevel { down, conv, skip });
    }
    let mut dec = Vec::with_capacity(d);
    for lvl in (1..=d).rev() {
        let up = b.up(&format!("dec{lvl}"), spec.upsampler, w, k)?;
        let cin = if skips.contains(&lvl) { w + SKIP_CHANNELS } else { w };
        let conv = b.block(&format!("dec{lvl}.body"), cin, w, k, 1)?;
        let mix = b.block(&format!("dec{lvl}.mix"), w, w, 1, 1)?;
        dec.push(DecLevel { up, conv, mix });
    }
    let head = b.conv("head", w, 2, 1, 1, true)?;
    let input = make_noise_input(w, n, n, spec.seed);
    Ok(NetworkInstance {
        spec: spec.clone(),
        store: b.store,
        input,
        net_params: b.net_params,
        conv_weights: b.conv_weights,
        body: Body::EncoderDecoder { enc, dec },
        head,
        concat_count: skips.len(),
    })
}

/// Number of upsampling layers in the decoder-only families: as many as
/// possible up to six while the input stays at least 4×4.
pub fn decoder_upsample_count(size: usize, upsampler: UpsamplerKind) -> usize {
    if upsampler == UpsamplerKind::None {
        return 0;
    }
    let mut u = 0;
    while u < MAX_DECODER_UPSAMPLES && size.is_multiple_of(1 << (u + 1)) && size >> (u + 1) >= 4 {
        u += 1;
    }
    u
}

/// Seven-layer decoder-only network (conv-decoder: 3×3; deep-decoder: 1×1),
/// upsampling ahead of the first `u` layers.
pub fn build_decoder(spec: &ArchSpec) -> Result<NetworkInstance, ArchError> {
    if spec.family == Family::EncoderDecoder {
        return Err(ArchError::Invalid { field: "family", msg: "expected a decoder-only family".into() });
    }
    spec.validate()?;
    let (w, n) = (spec.width, spec.size);
    let k = if spec.family == Family::DeepDecoder { 1 } else { spec.kernel };
    let ups = decoder_upsample_count(n, spec.upsampler);
    if spec.upsampler != UpsamplerKind::None && ups == 0 {
        return Err(ArchError::Invalid {
            field: "size",
            msg: format!("output size {n} is not divisible by the cumulative upsampling factor"),
        });
    }
    let mut b = Builder::new(spec.seed);
    let mut layers = Vec::with_capacity(DECODER_LAYERS);
    for l in 0..DECODER_LAYERS {
        let up = if l < ups { Some(b.up(&format!("layer{l}"), spec.upsampler, w, spec.kernel.max(3))?) } else { None };
        let conv = b.conv(&format!("layer{l}.conv"), w, w, k, 1, true)?;
        let norm = b.norm(&format!("layer{l}.bn"), w)?;
        layers.push(DecoderLayer { up, conv, norm });
    }
    let head = b.conv("head", w, 2, 1, 1, true)?;
    let side = n >> ups;
    let input = make_noise_input(w, side, side, spec.seed);
    Ok(NetworkInstance {
        spec: spec.clone(),
        store: b.store,
        input,
        net_params: b.net_params,
        conv_weights: b.conv_weights,
        body: Body::Decoder { layers },
        head,
        concat_count: 0,
    })
}

/// Builds any family.
pub fn build(spec: &ArchSpec) -> Result<NetworkInstance, ArchError> {
    match spec.family {
        Family::EncoderDecoder => build_encoder_decoder(spec),
        Family::ConvDecoder | Family::DeepDecoder => build_decoder(spec),
    }
}

struct Ctx<'a> {
    store: &'a ParamStore,
    transform: Option<&'a dyn WeightTransform>,
}

impl Ctx<'_> {
    fn conv(&self, g: &mut Graph, c: &Conv, x: Var) -> Result<Var, AutodiffError> {
        let mut w = g.param(self.store, c.weight);
        if let Some(t) = self.transform {
            w = t.transform(g, self.store, c.index, w)?;
        }
        let b = c.bias.map(|b| g.param(self.store, b));
        g.conv2d(x, w, b, c.stride, Padding::SameZero)
    }

    fn norm(&self, g: &mut Graph, n: &Norm, x: Var) -> Result<Var, AutodiffError> {
        let s = g.param(self.store, n.scale);
        let t = g.param(self.store, n.shift);
        g.batchnorm2d(x, s, t, BN_EPS)
    }

    /// conv → BN → ReLU
    fn block(&self, g: &mut Graph, (c, n): &(Conv, Norm), x: Var) -> Result<Var, AutodiffError> {
        let y = self.conv(g, c, x)?;
        let y = self.norm(g, n, y)?;
        Ok(g.relu(y))
    }

    fn up(&self, g: &mut Graph, u: &Up, x: Var) -> Result<Var, AutodiffError> {
        let y = u.fixed.apply(g, x)?;
        match &u.learnable {
            Some(c) => self.conv(g, c, y),
            None => Ok(y),
        }
    }
}

impl NetworkInstance {
    /// Runs the network on `input` (normally a constant holding [`Self::input`]).
    /// Output shape `(1, 2, N, N)`: real and imaginary planes.
    pub fn forward(&self, g: &mut Graph, input: Var, transform: Option<&dyn WeightTransform>) -> Result<Var, AutodiffError> {
        let ctx = Ctx { store: &self.store, transform };
        let features = match &self.body {
            Body::EncoderDecoder { enc, dec } => {
                let mut skips = Vec::with_capacity(enc.len());
                let mut x = input;
                for lvl in enc {
                    skips.push(match &lvl.skip {
                        Some(s) => Some(ctx.block(g, s, x)?),
                        None => None,
                    });
                    x = ctx.block(g, &lvl.down, x)?;
                    x = ctx.block(g, &lvl.conv, x)?;
                }
                for (lvl, skip) in dec.iter().zip(skips.into_iter().rev()) {
                    x = ctx.up(g, &lvl.up, x)?;
                    if let Some(s) = skip {
                        x = g.concat_channels(x, s)?;
                    }
                    x = ctx.block(g, &lvl.conv, x)?;
                    x = ctx.block(g, &lvl.mix, x)?;
                }
                x
            }
            Body::Decoder { layers } => {
                let mut x = input;
                for l in layers {
                    if let Some(u) = &l.up {
                        x = ctx.up(g, u, x)?;
                    }
                    x = ctx.conv(g, &l.conv, x)?;
                    x = g.relu(x);
                    x = ctx.norm(g, &l.norm, x)?;
                }
                x
            }
        };
        ctx.conv(g, &self.head, features)
    }

    /// Forward pass on the stored input in a throwaway graph.
    pub fn evaluate(&self, transform: Option<&dyn WeightTransform>) -> Result<Tensor, AutodiffError> {
        let mut g = Graph::new();
        let z = g.constant(self.input.clone());
        let y = self.forward(&mut g, z, transform)?;
        Ok(g.value(y).clone())
    }

    /// Trainable network parameters (excludes anything registered later, such
    /// as Lipschitz constants).
    pub fn net_params(&self) -> &[ParamId] {
        &self.net_params
    }

    /// Learnable convolution weights in conv-index order.
    pub fn conv_weights(&self) -> &[ParamId] {
        &self.conv_weights
    }

    /// Output head weight and bias.
    pub fn head_params(&self) -> (ParamId, Option<ParamId>) {
        (self.head.weight, self.head.bias)
    }

    pub fn concat_count(&self) -> usize {
        self.concat_count
    }

    /// Zeroes the output head so the initial output is identically zero.
    pub fn zero_output_head(&mut self) {
        let (w, b) = self.head_params();
        self.store.get_mut(w).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        if let Some(b) = b {
            self.store.get_mut(b).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Sum of element counts over the network's trainable parameters. Frozen
/// interpolation taps are not parameters and are never counted.
pub fn count_params(net: &NetworkInstance) -> usize {
    net.store.numel(net.net_params())
}
