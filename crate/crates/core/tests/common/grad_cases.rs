//! Finite-difference gradient cases shared by the unit suite and the
//! acceptance runner. Every case ends in `sum(op(..) ⊙ R)` for a random
//! constant `R` unless the op is already scalar.

use std::sync::Arc;

use priorforge::arch::{build, ArchSpec, SkipPolicy, UpsamplerKind, BILINEAR_TAPS, NEAREST_TAPS};
use priorforge::autodiff::{check_gradients, combined_rel_err, AutodiffError, Graph, Padding, ParamStore, Tensor, Var};
use priorforge::data::generate_csm;
use priorforge::mri::{MriOperator, SamplingMask};
use priorforge::reg::{l2_penalty, lipschitz_normalize, lipschitz_penalty, tv_penalty, LipschitzState};
use priorforge::rng::SplitMix64;

pub const STEP: f64 = 1e-6;

fn rand_tensor(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn project(g: &mut Graph, y: Var, rng: &mut SplitMix64) -> Result<Var, AutodiffError> {
    let shape = g.shape(y).to_vec();
    let r = g.constant(rand_tensor(rng, &shape, -1.0, 1.0));
    let p = g.mul(y, r)?;
    Ok(g.sum(p))
}

type Case = Box<dyn Fn(&mut Graph, &ParamStore) -> Result<Var, AutodiffError>>;

/// Relative error of the whole gradient of one case.
fn run(store: &mut ParamStore, f: Case) -> f64 {
    combined_rel_err(&check_gradients(store, STEP, f).unwrap())
}

/// `(case name, relative error)` for every differentiable op.
pub fn all_cases(seed: u64) -> Vec<(String, f64)> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, e: f64| out.push((name.to_string(), e));

    for (stride, pad, cin, cout, k, h, w) in [(1, None, 2, 3, 3, 5, 6), (2, None, 3, 2, 3, 7, 6), (1, Some((0, 2)), 2, 2, 5, 6, 5), (2, Some((1, 0)), 1, 2, 1, 5, 5)] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[2, cin, h, w], -1.0, 1.0)).unwrap();
        let wt = s.add("w", rand_tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0)).unwrap();
        let b = s.add("b", rand_tensor(&mut rng, &[cout], -1.0, 1.0)).unwrap();
        let r = rng.next_u64();
        let padding = pad.map(|(a, c)| Padding::Explicit(a, c)).unwrap_or(Padding::SameZero);
        push(
            &format!("conv2d s{stride} k{k}"),
            run(&mut s, Box::new(move |g, s| {
                let (x, w, b) = (g.param(s, x), g.param(s, wt), g.param(s, b));
                let y = g.conv2d(x, w, Some(b), stride, padding)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[3, 2, 3, 4], -2.0, 2.0)).unwrap();
        let sc = s.add("scale", rand_tensor(&mut rng, &[2], 0.5, 1.5)).unwrap();
        let sh = s.add("shift", rand_tensor(&mut rng, &[2], -0.5, 0.5)).unwrap();
        let r = rng.next_u64();
        push(
            "batchnorm2d",
            run(&mut s, Box::new(move |g, s| {
                let (x, a, b) = (g.param(s, x), g.param(s, sc), g.param(s, sh));
                let y = g.batchnorm2d(x, a, b, 1e-5)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let a = s.add("a", rand_tensor(&mut rng, &[2, 3, 4], -2.0, 2.0)).unwrap();
        let b = s.add("b", rand_tensor(&mut rng, &[2, 3, 4], 0.5, 2.0)).unwrap();
        let r = rng.next_u64();
        push(
            "pointwise",
            run(&mut s, Box::new(move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                let sum = g.add(a, b)?;
                let diff = g.sub(a, b)?;
                let prod = g.mul(sum, diff)?;
                let q = g.div(prod, b)?;
                let r1 = g.relu(q);
                let sp = g.softplus(diff);
                let sc = g.scale(sp, -0.7);
                let y = g.add(r1, sc)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let a = s.add("a", rand_tensor(&mut rng, &[4], 0.1, 1.0)).unwrap();
        let t = s.add("t", Tensor::scalar(0.4)).unwrap();
        push(
            "scalar ops",
            run(&mut s, Box::new(move |g, s| {
                let (a, t) = (g.param(s, a), g.param(s, t));
                let n = g.sum(a);
                let r = g.div(n, t)?;
                let m = g.max_one(r);
                let y = g.div_by_scalar(a, m)?;
                let q = g.sum_squares(y);
                let small = g.scale(t, 0.5);
                let one = g.max_one(small);
                g.add(q, one)
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let a = s.add("a", rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0)).unwrap();
        let b = s.add("b", rand_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0)).unwrap();
        let r = rng.next_u64();
        push(
            "concat",
            run(&mut s, Box::new(move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                let y = g.concat_channels(a, b)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let p = s.add("pred", rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0)).unwrap();
        let tgt = rand_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let mask: Vec<f64> = (0..24).map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }).collect();
        let t2 = tgt.clone();
        push(
            "mae",
            run(&mut s, Box::new(move |g, s| {
                let p = g.param(s, p);
                let t = g.constant(tgt.clone());
                g.mae_loss(p, t, None)
            })),
        );
        push(
            "mae masked",
            run(&mut s, Box::new(move |g, s| {
                let p = g.param(s, p);
                let t = g.constant(t2.clone());
                g.mae_loss(p, t, Some(&mask))
            })),
        );
    }

    for (upx, upy, gain) in [(2, 2, 4.0), (3, 2, 1.5)] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[1, 2, 3, 4], -1.0, 1.0)).unwrap();
        let r = rng.next_u64();
        push(
            &format!("zero_insert_upsample {upx}x{upy}"),
            run(&mut s, Box::new(move |g, s| {
                let x = g.param(s, x);
                let y = g.zero_insert_upsample(x, upx, upy, gain)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    for taps in [NEAREST_TAPS.to_vec(), BILINEAR_TAPS.to_vec(), vec![0.1, 0.3, 0.2, 0.25, 0.15]] {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[2, 2, 5, 6], -1.0, 1.0)).unwrap();
        let r = rng.next_u64();
        let n = taps.len();
        push(
            &format!("fixed_lowpass_conv {n} taps"),
            run(&mut s, Box::new(move |g, s| {
                let x = g.param(s, x);
                let y = g.fixed_lowpass_conv(x, &taps)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    for k0 in [-1.0, 3.0] {
        let mut s = ParamStore::new();
        let w = s.add("w", rand_tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0)).unwrap();
        let k = s.add("k", Tensor::scalar(k0)).unwrap();
        let r = rng.next_u64();
        push(
            &format!("lipschitz_normalize k={k0}"),
            run(&mut s, Box::new(move |g, s| {
                let (w, k) = (g.param(s, w), g.param(s, k));
                let y = lipschitz_normalize(g, w, k)?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let k0 = s.add("k0", Tensor::scalar(0.3)).unwrap();
        let k1 = s.add("k1", Tensor::scalar(-1.2)).unwrap();
        let x = s.add("x", rand_tensor(&mut rng, &[1, 2, 5, 5], -1.0, 1.0)).unwrap();
        let w = s.add("w", rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0)).unwrap();
        let state = LipschitzState::from_params(vec![k0, k1]);
        push(
            "penalties",
            run(&mut s, Box::new(move |g, s| {
                let lp = lipschitz_penalty(g, s, &state, 0.7)?;
                let xv = g.param(s, x);
                let tv = tv_penalty(g, xv)?;
                let l2 = l2_penalty(g, s, &[w], 0.3)?;
                let a = g.add(lp, tv)?;
                g.add(a, l2)
            })),
        );
    }

    {
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[3, 4], -1.0, 1.0)).unwrap();
        push(
            "matrix_inf_norm",
            run(&mut s, Box::new(move |g, s| {
                let x = g.param(s, x);
                g.matrix_inf_norm(x, 3)
            })),
        );
    }

    {
        let n = 8;
        let sens = generate_csm(3, n).unwrap();
        let cols: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
        let op = Arc::new(MriOperator::new(sens, SamplingMask::from_columns(n, cols)).unwrap());
        let mut s = ParamStore::new();
        let x = s.add("x", rand_tensor(&mut rng, &[1, 2, n, n], -1.0, 1.0)).unwrap();
        let r = rng.next_u64();
        push(
            "mri linear",
            run(&mut s, Box::new(move |g, s| {
                let x = g.param(s, x);
                let y = g.linear(x, op.clone())?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }

    {
        let spec = ArchSpec::encoder_decoder(2, SkipPolicy::Full, 3, 3, 8).with_upsampler(UpsamplerKind::Bilinear);
        let mut net = build(&spec).unwrap();
        let state = LipschitzState::register(&mut net).unwrap();
        // registration puts every layer exactly on the max(1, ·) kink; move off it
        for (i, &k) in state.params().iter().enumerate() {
            let shift = if i % 2 == 0 { 0.4 } else { -0.4 };
            net.store.get_mut(k).value.data_mut()[0] += shift;
        }
        let input = net.input.clone();
        let r = rng.next_u64();
        let template = net.clone();
        let mut store = std::mem::take(&mut net.store);
        push(
            "network end to end",
            run(&mut store, Box::new(move |g, s| {
                let mut n = template.clone();
                n.store = s.clone();
                let z = g.constant(input.clone());
                let y = n.forward(g, z, Some(&state))?;
                project(g, y, &mut SplitMix64::new(r))
            })),
        );
    }
    out
}
