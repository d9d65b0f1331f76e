use priorforge::arch::{
    build, count_params, decoder_upsample_count, make_noise_input, ArchSpec, Family, SkipPolicy, UpsamplerKind,
};
use priorforge::autodiff::{Graph, Padding, ParamStore, Tensor};

fn within(count: usize, target: f64, tol: f64) -> bool {
    ((count as f64 - target) / target).abs() <= tol
}

#[test]
fn encoder_decoder_counts_match_reported_sizes() {
    let cases = [
        (ArchSpec::encoder_decoder(2, SkipPolicy::Full, 64, 3, 64), 0.24e6),
        (ArchSpec::encoder_decoder(5, SkipPolicy::Full, 256, 3, 64), 9.3e6),
        (ArchSpec::encoder_decoder(8, SkipPolicy::Full, 64, 3, 256), 0.95e6),
    ];
    for (spec, target) in cases {
        let n = count_params(&build(&spec).unwrap());
        assert!(within(n, target, 0.3), "{}: {n} vs {target}", spec.label());
    }
}

#[test]
fn decoder_counts_match_reported_sizes() {
    let dd = count_params(&build(&ArchSpec::deep_decoder(256, 64)).unwrap());
    assert!(within(dd, 0.47e6, 0.3), "{dd}");
    let cd = count_params(&build(&ArchSpec::conv_decoder(256, 64)).unwrap());
    assert!(within(cd, 4.1e6, 0.3), "{cd}");
}

#[test]
fn single_layer_counts() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::zeros(vec![64, 64, 3, 3])).unwrap();
    let b = store.add("b", Tensor::zeros(vec![64])).unwrap();
    assert_eq!(store.numel(&[w, b]), 36_928);
    let w = store.add("w1", Tensor::zeros(vec![256, 256, 1, 1])).unwrap();
    let b = store.add("b1", Tensor::zeros(vec![256])).unwrap();
    assert_eq!(store.numel(&[w, b]), 65_792);
}

#[test]
fn output_shape_for_every_family_and_upsampler() {
    let kinds = [
        UpsamplerKind::Nearest,
        UpsamplerKind::Bilinear,
        UpsamplerKind::L100,
        UpsamplerKind::Transposed,
    ];
    for kind in kinds {
        let specs = [
            ArchSpec::encoder_decoder(2, SkipPolicy::Full, 8, 3, 16).with_upsampler(kind),
            ArchSpec::encoder_decoder(3, SkipPolicy::Half, 4, 5, 16).with_upsampler(kind),
            ArchSpec::conv_decoder(4, 16).with_upsampler(kind),
            ArchSpec::deep_decoder(4, 16).with_upsampler(kind),
        ];
        for spec in specs {
            let net = build(&spec).unwrap();
            let out = net.evaluate(None).unwrap();
            assert_eq!(out.shape(), &[1, 2, 16, 16], "{} {kind}", spec.label());
            assert!(out.data().iter().all(|v| v.is_finite()));
        }
    }
    let net = build(&ArchSpec::encoder_decoder(2, SkipPolicy::Full, 64, 3, 64)).unwrap();
    assert_eq!(net.evaluate(None).unwrap().shape(), &[1, 2, 64, 64]);
}

#[test]
fn deep_decoder_without_upsampling_builds() {
    let spec = ArchSpec::deep_decoder(4, 16).with_upsampler(UpsamplerKind::None);
    let net = build(&spec).unwrap();
    assert_eq!(net.input.shape(), &[1, 4, 16, 16]);
    assert_eq!(net.evaluate(None).unwrap().shape(), &[1, 2, 16, 16]);
}

#[test]
fn decoder_input_extent() {
    assert_eq!(decoder_upsample_count(64, UpsamplerKind::Nearest), 4);
    assert_eq!(decoder_upsample_count(256, UpsamplerKind::Bilinear), 6);
    assert_eq!(decoder_upsample_count(320, UpsamplerKind::Bilinear), 6);
    assert_eq!(decoder_upsample_count(64, UpsamplerKind::None), 0);
    let net = build(&ArchSpec::conv_decoder(4, 64)).unwrap();
    assert_eq!(net.input.shape(), &[1, 4, 4, 4]);
}

#[test]
fn concat_counts_follow_skip_policy() {
    for d in 1usize..=5 {
        for (policy, expect) in [(SkipPolicy::Zero, 0), (SkipPolicy::Full, d), (SkipPolicy::Half, d.div_ceil(2))] {
            let net = build(&ArchSpec::encoder_decoder(d, policy, 2, 3, 32)).unwrap();
            assert_eq!(net.concat_count(), expect, "d={d} {policy}");
        }
    }
}

#[test]
fn size_must_be_divisible() {
    assert!(build(&ArchSpec::encoder_decoder(3, SkipPolicy::Zero, 2, 3, 20)).is_err());
    assert!(build(&ArchSpec::encoder_decoder(2, SkipPolicy::Zero, 2, 4, 16)).is_err());
    assert!(build(&ArchSpec::conv_decoder(2, 6)).is_err());
}

#[test]
fn forward_is_deterministic_given_seed() {
    let spec = ArchSpec::encoder_decoder(2, SkipPolicy::Full, 4, 3, 16).with_seed(9);
    let a = build(&spec).unwrap().evaluate(None).unwrap();
    let b = build(&spec).unwrap().evaluate(None).unwrap();
    assert_eq!(a, b);
    let c = build(&spec.clone().with_seed(10)).unwrap().evaluate(None).unwrap();
    assert_ne!(a, c);
}

#[test]
fn parameter_names_unique() {
    let net = build(&ArchSpec::encoder_decoder(3, SkipPolicy::Full, 4, 3, 16)).unwrap();
    let mut names: Vec<&str> = net.store.iter().map(|(_, p)| p.name.as_str()).collect();
    let n = names.len();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), n);
}

#[test]
fn noise_input_statistics() {
    let z = make_noise_input(10, 100, 100, 4);
    assert_eq!(z, make_noise_input(10, 100, 100, 4));
    assert!(z.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    let mean = z.data().iter().sum::<f64>() / z.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn labels_round_trip() {
    for label in ["A_2_full_64_3", "A_8_half_128_5", "A_4_zero_32_3", "conv-decoder_256", "deep-decoder_128"] {
        let spec = ArchSpec::parse_label(label, 64).unwrap();
        assert_eq!(spec.label(), label);
    }
    assert_eq!(ArchSpec::parse_label("deep-decoder_64", 64).unwrap().family, Family::DeepDecoder);
    assert!(ArchSpec::parse_label("A_2_some_64_3", 64).is_err());
    assert!(ArchSpec::parse_label("B_2_full_64_3", 64).is_err());
}

#[test]
fn conv_example_from_hand_convolution() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(vec![1, 1, 3, 3], 1.0));
    let w = g.constant(Tensor::filled(vec![1, 1, 3, 3], 1.0));
    let y = g.conv2d(x, w, None, 1, Padding::SameZero).unwrap();
    assert_eq!(g.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
}
