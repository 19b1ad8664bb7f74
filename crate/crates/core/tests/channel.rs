use cdp_authkit::channel::{acquire, copy_attack, print, AttackParams, BinarizeMode, ChannelParams, CodeLabel, Substrate};
use cdp_authkit::metrics::pearson;
use cdp_authkit::seed::derive_seed;
use cdp_authkit::template::{add_markers, generate_template};

const MARKER: usize = 6;

fn printed_original(i: u64) -> (cdp_authkit::channel::InkMap, ChannelParams) {
    let t = generate_template(derive_seed(11, "t", i), 24, 3, 0.5).unwrap();
    let framed = add_markers(&t, MARKER).unwrap();
    let p = ChannelParams::default().with_seed(derive_seed(11, "acq", i));
    (print(&framed, &p).unwrap(), p)
}

#[test]
fn ink_coverage_is_monotone_in_dot_gain() {
    let t = generate_template(5, 24, 3, 0.5).unwrap();
    let grid = [0.0, 0.1, 0.2, 0.3, 0.45, 0.6, 0.75, 0.9, 1.2, 2.0];
    for radius in [1, 2] {
        let means: Vec<f64> = grid
            .iter()
            .map(|&g| print(&t, &ChannelParams { dot_gain: g, spread_radius: radius, ..Default::default() }).unwrap().coverage.mean())
            .collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "radius {radius}: {means:?}");
    }
}

#[test]
fn reference_acquisition_beats_default_fakes() {
    for i in 0..10 {
        let (ink, p) = printed_original(i);
        let x = acquire(&ink, &p, CodeLabel::Original, "t").unwrap();
        let x_ref = acquire(&ink, &p.clone().with_seed(derive_seed(11, "ref", i)), CodeLabel::PhysicalReference, "t").unwrap();
        assert_ne!(x.image, x_ref.image);
        let own = pearson(&x.image, &x_ref.image).unwrap();
        for label in CodeLabel::FAKES {
            let mut a = AttackParams::for_label(label).unwrap();
            a.reprint.seed = derive_seed(11, label.as_str(), i);
            let fake = copy_attack(&x, &a, MARKER).unwrap();
            let other = pearson(&x.image, &fake.image).unwrap();
            assert!(own > other, "code {i} {label}: {own} vs {other}");
        }
    }
}

#[test]
fn coarse_fakes_are_darker_than_close_fakes() {
    for i in 0..20 {
        let (ink, p) = printed_original(i);
        let x = acquire(&ink, &p, CodeLabel::Original, "t").unwrap();
        for substrate in [Substrate::White, Substrate::Gray] {
            let f1 = copy_attack(&x, &AttackParams::fake1(substrate), MARKER).unwrap();
            let f2 = copy_attack(&x, &AttackParams::fake2(substrate), MARKER).unwrap();
            assert!(f2.image.mean() < f1.image.mean(), "code {i} {substrate:?}");
            assert!(f2.label.is_fake());
        }
    }
}

#[test]
fn fixed_threshold_must_be_inside_unit_interval() {
    let (ink, p) = printed_original(0);
    let x = acquire(&ink, &p, CodeLabel::Original, "t").unwrap();
    for t in [0.0, 1.0, -0.5] {
        let a = AttackParams { binarize_mode: BinarizeMode::Fixed(t), ..AttackParams::fake1(Substrate::White) };
        assert!(copy_attack(&x, &a, MARKER).is_err(), "threshold {t}");
    }
}

#[test]
fn acquisition_is_seed_deterministic() {
    let (ink, p) = printed_original(3);
    let colour = ChannelParams { color: true, ..p.clone() };
    for params in [p, colour] {
        let a = acquire(&ink, &params, CodeLabel::Original, "t").unwrap();
        let b = acquire(&ink, &params, CodeLabel::Original, "t").unwrap();
        assert_eq!(a, b);
        assert!(a.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        if let Some(planes) = &a.planes {
            assert_eq!(planes.len(), 3);
            assert!(planes.iter().flat_map(|p| p.as_slice()).all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn invalid_channel_parameters_are_rejected() {
    let t = generate_template(0, 4, 2, 0.5).unwrap();
    let bad = [
        ChannelParams { ink_albedo: 0.96, ..Default::default() },
        ChannelParams { blur_sigma: -1.0, ..Default::default() },
        ChannelParams { gamma: 0.0, ..Default::default() },
        ChannelParams { substrate_albedo: 1.5, ..Default::default() },
    ];
    for p in bad {
        assert!(print(&t, &p).is_err(), "{p:?}");
    }
}
