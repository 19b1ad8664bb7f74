use cdp_authkit::channel::{acquire, print, ChannelParams, CodeLabel};
use cdp_authkit::decision::{calibrate, rule_one_metric, rule_two_metric, Thresholds};
use cdp_authkit::experiment::split_indices;
use cdp_authkit::grid::{Grid, Image};
use cdp_authkit::metrics::{binarize, hamming_symbols, lp_distances, otsu_threshold, pearson, symbol_distance, to_symbols};
use cdp_authkit::nn::log_softmax;
use cdp_authkit::ocsvm::fit_ocsvm;
use cdp_authkit::oracles::{hamming_naive, lp_naive, otsu_exhaustive, pearson_naive};
use cdp_authkit::supervised::estimate_mi_lower_bound;
use cdp_authkit::template::{add_markers, crop_to_cdp, generate_template, Template};
use proptest::prelude::*;

fn image(side: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0u8..=255, side * side).prop_map(move |v| Grid::from_vec(side, side, v.into_iter().map(|b| b as f64 / 255.0).collect()).unwrap())
}

fn sized_image() -> impl Strategy<Value = Image> {
    (2usize..24).prop_flat_map(image)
}

fn template() -> impl Strategy<Value = Template> {
    (any::<u64>(), 2usize..12, 1usize..5, 0.05f64..0.95).prop_map(|(s, n, px, p)| generate_template(s, n, px, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn otsu_equals_exhaustive_oracle(img in sized_image()) {
        prop_assert_eq!(otsu_threshold(&img).ok(), otsu_exhaustive(&img).ok());
    }

    #[test]
    fn real_metrics_match_naive_loops((a, b) in (2usize..20).prop_flat_map(|s| (image(s), image(s)))) {
        let (l1, l2) = lp_distances(&a, &b).unwrap();
        let (n1, n2) = lp_naive(a.as_slice(), b.as_slice());
        prop_assert!((l1 - n1).abs() < 1e-12 && (l2 - n2).abs() < 1e-12);
        let (r1, r2) = lp_distances(&b, &a).unwrap();
        prop_assert_eq!((l1, l2), (r1, r2));
        prop_assert!(l1 >= 0.0 && l2 >= l1 - 1e-15);
        if let Ok(p) = pearson(&a, &b) {
            prop_assert!((p - pearson_naive(a.as_slice(), b.as_slice())).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&p));
        }
    }

    #[test]
    fn hamming_matches_oracle_and_is_bounded(t in template(), seed in any::<u64>()) {
        let noise = generate_template(seed, t.n_sym() * t.symbol_px, 1, 0.5).unwrap().symbols;
        let d = hamming_symbols(&noise, &t).unwrap();
        prop_assert_eq!(d, hamming_naive(&noise, &t.symbols, t.symbol_px));
        prop_assert!(d <= t.n_sym() * t.n_sym());
        prop_assert_eq!(hamming_symbols(&t.pixels, &t).unwrap(), 0);
        let other = to_symbols(&noise, t.symbol_px).unwrap();
        prop_assert_eq!(symbol_distance(&other, &t.symbols).unwrap(), symbol_distance(&t.symbols, &other).unwrap());
    }

    #[test]
    fn upsampling_is_exact_and_markers_round_trip(t in template(), w in 0usize..6) {
        prop_assert_eq!(to_symbols(&t.pixels, t.symbol_px).unwrap(), t.symbols.clone());
        if 2 * w <= t.cdp_px() {
            let framed = add_markers(&t, w).unwrap();
            prop_assert_eq!(crop_to_cdp(&framed).unwrap(), t);
        }
    }

    #[test]
    fn rotations_form_a_cyclic_group(t in template(), q in 0usize..8) {
        let r = t.rotate90(q).unwrap().rotate90(4 - q % 4).unwrap();
        prop_assert_eq!(r, t);
    }

    #[test]
    fn channel_outputs_stay_in_unit_range(t in template(), dot_gain in 0.0f64..2.0, noise in 0.0f64..0.3, gamma in 0.3f64..3.0, seed in any::<u64>()) {
        let p = ChannelParams { dot_gain, noise_sigma: noise, gamma, seed, ..Default::default() };
        let ink = print(&t, &p).unwrap();
        prop_assert!(ink.coverage.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let x = acquire(&ink, &p, CodeLabel::Original, "t").unwrap();
        prop_assert!(x.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(&x, &acquire(&ink, &p, CodeLabel::Original, "t").unwrap());
    }

    #[test]
    fn binarize_marks_dark_pixels(img in sized_image(), threshold in 0.0f64..1.1) {
        let b = binarize(&img, threshold);
        for (v, bit) in img.as_slice().iter().zip(b.as_slice()) {
            prop_assert_eq!(*bit == 1, *v < threshold);
        }
    }

    #[test]
    fn ocsvm_dual_is_feasible(pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..25), nu in 0.05f64..1.0, gamma in 0.05f64..2.0) {
        let fit = fit_ocsvm(&pts, nu, gamma, 1e-6).unwrap();
        let cap = 1.0 / (nu * pts.len() as f64);
        prop_assert!((fit.alpha_full.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(fit.alpha_full.iter().all(|a| *a >= -1e-8 && *a <= cap + 1e-8));
        prop_assert!(fit.model.kkt_violation < 1e-6);
    }

    #[test]
    fn calibrated_thresholds_accept_all_validation_originals(h in prop::collection::vec(0usize..50, 1..30), seed in any::<u64>()) {
        let r: Vec<f64> = h.iter().enumerate().map(|(i, _)| ((seed.wrapping_add(i as u64 * 7919)) % 1000) as f64 * 1e-5).collect();
        let t = calibrate(&h, &r).unwrap();
        for (a, b) in h.iter().zip(&r) {
            prop_assert!(rule_two_metric(*a, *b, t).accepted());
            prop_assert!(rule_one_metric(*a, t.gamma1).accepted());
        }
    }

    #[test]
    fn raising_thresholds_never_rejects(h in 0usize..40, r in 0.0f64..0.01, g1 in 0usize..40, g2 in 0.0f64..0.01, d1 in 0usize..5, d2 in 0.0f64..0.01) {
        let t = Thresholds { gamma1: g1, gamma2: g2 };
        let looser = Thresholds { gamma1: g1 + d1, gamma2: g2 + d2 };
        prop_assert!(!rule_two_metric(h, r, t).accepted() || rule_two_metric(h, r, looser).accepted());
    }

    #[test]
    fn mi_bound_never_exceeds_label_entropy(rows in prop::collection::vec((0usize..4, prop::collection::vec(-5.0f64..5.0, 4)), 1..40)) {
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let lp: Vec<Vec<f64>> = rows.iter().map(|r| log_softmax(&r.1)).collect();
        let est = estimate_mi_lower_bound(&labels, &lp).unwrap();
        prop_assert!(est.lower_bound <= est.h_c + 1e-12);
        prop_assert!(est.h_c <= 4f64.ln() + 1e-9);
    }

    #[test]
    fn splits_have_forty_ten_fifty_proportions(n in 1usize..400, seed in any::<u64>()) {
        let s = split_indices(n, seed);
        let count = |k| s.iter().filter(|x| **x == k).count() as f64;
        use cdp_authkit::experiment::Split;
        prop_assert!((count(Split::Train) - 0.4 * n as f64).abs() <= 1.0);
        prop_assert!((count(Split::Val) - 0.1 * n as f64).abs() <= 1.0);
        prop_assert_eq!(s.len(), n);
    }
}
