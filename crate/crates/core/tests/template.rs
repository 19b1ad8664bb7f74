use cdp_authkit::metrics::to_symbols;
use cdp_authkit::oracles::binomial_central_interval;
use cdp_authkit::template::{add_markers, crop_to_cdp, generate_template};
use cdp_authkit::Error;

#[test]
fn seven_is_reproducible_at_120_pixels() {
    let a = generate_template(7, 24, 5, 0.5).unwrap();
    let b = generate_template(7, 24, 5, 0.5).unwrap();
    assert_eq!(a.pixels.shape(), (120, 120));
    assert_eq!(a, b);
}

#[test]
fn upsampling_factor_does_not_change_symbols() {
    let one = generate_template(7, 24, 1, 0.5).unwrap();
    let three = generate_template(7, 24, 3, 0.5).unwrap();
    assert_eq!(one.symbols, three.symbols);
    assert_eq!(one.pixels, one.symbols);
    assert_eq!(three.pixels, three.symbols.upsample(3));
}

#[test]
fn black_count_is_inside_central_binomial_interval() {
    let t = generate_template(3, 32, 1, 0.5).unwrap();
    let (lo, hi) = binomial_central_interval(1024, 0.5, 0.999);
    let black = t.symbols.count_ones() as u64;
    assert!((lo..=hi).contains(&black), "{black} outside [{lo}, {hi}]");
    // the exact interval is far tighter than a normal-approximation guess
    assert!(lo > 409 && hi < 615);
}

#[test]
fn block_majority_recovers_symbols() {
    for seed in 0..20 {
        let t = generate_template(seed, 12, 4, 0.3).unwrap();
        assert_eq!(to_symbols(&t.pixels, 4).unwrap(), t.symbols);
    }
}

#[test]
fn marker_blocks_on_a_120_pixel_template() {
    let t = generate_template(1, 24, 5, 0.5).unwrap();
    let framed = add_markers(&t, 10).unwrap();
    let side = framed.pixels.rows();
    assert_eq!(side, 140);
    for (r0, c0) in [(0, 0), (0, side - 10), (side - 10, 0), (side - 10, side - 10)] {
        assert_eq!(framed.pixels.window(r0, c0, 10, 10).count_ones(), 100);
    }
    let cropped = crop_to_cdp(&framed).unwrap();
    assert_eq!(cropped.pixels.shape(), (120, 120));
    assert_eq!(cropped, t);
}

#[test]
fn zero_width_markers_and_crop_are_identities() {
    let t = generate_template(2, 8, 2, 0.5).unwrap();
    assert_eq!(add_markers(&t, 0).unwrap(), t);
    assert_eq!(crop_to_cdp(&t).unwrap(), t);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(matches!(generate_template(0, 1, 3, 0.5), Err(Error::Param(_))));
    assert!(matches!(generate_template(0, 4, 0, 0.5), Err(Error::Param(_))));
    assert!(matches!(generate_template(0, 4, 3, 1.0), Err(Error::Param(_))));
    let t = generate_template(0, 4, 1, 0.5).unwrap();
    assert!(matches!(add_markers(&t, 3), Err(Error::Param(_))));
}
