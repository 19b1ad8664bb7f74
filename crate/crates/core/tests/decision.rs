use cdp_authkit::decision::{calibrate, error_rates, rule_one_metric, rule_two_metric, rule_two_metric_or, Thresholds, Verdict};
use cdp_authkit::seed::derived_rng;
use rand::Rng;

const PAPER: Thresholds = Thresholds { gamma1: 2, gamma2: 0.0017 };

#[test]
fn one_metric_rule_examples() {
    assert_eq!(rule_one_metric(0, 2), Verdict::Accept);
    assert_eq!(rule_one_metric(2, 2), Verdict::Accept);
    assert_eq!(rule_one_metric(3, 2), Verdict::Reject);
}

#[test]
fn two_metric_rule_examples() {
    assert_eq!(rule_two_metric(1, 0.001, PAPER), Verdict::Accept);
    assert_eq!(rule_two_metric(1, 0.002, PAPER), Verdict::Reject);
    assert_eq!(rule_two_metric(3, 0.002, PAPER), Verdict::Reject);
    assert_eq!(rule_two_metric(2, 0.0017, PAPER), Verdict::Accept);
    // the alternative completion accepts mixed cases
    assert_eq!(rule_two_metric_or(1, 0.002, PAPER), Verdict::Accept);
    assert_eq!(rule_two_metric_or(3, 0.002, PAPER), Verdict::Reject);
}

#[test]
fn calibration_examples() {
    assert_eq!(calibrate(&[0, 1, 2], &[0.0005, 0.0017, 0.001]).unwrap(), PAPER);
    assert_eq!(calibrate(&[0, 0], &[0.0, 0.0]).unwrap(), Thresholds { gamma1: 0, gamma2: 0.0 });
    assert!(calibrate(&[], &[]).is_err());
    assert!(calibrate(&[1, 2], &[0.1]).is_err());
}

#[test]
fn calibration_is_tight_and_monotone() {
    let mut rng = derived_rng(3, "calibration", 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let h: Vec<usize> = (0..n).map(|_| rng.gen_range(0..30)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.01)).collect();
        let t = calibrate(&h, &r).unwrap();
        let misses = |t: Thresholds| h.iter().zip(&r).filter(|(a, b)| !rule_two_metric(**a, **b, t).accepted()).count();
        assert_eq!(misses(t), 0);
        if t.gamma1 > 0 {
            assert!(misses(Thresholds { gamma1: t.gamma1 - 1, ..t }) > 0);
        }
        if t.gamma2 > 0.0 {
            let below = f64::from_bits(t.gamma2.to_bits() - 1);
            assert!(misses(Thresholds { gamma2: below, ..t }) > 0);
        }
        // raising thresholds never rejects a probe that was accepted
        let looser = Thresholds { gamma1: t.gamma1 + rng.gen_range(0..3), gamma2: t.gamma2 + rng.gen_range(0.0..0.01) };
        let (ph, pr) = (rng.gen_range(0..40), rng.gen_range(0.0..0.02));
        if rule_two_metric(ph, pr, t).accepted() {
            assert!(rule_two_metric(ph, pr, looser).accepted());
        }
    }
}

#[test]
fn binary_rate_arithmetic() {
    let mut outcomes = vec![(true, true); 148];
    outcomes.extend([(true, false), (true, false)]);
    outcomes.extend(vec![(false, false); 600]);
    let (p_miss, p_fa) = error_rates(&outcomes).unwrap();
    assert!((p_miss - 2.0 / 150.0).abs() < 1e-15);
    assert_eq!(p_fa, 0.0);
    let all_accepted = vec![(true, true), (false, true), (false, true)];
    assert_eq!(error_rates(&all_accepted).unwrap(), (0.0, 1.0));
    assert!(error_rates(&[(true, true)]).is_err());
}
