//! Authentication decision rules and threshold calibration.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::ocsvm::OcSvmModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        self == Verdict::Accept
    }

    fn from_bool(accept: bool) -> Self {
        if accept {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest accepted number of symbol errors.
    pub gamma1: usize,
    /// Largest accepted reconstruction error.
    pub gamma2: f64,
}

/// Accept iff `hamming_sym ≤ γ₁`.
pub fn rule_one_metric(hamming_sym: usize, gamma1: usize) -> Verdict {
    Verdict::from_bool(hamming_sym <= gamma1)
}

/// Accept iff both metrics are within their thresholds.
pub fn rule_two_metric(hamming_sym: usize, recon_l2: f64, t: Thresholds) -> Verdict {
    Verdict::from_bool(hamming_sym <= t.gamma1 && recon_l2 <= t.gamma2)
}

/// Alternative completion: accept when either metric is within its threshold.
pub fn rule_two_metric_or(hamming_sym: usize, recon_l2: f64, t: Thresholds) -> Verdict {
    Verdict::from_bool(hamming_sym <= t.gamma1 || recon_l2 <= t.gamma2)
}

/// Accept iff the OC-SVM decision value is non-negative.
pub fn rule_ocsvm(model: &OcSvmModel, features: &[f64]) -> Result<Verdict> {
    Ok(Verdict::from_bool(model.decision(features)? >= 0.0))
}

/// Smallest thresholds with zero miss rate on the given validation originals.
pub fn calibrate(hamming: &[usize], recon: &[f64]) -> Result<Thresholds> {
    if hamming.is_empty() {
        return param("calibration needs at least one validation original");
    }
    if !recon.is_empty() && recon.len() != hamming.len() {
        return param("hamming and reconstruction scores must be aligned");
    }
    if recon.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return param("reconstruction errors must be finite and non-negative");
    }
    Ok(Thresholds {
        gamma1: *hamming.iter().max().expect("non-empty"),
        gamma2: recon.iter().cloned().fold(0.0, f64::max),
    })
}

/// `(P_miss, P_fa)` from `(is_original, accepted)` outcomes.
///
/// `P_miss` is the fraction of originals rejected; `P_fa` the fraction of
/// fakes accepted.
pub fn error_rates(outcomes: &[(bool, bool)]) -> Result<(f64, f64)> {
    let originals = outcomes.iter().filter(|o| o.0).count();
    let fakes = outcomes.len() - originals;
    if originals == 0 || fakes == 0 {
        return Err(Error::UndefinedRate(format!("{originals} originals and {fakes} fakes among probes")));
    }
    let missed = outcomes.iter().filter(|o| o.0 && !o.1).count();
    let accepted = outcomes.iter().filter(|o| !o.0 && o.1).count();
    Ok((missed as f64 / originals as f64, accepted as f64 / fakes as f64))
}

/// Fraction of `outcomes` that are rejected (for originals) or accepted (for fakes).
pub fn class_error(accepted: &[bool], is_original: bool) -> Result<f64> {
    if accepted.is_empty() {
        return Err(Error::UndefinedRate("no probes for class".into()));
    }
    let wrong = accepted.iter().filter(|&&a| a != is_original).count();
    Ok(wrong as f64 / accepted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_metric_boundary_is_inclusive() {
        assert_eq!(rule_one_metric(0, 2), Verdict::Accept);
        assert_eq!(rule_one_metric(2, 2), Verdict::Accept);
        assert_eq!(rule_one_metric(3, 2), Verdict::Reject);
    }

    #[test]
    fn two_metric_examples() {
        let t = Thresholds { gamma1: 2, gamma2: 0.0017 };
        assert_eq!(rule_two_metric(1, 0.001, t), Verdict::Accept);
        assert_eq!(rule_two_metric(1, 0.002, t), Verdict::Reject);
        assert_eq!(rule_two_metric(3, 0.002, t), Verdict::Reject);
        assert_eq!(rule_two_metric_or(1, 0.002, t), Verdict::Accept);
        assert_eq!(rule_two_metric_or(3, 0.002, t), Verdict::Reject);
    }

    #[test]
    fn calibration_takes_maxima() {
        assert_eq!(calibrate(&[0, 1, 2], &[]).unwrap().gamma1, 2);
        assert_eq!(calibrate(&[0, 0], &[0.0005, 0.0017]).unwrap().gamma2, 0.0017);
        assert_eq!(calibrate(&[0, 0], &[0.0, 0.0]).unwrap(), Thresholds { gamma1: 0, gamma2: 0.0 });
        assert!(calibrate(&[], &[]).is_err());
    }

    #[test]
    fn error_rate_arithmetic() {
        let mut o: Vec<(bool, bool)> = (0..150).map(|i| (true, i >= 2)).collect();
        o.push((false, false));
        let (pm, pfa) = error_rates(&o).unwrap();
        assert!((pm - 2.0 / 150.0).abs() < 1e-15);
        assert_eq!(pfa, 0.0);
        assert_eq!(error_rates(&[(true, true), (false, true)]).unwrap(), (0.0, 1.0));
        assert!(matches!(error_rates(&[(true, true)]), Err(Error::UndefinedRate(_))));
    }
}
