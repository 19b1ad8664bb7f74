//! Slow reference implementations used by the test suites and `selftest`.
//!
//! Each routine recomputes a quantity straight from its definition, sharing no
//! code path with the production implementation it is compared against.

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, Image};

/// Otsu threshold by enumerating every candidate cut and re-scanning all
/// pixels for each one. Between-class variances are compared exactly.
pub fn otsu_exhaustive(image: &Image) -> Result<f64> {
    let px = image.as_slice();
    let level = |v: f64| ((v * 256.0).floor() as i64).clamp(0, 255) as i128;
    let n = px.len() as i128;
    let mut best: Option<(usize, i128, i128)> = None;
    for k in 0..255usize {
        let tau = (k + 1) as f64 / 256.0;
        let (mut n0, mut s0, mut s1) = (0i128, 0i128, 0i128);
        for &v in px {
            if v < tau {
                n0 += 1;
                s0 += level(v);
            } else {
                s1 += level(v);
            }
        }
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // w0·w1·(μ0 − μ1)² ∝ (s0·n1 − s1·n0)² / (n0·n1)
        let d = s0 * n1 - s1 * n0;
        let (num, den) = (d * d, n0 * n1);
        if best.map_or(true, |(_, bn, bd)| num * bd > bn * den) {
            best = Some((k, num, den));
        }
    }
    match best {
        Some((k, num, _)) if num > 0 => Ok((k + 1) as f64 / 256.0),
        _ => Err(Error::Degenerate("constant histogram".into())),
    }
}

pub fn pearson_naive(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma).powi(2);
        vb += (b[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

pub fn lp_naive(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for i in 0..a.len() {
        l1 += (a[i] - b[i]).abs();
        l2 += (a[i] - b[i]) * (a[i] - b[i]);
    }
    (l1 / a.len() as f64, (l2 / a.len() as f64).sqrt())
}

/// Symbol-wise Hamming distance counting block pixels directly.
pub fn hamming_naive(a: &BinaryGrid, symbols: &BinaryGrid, symbol_px: usize) -> usize {
    let mut errors = 0;
    for i in 0..symbols.rows() {
        for j in 0..symbols.cols() {
            let mut black = 0;
            let mut white = 0;
            for r in 0..symbol_px {
                for c in 0..symbol_px {
                    if a.at(i * symbol_px + r, j * symbol_px + c) == 1 {
                        black += 1;
                    } else {
                        white += 1;
                    }
                }
            }
            let sym = if black >= white { 1 } else { 0 };
            if sym != symbols.at(i, j) {
                errors += 1;
            }
        }
    }
    errors
}

/// Euclidean projection onto `{α : Σα = 1, 0 ≤ α ≤ cap}` by bisection on the shift.
fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let total = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, cap)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - cap - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, cap)).collect()
}

/// Minimum of `½ αᵀKα` over the capped simplex by projected gradient descent.
pub fn ocsvm_dual_projected_gradient(kernel: &[Vec<f64>], cap: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = kernel.len();
    let lipschitz = kernel.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz.max(1e-12);
    let mut alpha = project_capped_simplex(&vec![1.0 / n as f64; n], cap);
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| kernel[i][j] * alpha[j]).sum()).collect();
        let v: Vec<f64> = (0..n).map(|i| alpha[i] - step * grad[i]).collect();
        alpha = project_capped_simplex(&v, cap);
    }
    let obj = dual_objective(kernel, &alpha);
    (alpha, obj)
}

pub fn dual_objective(kernel: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += alpha[i] * alpha[j] * kernel[i][j];
        }
    }
    0.5 * s
}

/// Central interval `[lo, hi]` of Binomial(n, p) holding at least `coverage` mass,
/// from exact log-pmf summation.
pub fn binomial_central_interval(n: u64, p: f64, coverage: f64) -> (u64, u64) {
    let ln_fact = |k: u64| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let ln_n = ln_fact(n);
    let pmf: Vec<f64> = (0..=n)
        .map(|k| (ln_n - ln_fact(k) - ln_fact(n - k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp())
        .collect();
    let tail = (1.0 - coverage) / 2.0;
    let mut acc = 0.0;
    let mut lo = 0;
    for (k, m) in pmf.iter().enumerate() {
        if acc + m > tail {
            lo = k as u64;
            break;
        }
        acc += m;
    }
    acc = 0.0;
    let mut hi = n;
    for (k, m) in pmf.iter().enumerate().rev() {
        if acc + m > tail {
            hi = k as u64;
            break;
        }
        acc += m;
    }
    (lo, hi)
}

/// −Σ p ln p of the empirical distribution of `labels`.
pub fn entropy_naive(labels: &[usize]) -> f64 {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut h = 0.0;
    for c in 0..=max {
        let count = labels.iter().filter(|&&l| l == c).count();
        if count > 0 {
            let p = count as f64 / labels.len() as f64;
            h -= p * p.ln();
        }
    }
    h
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}
