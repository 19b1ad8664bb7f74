//! ν-one-class SVM with an RBF kernel.
//!
//! Solves `min ½ αᵀKα  s.t. Σα = 1, 0 ≤ αᵢ ≤ 1/(νn)` with two-coordinate
//! (SMO) updates on the maximal violating pair. Inputs are standardised with
//! the training mean/std before kerneling.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::Grid;

/// α below this value is treated as zero when selecting support vectors.
pub const SV_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(points: &[Vec<f64>]) -> Scaler {
        let d = points[0].len();
        let n = points.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|k| {
                let var = points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    /// Standardised training points with α > [`SV_EPS`].
    pub support_points: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub rbf_gamma: f64,
    pub nu: f64,
    pub n_train: usize,
    pub feature_scaler: Scaler,
    /// Maximal KKT violation at termination.
    pub kkt_violation: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct OcSvmFit {
    pub model: OcSvmModel,
    /// α for every training point, in input order.
    pub alpha_full: Vec<f64>,
    /// Decision values at the training points.
    pub train_decision: Vec<f64>,
    pub objective: f64,
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn train_ocsvm(points: &[Vec<f64>], nu: f64, rbf_gamma: f64, tol: f64) -> Result<OcSvmModel> {
    Ok(fit_ocsvm(points, nu, rbf_gamma, tol)?.model)
}

pub fn fit_ocsvm(points: &[Vec<f64>], nu: f64, rbf_gamma: f64, tol: f64) -> Result<OcSvmFit> {
    let n = points.len();
    if n == 0 {
        return param("one-class SVM needs at least one training point");
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return param(format!("nu must lie in (0,1], got {nu}"));
    }
    if !(rbf_gamma > 0.0 && rbf_gamma.is_finite()) || !(tol > 0.0) {
        return param("rbf_gamma and tol must be positive");
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return param("training points must share a non-zero dimension");
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return param("training points must be finite");
    }

    let scaler = Scaler::fit(points);
    let x: Vec<Vec<f64>> = points.iter().map(|p| scaler.apply(p)).collect();
    let k = Grid::from_fn(n, n, |i, j| rbf(&x[i], &x[j], rbf_gamma));
    let cap = 1.0 / (nu * n as f64);

    // Feasible start: fill α up to the cap in input order.
    let mut alpha = vec![0.0; n];
    let mut left = 1.0f64;
    for a in alpha.iter_mut() {
        if left <= 0.0 {
            break;
        }
        *a = cap.min(left);
        left -= *a;
    }
    let mut grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k.at(i, j) * alpha[j]).sum()).collect();

    let max_iter = 1000 * n.max(100);
    let mut iterations = 0;
    let mut violation;
    loop {
        // i: smallest gradient among coordinates that can grow,
        // j: largest gradient among coordinates that can shrink.
        let (mut i, mut gi) = (usize::MAX, f64::INFINITY);
        let (mut j, mut gj) = (usize::MAX, f64::NEG_INFINITY);
        for t in 0..n {
            if alpha[t] < cap && grad[t] < gi {
                i = t;
                gi = grad[t];
            }
            if alpha[t] > 0.0 && grad[t] > gj {
                j = t;
                gj = grad[t];
            }
        }
        violation = if i == usize::MAX || j == usize::MAX { 0.0 } else { (gj - gi).max(0.0) };
        if violation < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;
        let eta = (k.at(i, i) + k.at(j, j) - 2.0 * k.at(i, j)).max(1e-12);
        let delta = ((gj - gi) / eta).min(cap - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        if cap - alpha[i] < 1e-15 * cap {
            alpha[i] = cap;
        }
        if alpha[j] < 1e-15 {
            alpha[j] = 0.0;
        }
        for (t, g) in grad.iter_mut().enumerate() {
            *g += delta * (k.at(t, i) - k.at(t, j));
        }
    }
    if violation >= tol {
        return Err(Error::Training(format!(
            "one-class SVM did not converge: KKT violation {violation:.3e} after {iterations} iterations"
        )));
    }

    let free: Vec<f64> = (0..n).filter(|&t| alpha[t] > SV_EPS && alpha[t] < cap - SV_EPS).map(|t| grad[t]).collect();
    let rho = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        let upper = (0..n).filter(|&t| alpha[t] >= cap - SV_EPS).map(|t| grad[t]).fold(f64::NEG_INFINITY, f64::max);
        let lower = (0..n).filter(|&t| alpha[t] <= SV_EPS).map(|t| grad[t]).fold(f64::INFINITY, f64::min);
        match (upper.is_finite(), lower.is_finite()) {
            (true, true) => 0.5 * (upper + lower),
            (true, false) => upper,
            (false, true) => lower,
            (false, false) => 0.0,
        }
    };

    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    let train_decision = grad.iter().map(|g| g - rho).collect();
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > SV_EPS).collect();
    let model = OcSvmModel {
        support_points: sv.iter().map(|&t| x[t].clone()).collect(),
        alphas: sv.iter().map(|&t| alpha[t]).collect(),
        rho,
        rbf_gamma,
        nu,
        n_train: n,
        feature_scaler: scaler,
        kkt_violation: violation,
        iterations,
    };
    Ok(OcSvmFit { model, alpha_full: alpha, train_decision, objective })
}

impl OcSvmModel {
    pub fn dim(&self) -> usize {
        self.feature_scaler.mean.len()
    }

    /// Signed score; `>= 0` means inlier.
    pub fn decision(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return param(format!("point has dimension {}, model expects {}", point.len(), self.dim()));
        }
        let z = self.feature_scaler.apply(point);
        Ok(self.score_scaled(&z))
    }

    fn score_scaled(&self, z: &[f64]) -> f64 {
        self.support_points.iter().zip(&self.alphas).map(|(s, a)| a * rbf(s, z, self.rbf_gamma)).sum::<f64>() - self.rho
    }

    /// Decision values on a `resolution × resolution` lattice spanning
    /// `[x0,x1] × [y0,y1]` inclusive. Row index follows y, column index x.
    pub fn boundary_grid(&self, bounds: [(f64, f64); 2], resolution: usize) -> Result<Grid<f64>> {
        if self.dim() != 2 {
            return param(format!("boundary grid needs a 2-D model, this one is {}-D", self.dim()));
        }
        if resolution == 0 {
            return param("resolution must be positive");
        }
        let axis = |(lo, hi): (f64, f64), i: usize| {
            if resolution == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (resolution - 1) as f64
            }
        };
        Ok(Grid::from_fn(resolution, resolution, |r, c| {
            let p = [axis(bounds[0], c), axis(bounds[1], r)];
            self.score_scaled(&self.feature_scaler.apply(&p))
        }))
    }

    /// Upper bound on |∇ decision| in raw coordinates along dimension `k`.
    pub fn lipschitz_bound(&self, k: usize) -> f64 {
        let mass: f64 = self.alphas.iter().sum();
        mass * (2.0 * self.rbf_gamma / std::f64::consts::E).sqrt() / self.feature_scaler.std[k]
    }
}

/// Boundary grid as CSV rows `x,y,score`.
pub fn boundary_csv(grid: &Grid<f64>, bounds: [(f64, f64); 2]) -> String {
    let res = grid.rows();
    let axis = |(lo, hi): (f64, f64), i: usize| if res == 1 { lo } else { lo + (hi - lo) * i as f64 / (res - 1) as f64 };
    let mut out = String::from("x,y,score\n");
    for r in 0..res {
        for c in 0..res {
            out.push_str(&format!("{},{},{}\n", axis(bounds[0], c), axis(bounds[1], r), grid.at(r, c)));
        }
    }
    out
}
