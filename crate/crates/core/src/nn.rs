//! Minimal dense and convolutional layers with hand-written backward passes.
//!
//! Parameters of a layer live in one flat `Vec<f64>` so optimisers and
//! finite-difference checks can treat every weight group uniformly.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

fn he_init(rng: &mut Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Fully connected network: ReLU on hidden layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass (post-ReLU for hidden layers).
pub struct MlpTrace {
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input at least")
    }

    /// Activations of the last hidden layer (the input when there is none).
    pub fn penultimate(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Mlp {
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            params.extend(he_init(rng, w[0], w[0] * w[1]));
            params.extend(std::iter::repeat(0.0).take(w[1]));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    pub fn forward(&self, x: &[f64]) -> MlpTrace {
        debug_assert_eq!(x.len(), self.input_dim());
        let offs = self.layer_offsets();
        let nl = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(nl + 1);
        acts.push(x.to_vec());
        for l in 0..nl {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offs[l]..offs[l] + ni * no];
            let b = &self.params[offs[l] + ni * no..offs[l + 1]];
            let inp = &acts[l];
            let mut out: Vec<f64> = (0..no).map(|o| b[o] + dot(&w[o * ni..(o + 1) * ni], inp)).collect();
            if l + 1 < nl {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        MlpTrace { acts }
    }

    /// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
    pub fn backward(&self, trace: &MlpTrace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let offs = self.layer_offsets();
        let nl = self.sizes.len() - 1;
        let mut delta = d_out.to_vec();
        for l in (0..nl).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < nl {
                for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let inp = &trace.acts[l];
            let w = &self.params[offs[l]..offs[l] + ni * no];
            let (gw, gb) = grad[offs[l]..offs[l + 1]].split_at_mut(ni * no);
            let mut d_in = vec![0.0; ni];
            for o in 0..no {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * ni..(o + 1) * ni];
                let grow = &mut gw[o * ni..(o + 1) * ni];
                for i in 0..ni {
                    grow[i] += d * inp[i];
                    d_in[i] += d * row[i];
                }
            }
            delta = d_in;
        }
        delta
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multi-channel 2-D convolution with stride and constant padding.
/// Maps are stored channel-major: `[c][row][col]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pad_value: f64,
    /// `[out][in][k][k]` weights followed by `out` biases.
    pub params: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, pad_value: f64, rng: &mut Rng) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let mut params = he_init(rng, fan_in, out_ch * fan_in);
        params.extend(std::iter::repeat(0.0).take(out_ch));
        Conv2d { in_ch, out_ch, kernel, stride, pad, pad_value, params }
    }

    pub fn out_size(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn n_weights(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    #[inline]
    fn sample(&self, n: usize, c: usize, r: isize, col: isize) -> Option<usize> {
        if r < 0 || col < 0 || r as usize >= n || col as usize >= n {
            None
        } else {
            Some(c * n * n + r as usize * n + col as usize)
        }
    }

    /// Forward pass on square `n × n` maps; returns the pre-activation output.
    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let m = self.out_size(n);
        let k = self.kernel;
        let (w, b) = self.params.split_at(self.n_weights());
        let mut out = vec![0.0; self.out_ch * m * m];
        for o in 0..self.out_ch {
            for i in 0..m {
                for j in 0..m {
                    let mut s = b[o];
                    for c in 0..self.in_ch {
                        let wk = &w[((o * self.in_ch + c) * k) * k..((o * self.in_ch + c) * k + k) * k];
                        for ki in 0..k {
                            let r = (i * self.stride + ki) as isize - self.pad as isize;
                            for kj in 0..k {
                                let cc = (j * self.stride + kj) as isize - self.pad as isize;
                                let v = match self.sample(n, c, r, cc) {
                                    Some(idx) => x[idx],
                                    None => self.pad_value,
                                };
                                s += wk[ki * k + kj] * v;
                            }
                        }
                    }
                    out[(o * m + i) * m + j] = s;
                }
            }
        }
        out
    }

    /// Accumulates gradients into `grad` (same layout as `params`); d/dx is
    /// accumulated into `dx` when given.
    pub fn backward(&self, x: &[f64], n: usize, d_out: &[f64], grad: &mut [f64], mut dx: Option<&mut [f64]>) {
        let m = self.out_size(n);
        let k = self.kernel;
        let nw = self.n_weights();
        let w = &self.params[..nw];
        let (gw, gb) = grad.split_at_mut(nw);
        for o in 0..self.out_ch {
            for i in 0..m {
                for j in 0..m {
                    let d = d_out[(o * m + i) * m + j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for c in 0..self.in_ch {
                        let base = ((o * self.in_ch + c) * k) * k;
                        for ki in 0..k {
                            let r = (i * self.stride + ki) as isize - self.pad as isize;
                            for kj in 0..k {
                                let cc = (j * self.stride + kj) as isize - self.pad as isize;
                                let wi = base + ki * k + kj;
                                match self.sample(n, c, r, cc) {
                                    Some(idx) => {
                                        gw[wi] += d * x[idx];
                                        if let Some(dx) = dx.as_deref_mut() {
                                            dx[idx] += d * w[wi];
                                        }
                                    }
                                    None => gw[wi] += d * self.pad_value,
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Relative error used by gradient checks: `|a−b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn fd_check(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], grad: &[f64]) -> f64 {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut p = params.to_vec();
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let dn = f(&p);
            p[i] = orig;
            worst = worst.max(relative_error(grad[i], (up - dn) / (2.0 * h), 1e-6));
        }
        worst
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = seed::rng(3);
        let net = Mlp::new(&[5, 7, 3], &mut rng);
        let x = [0.3, -0.2, 0.9, 0.1, -0.5];
        let target = [0.5, -1.0, 2.0];
        let loss = |net: &Mlp| {
            let out = net.forward(&x);
            out.output().iter().zip(&target).map(|(o, t)| 0.5 * (o - t).powi(2)).sum::<f64>()
        };
        let tr = net.forward(&x);
        let d: Vec<f64> = tr.output().iter().zip(&target).map(|(o, t)| o - t).collect();
        let mut g = vec![0.0; net.n_params()];
        net.backward(&tr, &d, &mut g);
        let mut probe = net.clone();
        let err = fd_check(
            &mut |p| {
                probe.params.copy_from_slice(p);
                loss(&probe)
            },
            &net.params,
            &g,
        );
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let mut rng = seed::rng(5);
        let conv = Conv2d::new(2, 3, 3, 2, 1, 0.7, &mut rng);
        let n = 5;
        let x: Vec<f64> = (0..2 * n * n).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.4).collect();
        let m = conv.out_size(n);
        assert_eq!(m, 3);
        let y = conv.forward(&x, n);
        let mut g = vec![0.0; conv.params.len()];
        let mut dx = vec![0.0; x.len()];
        conv.backward(&x, n, &y, &mut g, Some(&mut dx));
        let mut probe = conv.clone();
        let err = fd_check(
            &mut |p| {
                probe.params.copy_from_slice(p);
                probe.forward(&x, n).iter().map(|v| 0.5 * v * v).sum()
            },
            &conv.params,
            &g,
        );
        assert!(err < 1e-5, "{err}");
        let err_x = fd_check(&mut |xx| conv.forward(xx, n).iter().map(|v| 0.5 * v * v).sum(), &x, &dx);
        assert!(err_x < 1e-5, "{err_x}");
    }

    #[test]
    fn stable_helpers() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite());
        let ls = log_softmax(&[1.0, 2.0, 3.0]);
        assert!((ls.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
