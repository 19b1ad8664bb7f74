//! Supervised original-vs-fake classifiers and the classification-based
//! mutual-information lower bound `I(A;C) ≥ H(C) − H(C|A)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::ObservedCode;
use crate::error::{param, Error, Result};
use crate::nn::{log_softmax, Adam, Conv2d, Mlp, MlpTrace};
use crate::seed;

/// Class index out of `k` classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub index: usize,
    pub k: usize,
}

impl ClassLabel {
    pub fn new(index: usize, k: usize) -> Result<Self> {
        if index >= k {
            return param(format!("class index {index} out of range for {k} classes"));
        }
        Ok(ClassLabel { index, k })
    }

    pub fn one_hot(self) -> Vec<u8> {
        (0..self.k).map(|i| (i == self.index) as u8).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Feature maps of the convolutional stage.
    pub filters: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Use colour planes when the codes carry them.
    pub use_color: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 12, batch_size: 16, learning_rate: 3e-3, filters: 12, hidden: 32, seed: 0, use_color: true }
    }
}

/// 3×3 convolution + ReLU, global average pooling, then a perceptron head.
///
/// Pooling makes the network depend on the statistics of local texture rather
/// than on where particular symbols sit, which differ from code to code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    pub conv: Conv2d,
    pub head: Mlp,
}

pub struct NetTrace {
    maps: Vec<f64>,
    head: MlpTrace,
}

impl NetTrace {
    pub fn logits(&self) -> &[f64] {
        self.head.output()
    }
}

impl ConvNet {
    pub fn new(planes: usize, filters: usize, hidden: usize, k: usize, rng: &mut seed::Rng) -> ConvNet {
        ConvNet { conv: Conv2d::new(planes, filters, 3, 1, 1, 0.0, rng), head: Mlp::new(&[filters, hidden, k], rng) }
    }

    pub fn n_params(&self) -> usize {
        self.conv.params.len() + self.head.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.conv.params[..], &self.head.params].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nc = self.conv.params.len();
        self.conv.params.copy_from_slice(&p[..nc]);
        self.head.params.copy_from_slice(&p[nc..]);
    }

    /// `x` holds `planes` square maps of side `n`.
    pub fn forward(&self, x: &[f64], n: usize) -> NetTrace {
        let mut maps = self.conv.forward(x, n);
        maps.iter_mut().for_each(|v| *v = v.max(0.0));
        let area = n * n;
        let pooled: Vec<f64> = maps.chunks(area).map(|m| m.iter().sum::<f64>() / area as f64).collect();
        NetTrace { head: self.head.forward(&pooled), maps }
    }

    /// Accumulates the gradient for `d_logits` into `grad` (layout of [`ConvNet::params`]).
    pub fn backward(&self, x: &[f64], n: usize, trace: &NetTrace, d_logits: &[f64], grad: &mut [f64]) {
        let nc = self.conv.params.len();
        let (gc, gh) = grad.split_at_mut(nc);
        let d_pooled = self.head.backward(&trace.head, d_logits, gh);
        let area = n * n;
        let d_maps: Vec<f64> = trace
            .maps
            .iter()
            .enumerate()
            .map(|(i, &a)| if a > 0.0 { d_pooled[i / area] / area as f64 } else { 0.0 })
            .collect();
        self.conv.backward(x, n, &d_maps, gc, None);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub net: ConvNet,
    pub k: usize,
    pub class_names: Vec<String>,
    pub image_side: usize,
    pub planes: usize,
    pub config: TrainConfig,
    pub final_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub h_c: f64,
    pub h_c_given_a: f64,
    pub lower_bound: f64,
}

/// Centred network input for a code: the colour planes or the single luminance plane.
pub fn code_input(code: &ObservedCode, planes: usize) -> Vec<f64> {
    let sources: Vec<&crate::grid::Image> = match (&code.planes, planes) {
        (Some(p), 3) => p.iter().collect(),
        _ => vec![&code.image],
    };
    sources.iter().flat_map(|img| img.as_slice().iter().map(|v| v - 0.5)).collect()
}

/// Mean cross-entropy of a batch and its parameter gradient.
pub fn batch_loss_and_grad(net: &ConvNet, n: usize, inputs: &[&[f64]], labels: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    let scale = 1.0 / inputs.len() as f64;
    for (x, &y) in inputs.iter().zip(labels) {
        let trace = net.forward(x, n);
        let lp = log_softmax(trace.logits());
        loss -= lp[y] * scale;
        let d: Vec<f64> = lp.iter().enumerate().map(|(i, l)| (l.exp() - (i == y) as u8 as f64) * scale).collect();
        net.backward(x, n, &trace, &d, &mut grad);
    }
    (loss, grad)
}

pub fn train_classifier(codes: &[&ObservedCode], labels: &[usize], class_names: &[String], config: &TrainConfig) -> Result<ClassifierModel> {
    let k = class_names.len();
    if k < 2 {
        return param("need at least two classes");
    }
    if codes.len() != labels.len() || codes.is_empty() {
        return param("codes and labels must be non-empty and aligned");
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return param(format!("label {bad} out of range for {k} classes"));
    }
    for c in 0..k {
        let count = labels.iter().filter(|&&l| l == c).count();
        if count < 2 {
            return Err(Error::Data(format!("class {:?} has {count} training examples, need >= 2", class_names[c])));
        }
    }
    if config.epochs == 0 || config.batch_size == 0 || config.hidden == 0 || config.filters == 0 {
        return param("epochs, batch_size, filters and hidden must be positive");
    }
    if !(config.learning_rate > 0.0) {
        return param("learning_rate must be positive");
    }
    let side = codes[0].image.rows();
    if codes.iter().any(|c| c.image.shape() != (side, side)) {
        return param("all codes must share one square shape");
    }
    let planes = if config.use_color && codes.iter().all(|c| c.planes.is_some()) { 3 } else { 1 };
    let inputs: Vec<Vec<f64>> = codes.iter().map(|c| code_input(c, planes)).collect();

    let mut rng = seed::derived_rng(config.seed, "supervised/init", 0);
    let mut net = ConvNet::new(planes, config.filters, config.hidden, k, &mut rng);
    let mut opt = Adam::new(net.n_params(), config.learning_rate);
    let mut shuffle_rng = seed::derived_rng(config.seed, "supervised/shuffle", 0);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut params = net.params();
    let mut final_loss = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&net, side, &xs, &ys);
            if !loss.is_finite() {
                return Err(Error::Training(format!("cross-entropy diverged in epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut params, &grad);
            net.set_params(&params);
        }
        final_loss = epoch_loss / inputs.len() as f64;
        log::debug!("supervised epoch {epoch}: loss {final_loss:.5}");
    }
    Ok(ClassifierModel { net, k, class_names: class_names.to_vec(), image_side: side, planes, config: config.clone(), final_loss })
}

impl ClassifierModel {
    fn input(&self, code: &ObservedCode) -> Result<Vec<f64>> {
        if code.image.shape() != (self.image_side, self.image_side) {
            return param(format!(
                "probe is {}x{}, model expects {}x{}",
                code.image.rows(),
                code.image.cols(),
                self.image_side,
                self.image_side
            ));
        }
        if self.planes == 3 && code.planes.is_none() {
            return param("model expects colour planes");
        }
        Ok(code_input(code, self.planes))
    }

    pub fn logits(&self, code: &ObservedCode) -> Result<Vec<f64>> {
        Ok(self.net.forward(&self.input(code)?, self.image_side).logits().to_vec())
    }

    pub fn predict(&self, code: &ObservedCode) -> Result<(usize, Vec<f64>)> {
        let lp = log_softmax(&self.logits(code)?);
        Ok((argmax(&lp), lp))
    }
}

pub fn predict(model: &ClassifierModel, code: &ObservedCode) -> Result<(usize, Vec<f64>)> {
    model.predict(code)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `(P_miss, P_fa)` of a classifier where class `original` is the genuine class.
pub fn binary_rates(model: &ClassifierModel, probes: &[(&ObservedCode, bool)], original: usize) -> Result<(f64, f64)> {
    let outcomes = probes
        .iter()
        .map(|(code, is_original)| Ok((*is_original, model.predict(code)?.0 == original)))
        .collect::<Result<Vec<_>>>()?;
    crate::decision::error_rates(&outcomes)
}

/// Plug-in estimate of `H(C) − H(C|A)` in nats from true labels and predicted
/// log-probabilities.
pub fn estimate_mi_lower_bound(labels: &[usize], log_probs: &[Vec<f64>]) -> Result<MiEstimate> {
    if labels.is_empty() || labels.len() != log_probs.len() {
        return param("labels and predictions must be non-empty and aligned");
    }
    let k = log_probs[0].len();
    let mut counts = vec![0usize; k];
    let mut h_c_given_a = 0.0;
    for (i, (&y, lp)) in labels.iter().zip(log_probs).enumerate() {
        if lp.len() != k || y >= k {
            return param(format!("sample {i}: label or prediction length inconsistent with {k} classes"));
        }
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        if lp.iter().any(|v| v.is_nan() || *v > 1e-12) || (total - 1.0).abs() > 1e-6 {
            return param(format!("sample {i}: not a valid log-probability vector"));
        }
        if lp[y] == f64::NEG_INFINITY {
            return Err(Error::InfiniteEntropy { sample: i });
        }
        counts[y] += 1;
        h_c_given_a -= lp[y];
    }
    let n = labels.len() as f64;
    h_c_given_a /= n;
    let h_c = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum::<f64>();
    Ok(MiEstimate { h_c, h_c_given_a, lower_bound: h_c - h_c_given_a })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_encoding() {
        assert_eq!(ClassLabel::new(1, 5).unwrap().one_hot(), vec![0, 1, 0, 0, 0]);
        assert!(ClassLabel::new(5, 5).is_err());
    }

    #[test]
    fn uniform_network_has_ln_k_loss() {
        let mut net = ConvNet::new(1, 2, 3, 3, &mut seed::rng(0));
        net.set_params(&vec![0.0; net.n_params()]);
        let x = [0.1, 0.2, 0.3, 0.4];
        let (loss, _) = batch_loss_and_grad(&net, 2, &[&x], &[2]);
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn convnet_gradient_matches_finite_differences() {
        let net = ConvNet::new(2, 3, 4, 3, &mut seed::rng(4));
        let n = 5;
        let xs: Vec<Vec<f64>> = (0..3).map(|s| (0..2 * n * n).map(|i| ((i * 7 + s * 3) % 11) as f64 / 11.0 - 0.5).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let ys = [0, 2, 1];
        let (_, grad) = batch_loss_and_grad(&net, n, &refs, &ys);
        let base = net.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut probe = net.clone();
            let mut p = base.clone();
            p[i] += h;
            probe.set_params(&p);
            let up = batch_loss_and_grad(&probe, n, &refs, &ys).0;
            p[i] -= 2.0 * h;
            probe.set_params(&p);
            let down = batch_loss_and_grad(&probe, n, &refs, &ys).0;
            let numeric = (up - down) / (2.0 * h);
            assert!(crate::nn::relative_error(grad[i], numeric, 1e-6) < 1e-5, "param {i}: {} vs {numeric}", grad[i]);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn mi_bound_examples() {
        let ln2 = 2f64.ln();
        let perfect: Vec<Vec<f64>> = vec![vec![0.0, f64::NEG_INFINITY], vec![f64::NEG_INFINITY, 0.0]];
        let est = estimate_mi_lower_bound(&[0, 1], &perfect).unwrap();
        assert!((est.lower_bound - ln2).abs() < 1e-9);
        let uniform = vec![vec![-ln2, -ln2]; 4];
        let est = estimate_mi_lower_bound(&[0, 1, 1, 1], &uniform).unwrap();
        assert!((est.h_c - 0.562335).abs() < 1e-6);
        assert!((est.lower_bound - (est.h_c - ln2)).abs() < 1e-12);
        let est = estimate_mi_lower_bound(&[0, 1], &uniform[..2]).unwrap();
        assert!(est.lower_bound.abs() < 1e-9);
    }

    #[test]
    fn mi_bound_flags_zero_probability() {
        let lp = vec![vec![0.0, f64::NEG_INFINITY]];
        assert!(matches!(estimate_mi_lower_bound(&[1], &lp), Err(Error::InfiniteEntropy { sample: 0 })));
        assert!(estimate_mi_lower_bound(&[0], &[vec![-0.1, -0.1]]).is_err());
    }
}
