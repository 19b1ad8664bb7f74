//! Template-estimating autoencoder `x → t̂ → x̂` used as a one-class feature
//! extractor.
//!
//! The encoder maps an acquired code to per-symbol ink probabilities, the
//! decoder maps those back to pixels. Four training objectives are supported:
//!
//! | scenario | generator loss |
//! |---|---|
//! | 1 | `λ₁·rms(t − t̂)` |
//! | 2 | scenario 1 + adversarial term from a template-space discriminator |
//! | 3 | scenario 1 + `β·λ₂·rms(x − x̂)` |
//! | 4 | scenario 3 + template-space and `β`-weighted image-space adversarial terms |
//!
//! Discriminators are trained with the logistic loss; generators receive the
//! non-saturating gradient `−log D(fake)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{BinaryGrid, Grid, Image};
use crate::metrics;
use crate::nn::{relative_error, sigmoid, softplus, Adam, Conv2d, Mlp, MlpTrace};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4];

    pub fn number(self) -> u8 {
        match self {
            Scenario::S1 => 1,
            Scenario::S2 => 2,
            Scenario::S3 => 3,
            Scenario::S4 => 4,
        }
    }

    pub fn has_decoder(self) -> bool {
        matches!(self, Scenario::S3 | Scenario::S4)
    }

    pub fn has_disc_t(self) -> bool {
        matches!(self, Scenario::S2 | Scenario::S4)
    }

    pub fn has_disc_x(self) -> bool {
        self == Scenario::S4
    }
}

impl TryFrom<u8> for Scenario {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Scenario::S1),
            2 => Ok(Scenario::S2),
            3 => Ok(Scenario::S3),
            4 => Ok(Scenario::S4),
            _ => param(format!("scenario must be 1..=4, got {v}")),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.number()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub n_sym: usize,
    pub symbol_px: usize,
    /// Extra pixels seen around each symbol by the first encoder stage.
    pub margin_px: usize,
    pub channels: usize,
    pub disc_hidden: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    /// Weight of the template-space adversarial term (the image-space one is scaled by `beta` as well).
    pub adv_weight: f64,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            n_sym: 24,
            symbol_px: 3,
            margin_px: 3,
            channels: 8,
            disc_hidden: 32,
            lambda1: 1.0,
            lambda2: 1.0,
            beta: 0.01,
            adv_weight: 1.0,
            learning_rate: 2e-3,
            disc_learning_rate: 1e-3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl AeConfig {
    pub fn image_side(&self) -> usize {
        self.n_sym * self.symbol_px
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sym < 2 || self.symbol_px == 0 || self.channels == 0 || self.disc_hidden == 0 {
            return param("n_sym >= 2 and positive symbol_px, channels, disc_hidden required");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return param("epochs and batch_size must be positive");
        }
        let nonneg = [self.lambda1, self.lambda2, self.beta, self.adv_weight];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) || self.lambda1 == 0.0 || self.lambda2 == 0.0 {
            return param("lambda1, lambda2 must be > 0; beta, adv_weight >= 0");
        }
        if !(self.learning_rate > 0.0 && self.disc_learning_rate > 0.0) {
            return param("learning rates must be positive");
        }
        Ok(())
    }
}

/// One training pair: an acquired original and the symbol grid it was printed from.
#[derive(Clone, Debug)]
pub struct AeSample {
    pub x: Image,
    pub t: BinaryGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub stage_a: Conv2d,
    pub stage_b: Conv2d,
    pub head: Conv2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub stage_a: Conv2d,
    pub stage_b: Conv2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub generator: f64,
    pub template_rms: f64,
    pub recon_rms: f64,
    pub disc_t: f64,
    pub disc_x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub scenario: Scenario,
    pub config: AeConfig,
    pub encoder: Encoder,
    pub decoder: Option<Decoder>,
    pub disc_t: Option<Mlp>,
    pub disc_x: Option<Mlp>,
    /// Mean losses per epoch; entry 0 is evaluated before any update.
    pub loss_trace: Vec<EpochLoss>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepFeatures {
    pub hamming_sym: usize,
    pub recon_l2: Option<f64>,
    pub disc_t_score: Option<f64>,
    pub disc_x_score: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightGroup {
    Encoder,
    Decoder,
    DiscT,
    DiscX,
}

/// Root-mean-square of `a − b` and its gradient with respect to `b`.
pub fn rms_and_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let ms = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    let r = ms.sqrt();
    let g = if r > 0.0 { a.iter().zip(b).map(|(x, y)| -(x - y) / (n * r)).collect() } else { vec![0.0; a.len()] };
    (r, g)
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_mask(d: &mut [f64], post: &[f64]) {
    for (g, a) in d.iter_mut().zip(post) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn centred(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x - 0.5).collect()
}

struct EncTrace {
    input: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    t_hat: Vec<f64>,
}

struct DecTrace {
    c: Vec<f64>,
    x_hat: Vec<f64>,
}

impl Encoder {
    fn new(cfg: &AeConfig, rng: &mut seed::Rng) -> Self {
        let k = cfg.symbol_px + 2 * cfg.margin_px;
        Encoder {
            stage_a: Conv2d::new(1, cfg.channels, k, cfg.symbol_px, cfg.margin_px, 0.45, rng),
            stage_b: Conv2d::new(cfg.channels, cfg.channels, 3, 1, 1, 0.0, rng),
            head: Conv2d::new(cfg.channels, 1, 1, 1, 0, 0.0, rng),
        }
    }

    fn forward(&self, x: &Image, n_sym: usize) -> EncTrace {
        let input = centred(x.as_slice());
        let mut a = self.stage_a.forward(&input, x.rows());
        relu_in_place(&mut a);
        let mut b = self.stage_b.forward(&a, n_sym);
        relu_in_place(&mut b);
        let t_hat = self.head.forward(&b, n_sym).into_iter().map(sigmoid).collect();
        EncTrace { input, a, b, t_hat }
    }

    fn backward(&self, tr: &EncTrace, d_t_hat: &[f64], side: usize, n_sym: usize, grad: &mut [f64]) {
        let (na, nb) = (self.stage_a.params.len(), self.stage_b.params.len());
        let (ga, rest) = grad.split_at_mut(na);
        let (gb, gh) = rest.split_at_mut(nb);
        let d_logit: Vec<f64> = d_t_hat.iter().zip(&tr.t_hat).map(|(d, p)| d * p * (1.0 - p)).collect();
        let mut d_b = vec![0.0; tr.b.len()];
        self.head.backward(&tr.b, n_sym, &d_logit, gh, Some(&mut d_b));
        relu_mask(&mut d_b, &tr.b);
        let mut d_a = vec![0.0; tr.a.len()];
        self.stage_b.backward(&tr.a, n_sym, &d_b, gb, Some(&mut d_a));
        relu_mask(&mut d_a, &tr.a);
        self.stage_a.backward(&tr.input, side, &d_a, ga, None);
    }

    fn params(&self) -> Vec<f64> {
        [&self.stage_a.params[..], &self.stage_b.params, &self.head.params].concat()
    }

    fn set_params(&mut self, p: &[f64]) {
        let (na, nb) = (self.stage_a.params.len(), self.stage_b.params.len());
        self.stage_a.params.copy_from_slice(&p[..na]);
        self.stage_b.params.copy_from_slice(&p[na..na + nb]);
        self.head.params.copy_from_slice(&p[na + nb..]);
    }
}

impl Decoder {
    fn new(cfg: &AeConfig, rng: &mut seed::Rng) -> Self {
        let px2 = cfg.symbol_px * cfg.symbol_px;
        let mut stage_b = Conv2d::new(cfg.channels, px2, 3, 1, 1, 0.0, rng);
        let nb = stage_b.params.len();
        stage_b.params[nb - px2..].iter_mut().for_each(|b| *b = 0.5);
        Decoder { stage_a: Conv2d::new(1, cfg.channels, 3, 1, 1, 0.0, rng), stage_b }
    }

    fn forward(&self, t_hat: &[f64], n_sym: usize, px: usize) -> DecTrace {
        let mut c = self.stage_a.forward(t_hat, n_sym);
        relu_in_place(&mut c);
        let o = self.stage_b.forward(&c, n_sym);
        let side = n_sym * px;
        let mut x_hat = vec![0.0; side * side];
        for u in 0..px {
            for v in 0..px {
                let plane = &o[(u * px + v) * n_sym * n_sym..(u * px + v + 1) * n_sym * n_sym];
                for i in 0..n_sym {
                    for j in 0..n_sym {
                        x_hat[(i * px + u) * side + j * px + v] = plane[i * n_sym + j];
                    }
                }
            }
        }
        DecTrace { c, x_hat }
    }

    /// Returns d/dt̂ and accumulates parameter gradients.
    fn backward(&self, t_hat: &[f64], tr: &DecTrace, d_x_hat: &[f64], n_sym: usize, px: usize, grad: &mut [f64]) -> Vec<f64> {
        let side = n_sym * px;
        let mut d_o = vec![0.0; px * px * n_sym * n_sym];
        for u in 0..px {
            for v in 0..px {
                for i in 0..n_sym {
                    for j in 0..n_sym {
                        d_o[(u * px + v) * n_sym * n_sym + i * n_sym + j] = d_x_hat[(i * px + u) * side + j * px + v];
                    }
                }
            }
        }
        let na = self.stage_a.params.len();
        let (ga, gb) = grad.split_at_mut(na);
        let mut d_c = vec![0.0; tr.c.len()];
        self.stage_b.backward(&tr.c, n_sym, &d_o, gb, Some(&mut d_c));
        relu_mask(&mut d_c, &tr.c);
        let mut d_t = vec![0.0; t_hat.len()];
        self.stage_a.backward(t_hat, n_sym, &d_c, ga, Some(&mut d_t));
        d_t
    }

    fn params(&self) -> Vec<f64> {
        [&self.stage_a.params[..], &self.stage_b.params].concat()
    }

    fn set_params(&mut self, p: &[f64]) {
        let na = self.stage_a.params.len();
        self.stage_a.params.copy_from_slice(&p[..na]);
        self.stage_b.params.copy_from_slice(&p[na..]);
    }
}

struct SampleTrace {
    enc: EncTrace,
    dec: Option<DecTrace>,
}

/// Gradients of one batch, one vector per weight group (empty when absent).
#[derive(Clone, Debug, Default)]
pub struct BatchGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
    pub disc_t: Vec<f64>,
    pub disc_x: Vec<f64>,
}

impl AeModel {
    pub fn new(scenario: Scenario, config: AeConfig) -> Result<Self> {
        config.validate()?;
        let s = config.seed;
        let encoder = Encoder::new(&config, &mut seed::derived_rng(s, "ae/encoder", 0));
        let decoder = scenario.has_decoder().then(|| Decoder::new(&config, &mut seed::derived_rng(s, "ae/decoder", 0)));
        let nt = config.n_sym * config.n_sym;
        let side = config.image_side();
        let disc_t = scenario
            .has_disc_t()
            .then(|| Mlp::new(&[nt, config.disc_hidden, 1], &mut seed::derived_rng(s, "ae/disc_t", 0)));
        let disc_x = scenario
            .has_disc_x()
            .then(|| Mlp::new(&[side * side, config.disc_hidden, 1], &mut seed::derived_rng(s, "ae/disc_x", 0)));
        Ok(AeModel { scenario, config, encoder, decoder, disc_t, disc_x, loss_trace: Vec::new() })
    }

    pub fn groups(&self) -> Vec<WeightGroup> {
        let mut g = vec![WeightGroup::Encoder];
        if self.decoder.is_some() {
            g.push(WeightGroup::Decoder);
        }
        if self.disc_t.is_some() {
            g.push(WeightGroup::DiscT);
        }
        if self.disc_x.is_some() {
            g.push(WeightGroup::DiscX);
        }
        g
    }

    pub fn group_params(&self, g: WeightGroup) -> Vec<f64> {
        match g {
            WeightGroup::Encoder => self.encoder.params(),
            WeightGroup::Decoder => self.decoder.as_ref().map(Decoder::params).unwrap_or_default(),
            WeightGroup::DiscT => self.disc_t.as_ref().map(|m| m.params.clone()).unwrap_or_default(),
            WeightGroup::DiscX => self.disc_x.as_ref().map(|m| m.params.clone()).unwrap_or_default(),
        }
    }

    pub fn set_group_params(&mut self, g: WeightGroup, p: &[f64]) {
        match g {
            WeightGroup::Encoder => self.encoder.set_params(p),
            WeightGroup::Decoder => {
                if let Some(d) = self.decoder.as_mut() {
                    d.set_params(p)
                }
            }
            WeightGroup::DiscT => {
                if let Some(d) = self.disc_t.as_mut() {
                    d.params.copy_from_slice(p)
                }
            }
            WeightGroup::DiscX => {
                if let Some(d) = self.disc_x.as_mut() {
                    d.params.copy_from_slice(p)
                }
            }
        }
    }

    fn check_sample(&self, s: &AeSample) -> Result<()> {
        let side = self.config.image_side();
        let n = self.config.n_sym;
        if s.x.shape() != (side, side) || s.t.shape() != (n, n) {
            return param(format!(
                "sample is {:?} image / {:?} template; model expects {side}x{side} / {n}x{n}",
                s.x.shape(),
                s.t.shape()
            ));
        }
        Ok(())
    }

    fn forward(&self, x: &Image) -> SampleTrace {
        let n = self.config.n_sym;
        let enc = self.encoder.forward(x, n);
        let dec = self.decoder.as_ref().map(|d| d.forward(&enc.t_hat, n, self.config.symbol_px));
        SampleTrace { enc, dec }
    }

    /// Estimated symbol ink probabilities `t̂`.
    pub fn encode(&self, x: &Image) -> Result<Grid<f64>> {
        let side = self.config.image_side();
        if x.shape() != (side, side) {
            return param(format!("image is {:?}, model expects {side}x{side}", x.shape()));
        }
        let n = self.config.n_sym;
        Grid::from_vec(n, n, self.encoder.forward(x, n).t_hat)
    }

    /// Generator loss terms for a batch: `(total, template_rms, recon_rms)` means.
    fn generator_loss(&self, batch: &[&AeSample], traces: &[SampleTrace]) -> (f64, f64, f64) {
        let c = &self.config;
        let scale = 1.0 / batch.len() as f64;
        let (mut total, mut trms, mut xrms) = (0.0, 0.0, 0.0);
        for (s, tr) in batch.iter().zip(traces) {
            let t = s.t.to_f64();
            let (et, _) = rms_and_grad(t.as_slice(), &tr.enc.t_hat);
            trms += et * scale;
            total += c.lambda1 * et * scale;
            if let Some(d) = &self.disc_t {
                total += c.adv_weight * softplus(-d.forward(&centred(&tr.enc.t_hat)).output()[0]) * scale;
            }
            if let Some(dec) = &tr.dec {
                let (ex, _) = rms_and_grad(s.x.as_slice(), &dec.x_hat);
                xrms += ex * scale;
                total += c.beta * c.lambda2 * ex * scale;
                if let Some(d) = &self.disc_x {
                    total += c.beta * c.adv_weight * softplus(-d.forward(&centred(&dec.x_hat)).output()[0]) * scale;
                }
            }
        }
        (total, trms, xrms)
    }

    /// Mean logistic discriminator losses `(disc_t, disc_x)` with fakes taken from `traces`.
    fn discriminator_loss(&self, batch: &[&AeSample], traces: &[SampleTrace]) -> (f64, f64) {
        let scale = 1.0 / batch.len() as f64;
        let (mut lt, mut lx) = (0.0, 0.0);
        for (s, tr) in batch.iter().zip(traces) {
            if let Some(d) = &self.disc_t {
                let real = d.forward(&centred(s.t.to_f64().as_slice())).output()[0];
                let fake = d.forward(&centred(&tr.enc.t_hat)).output()[0];
                lt += (softplus(-real) + softplus(fake)) * scale;
            }
            if let (Some(d), Some(dec)) = (&self.disc_x, &tr.dec) {
                let real = d.forward(&centred(s.x.as_slice())).output()[0];
                let fake = d.forward(&centred(&dec.x_hat)).output()[0];
                lx += (softplus(-real) + softplus(fake)) * scale;
            }
        }
        (lt, lx)
    }

    fn disc_grads(&self, batch: &[&AeSample], traces: &[SampleTrace]) -> (Vec<f64>, Vec<f64>) {
        let scale = 1.0 / batch.len() as f64;
        let mut gt = vec![0.0; self.disc_t.as_ref().map_or(0, Mlp::n_params)];
        let mut gx = vec![0.0; self.disc_x.as_ref().map_or(0, Mlp::n_params)];
        for (s, tr) in batch.iter().zip(traces) {
            if let Some(d) = &self.disc_t {
                logistic_backward(d, &centred(s.t.to_f64().as_slice()), &centred(&tr.enc.t_hat), scale, &mut gt);
            }
            if let (Some(d), Some(dec)) = (&self.disc_x, &tr.dec) {
                logistic_backward(d, &centred(s.x.as_slice()), &centred(&dec.x_hat), scale, &mut gx);
            }
        }
        (gt, gx)
    }

    fn generator_grads(&self, batch: &[&AeSample], traces: &[SampleTrace]) -> (Vec<f64>, Vec<f64>) {
        let c = &self.config;
        let n = c.n_sym;
        let px = c.symbol_px;
        let side = c.image_side();
        let scale = 1.0 / batch.len() as f64;
        let mut g_enc = vec![0.0; self.encoder.params().len()];
        let mut g_dec = vec![0.0; self.decoder.as_ref().map_or(0, |d| d.params().len())];
        let mut scratch_t = vec![0.0; self.disc_t.as_ref().map_or(0, Mlp::n_params)];
        let mut scratch_x = vec![0.0; self.disc_x.as_ref().map_or(0, Mlp::n_params)];
        for (s, tr) in batch.iter().zip(traces) {
            let t = s.t.to_f64();
            let (_, gt) = rms_and_grad(t.as_slice(), &tr.enc.t_hat);
            let mut d_t_hat: Vec<f64> = gt.iter().map(|g| c.lambda1 * scale * g).collect();
            if let Some(d) = &self.disc_t {
                let dd = nonsaturating_input_grad(d, &centred(&tr.enc.t_hat), c.adv_weight * scale, &mut scratch_t);
                d_t_hat.iter_mut().zip(&dd).for_each(|(a, b)| *a += b);
            }
            if let (Some(dec), Some(dtr)) = (&self.decoder, &tr.dec) {
                let (_, gx) = rms_and_grad(s.x.as_slice(), &dtr.x_hat);
                let mut d_x_hat: Vec<f64> = gx.iter().map(|g| c.beta * c.lambda2 * scale * g).collect();
                if let Some(d) = &self.disc_x {
                    let dd = nonsaturating_input_grad(d, &centred(&dtr.x_hat), c.beta * c.adv_weight * scale, &mut scratch_x);
                    d_x_hat.iter_mut().zip(&dd).for_each(|(a, b)| *a += b);
                }
                let back = dec.backward(&tr.enc.t_hat, dtr, &d_x_hat, n, px, &mut g_dec);
                d_t_hat.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
            }
            self.encoder.backward(&tr.enc, &d_t_hat, side, n, &mut g_enc);
        }
        (g_enc, g_dec)
    }

    /// Analytic gradients of the generator loss (encoder, decoder) and of the
    /// discriminator losses (discriminators) on `batch`.
    pub fn batch_grads(&self, batch: &[&AeSample]) -> BatchGrads {
        let traces: Vec<SampleTrace> = batch.iter().map(|s| self.forward(&s.x)).collect();
        let (encoder, decoder) = self.generator_grads(batch, &traces);
        let (disc_t, disc_x) = self.disc_grads(batch, &traces);
        BatchGrads { encoder, decoder, disc_t, disc_x }
    }

    /// Scalar loss whose gradient a weight group receives.
    pub fn group_loss(&self, g: WeightGroup, batch: &[&AeSample]) -> f64 {
        let traces: Vec<SampleTrace> = batch.iter().map(|s| self.forward(&s.x)).collect();
        match g {
            WeightGroup::Encoder | WeightGroup::Decoder => self.generator_loss(batch, &traces).0,
            WeightGroup::DiscT => self.discriminator_loss(batch, &traces).0,
            WeightGroup::DiscX => self.discriminator_loss(batch, &traces).1,
        }
    }

    fn epoch_loss(&self, samples: &[AeSample]) -> EpochLoss {
        let batch: Vec<&AeSample> = samples.iter().collect();
        let traces: Vec<SampleTrace> = batch.iter().map(|s| self.forward(&s.x)).collect();
        let (generator, template_rms, recon_rms) = self.generator_loss(&batch, &traces);
        let (disc_t, disc_x) = self.discriminator_loss(&batch, &traces);
        EpochLoss { generator, template_rms, recon_rms, disc_t, disc_x }
    }

    pub fn extract_features(&self, probe: &Image, template_symbols: &BinaryGrid) -> Result<DeepFeatures> {
        let n = self.config.n_sym;
        if template_symbols.shape() != (n, n) {
            return param(format!("template is {:?}, model expects {n}x{n}", template_symbols.shape()));
        }
        let t_hat = self.encode(probe)?;
        let est = t_hat.map(|&p| (p >= 0.5) as u8);
        let hamming_sym = metrics::symbol_distance(&est, template_symbols)?;
        let mut out = DeepFeatures { hamming_sym, recon_l2: None, disc_t_score: None, disc_x_score: None };
        if let Some(d) = &self.disc_t {
            out.disc_t_score = Some(sigmoid(d.forward(&centred(t_hat.as_slice())).output()[0]));
        }
        if let Some(dec) = &self.decoder {
            let mut x_hat = dec.forward(t_hat.as_slice(), n, self.config.symbol_px).x_hat;
            x_hat.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            out.recon_l2 = Some(rms_and_grad(probe.as_slice(), &x_hat).0);
            if let Some(d) = &self.disc_x {
                out.disc_x_score = Some(sigmoid(d.forward(&centred(&x_hat)).output()[0]));
            }
        }
        Ok(out)
    }

    /// Reconstruction `x̂ = f(g(x))`, clamped to `[0,1]`.
    pub fn reconstruct(&self, x: &Image) -> Result<Option<Image>> {
        let t_hat = self.encode(x)?;
        let (n, px) = (self.config.n_sym, self.config.symbol_px);
        Ok(match &self.decoder {
            Some(dec) => {
                let mut v = dec.forward(t_hat.as_slice(), n, px).x_hat;
                v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
                Some(Grid::from_vec(n * px, n * px, v)?)
            }
            None => None,
        })
    }
}

/// Discriminator gradient of `softplus(−D(real)) + softplus(D(fake))`.
fn logistic_backward(d: &Mlp, real: &[f64], fake: &[f64], scale: f64, grad: &mut [f64]) {
    let tr: MlpTrace = d.forward(real);
    let l = tr.output()[0];
    d.backward(&tr, &[(sigmoid(l) - 1.0) * scale], grad);
    let tf = d.forward(fake);
    let l = tf.output()[0];
    d.backward(&tf, &[sigmoid(l) * scale], grad);
}

/// Full-batch logistic training of a density-ratio discriminator separating
/// `real` (label 1) from `fake` (label 0), with the optimiser used in training.
pub fn fit_discriminator(d: &mut Mlp, real: &[Vec<f64>], fake: &[Vec<f64>], steps: usize, learning_rate: f64) {
    let mut opt = Adam::new(d.n_params(), learning_rate);
    let scale = 1.0 / real.len().max(fake.len()).max(1) as f64;
    for _ in 0..steps {
        let mut grad = vec![0.0; d.n_params()];
        for (r, f) in real.iter().zip(fake) {
            logistic_backward(d, r, f, scale, &mut grad);
        }
        opt.step(&mut d.params, &grad);
    }
}

/// d/d(input) of `weight · softplus(−D(input))`.
fn nonsaturating_input_grad(d: &Mlp, input: &[f64], weight: f64, scratch: &mut [f64]) -> Vec<f64> {
    let tr = d.forward(input);
    let l = tr.output()[0];
    d.backward(&tr, &[(sigmoid(l) - 1.0) * weight], scratch)
}

/// Per-group optimiser state.
struct Optimisers {
    enc: Adam,
    dec: Option<Adam>,
    dt: Option<Adam>,
    dx: Option<Adam>,
}

/// Trains an autoencoder on original codes and their templates.
pub fn train_ae(samples: &[AeSample], scenario: Scenario, config: &AeConfig) -> Result<AeModel> {
    let mut model = AeModel::new(scenario, config.clone())?;
    if samples.is_empty() {
        return param("no training samples");
    }
    for s in samples {
        model.check_sample(s)?;
    }
    train_steps(&mut model, samples, None)?;
    Ok(model)
}

/// Runs training; with `max_steps` stops after that many generator updates and
/// returns the encoder/decoder parameters after every step.
pub fn train_steps(model: &mut AeModel, samples: &[AeSample], max_steps: Option<usize>) -> Result<Vec<Vec<Vec<f64>>>> {
    let cfg = model.config.clone();
    let mut opt = Optimisers {
        enc: Adam::new(model.encoder.params().len(), cfg.learning_rate),
        dec: model.decoder.as_ref().map(|d| Adam::new(d.params().len(), cfg.learning_rate)),
        dt: model.disc_t.as_ref().map(|d| Adam::new(d.n_params(), cfg.disc_learning_rate)),
        dx: model.disc_x.as_ref().map(|d| Adam::new(d.n_params(), cfg.disc_learning_rate)),
    };
    let mut rng = seed::derived_rng(cfg.seed, "ae/shuffle", 0);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut snapshots = Vec::new();
    let mut steps = 0usize;
    model.loss_trace.clear();
    if max_steps.is_none() {
        model.loss_trace.push(model.epoch_loss(samples));
    }
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&AeSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let traces: Vec<SampleTrace> = batch.iter().map(|s| model.forward(&s.x)).collect();
            if model.disc_t.is_some() || model.disc_x.is_some() {
                let (gt, gx) = model.disc_grads(&batch, &traces);
                if let (Some(d), Some(o)) = (model.disc_t.as_mut(), opt.dt.as_mut()) {
                    o.step(&mut d.params, &gt);
                }
                if let (Some(d), Some(o)) = (model.disc_x.as_mut(), opt.dx.as_mut()) {
                    o.step(&mut d.params, &gx);
                }
            }
            let (ge, gd) = model.generator_grads(&batch, &traces);
            if ge.iter().chain(&gd).any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in epoch {epoch}; loss trace so far: {:?}",
                    model.loss_trace
                )));
            }
            let mut pe = model.encoder.params();
            opt.enc.step(&mut pe, &ge);
            model.encoder.set_params(&pe);
            if let (Some(d), Some(o)) = (model.decoder.as_mut(), opt.dec.as_mut()) {
                let mut pd = d.params();
                o.step(&mut pd, &gd);
                d.set_params(&pd);
            }
            steps += 1;
            if max_steps.is_some() {
                let mut snap = vec![model.encoder.params()];
                if let Some(d) = &model.disc_t {
                    snap.push(d.params.clone());
                }
                snapshots.push(snap);
            }
            if max_steps.is_some_and(|m| steps >= m) {
                return Ok(snapshots);
            }
        }
        if max_steps.is_none() {
            let l = model.epoch_loss(samples);
            if !l.generator.is_finite() {
                return Err(Error::Training(format!("loss became NaN in epoch {epoch}; trace: {:?}", model.loss_trace)));
            }
            log::debug!("ae scenario {} epoch {epoch}: {l:?}", model.scenario.number());
            model.loss_trace.push(l);
        }
    }
    Ok(snapshots)
}

/// Maximum relative error between analytic and central finite-difference
/// gradients over up to `coords_per_group` random coordinates of every active
/// weight group.
pub fn gradient_check(model: &AeModel, batch: &[AeSample], coords_per_group: usize, seed: u64) -> f64 {
    let refs: Vec<&AeSample> = batch.iter().collect();
    let grads = model.batch_grads(&refs);
    let mut rng = seed::derived_rng(seed, "ae/gradcheck", 0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for g in model.groups() {
        let analytic = match g {
            WeightGroup::Encoder => &grads.encoder,
            WeightGroup::Decoder => &grads.decoder,
            WeightGroup::DiscT => &grads.disc_t,
            WeightGroup::DiscX => &grads.disc_x,
        };
        let base = model.group_params(g);
        let mut probe = model.clone();
        let coords: Vec<usize> = if base.len() <= coords_per_group {
            (0..base.len()).collect()
        } else {
            (0..coords_per_group).map(|_| rng.gen_range(0..base.len())).collect()
        };
        for i in coords {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_group_params(g, &p);
            let up = probe.group_loss(g, &refs);
            p[i] = base[i] - h;
            probe.set_group_params(g, &p);
            let down = probe.group_loss(g, &refs);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric, 1e-6));
        }
    }
    worst
}
