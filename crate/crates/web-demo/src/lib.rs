//! Browser demo. Each exported function takes plain numbers and strings and
//! returns a JSON document; the page in `www/` renders it on canvases.
//! The inner `*_view` functions hold the logic so they can be tested natively.

use cdp_authkit::channel::{acquire, copy_attack, print, AttackParams, ChannelParams, CodeLabel};
use cdp_authkit::error::{Error, Result};
use cdp_authkit::grid::{BinaryGrid, Image};
use cdp_authkit::metrics::{bin_of, binarize, hamming_symbols, otsu_threshold, pearson, OTSU_BINS};
use cdp_authkit::ocsvm::{fit_ocsvm, SV_EPS};
use cdp_authkit::seed::derive_seed;
use cdp_authkit::template::generate_template;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps a single call well under a second.
pub const MAX_SYMBOLS: usize = 64;
pub const MAX_POINTS: usize = 400;

/// Row-major 8-bit grey image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gray8 {
    pub side: usize,
    pub pixels: Vec<u8>,
}

impl Gray8 {
    fn from_image(img: &Image) -> Gray8 {
        Gray8 { side: img.rows(), pixels: img.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect() }
    }

    /// Ink (1) is drawn black.
    fn from_bits(b: &BinaryGrid) -> Gray8 {
        Gray8 { side: b.rows(), pixels: b.as_slice().iter().map(|&v| if v == 1 { 0 } else { 255 }).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeView {
    pub label: String,
    pub image: Gray8,
    pub pearson: f64,
    pub hamming: usize,
    pub threshold: f64,
    pub binary: Gray8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationView {
    pub n_sym: usize,
    pub symbol_px: usize,
    pub template: Gray8,
    pub original: CodeView,
    pub fake: CodeView,
}

fn code_view(label: CodeLabel, img: &Image, t: &cdp_authkit::template::Template, reference: &Image) -> Result<CodeView> {
    let threshold = otsu_threshold(img)?;
    let bits = binarize(img, threshold);
    Ok(CodeView {
        label: label.to_string(),
        image: Gray8::from_image(img),
        pearson: pearson(img, reference)?,
        hamming: hamming_symbols(&bits, t)?,
        threshold,
        binary: Gray8::from_bits(&bits),
    })
}

/// Prints and scans one code, then copies it with the chosen attack.
pub fn simulation_view(seed: u64, n_sym: usize, dot_gain: f64, noise_sigma: f64, attack: &str) -> Result<SimulationView> {
    if n_sym == 0 || n_sym > MAX_SYMBOLS {
        return Err(Error::Param(format!("n_sym must lie in 1..={MAX_SYMBOLS}")));
    }
    let label: CodeLabel = attack.parse()?;
    let attack = AttackParams::for_label(label).ok_or_else(|| Error::Param(format!("{attack} is not an attack")))?;
    let symbol_px = 3;
    let t = generate_template(derive_seed(seed, "demo/template", 0), n_sym, symbol_px, 0.5)?;
    let channel = ChannelParams { dot_gain, noise_sigma, seed: derive_seed(seed, "demo/scan", 0), ..ChannelParams::default() };
    let original = acquire(&print(&t, &channel)?, &channel, CodeLabel::Original, "demo")?;
    let attack = AttackParams { reprint: attack.reprint.with_seed(derive_seed(seed, "demo/attack", 0)), ..attack };
    let fake = copy_attack(&original, &attack, 0)?;
    let reference = t.pixels.to_reflectance();
    Ok(SimulationView {
        n_sym,
        symbol_px,
        template: Gray8::from_bits(&t.pixels),
        original: code_view(CodeLabel::Original, &original.image, &t, &reference)?,
        fake: code_view(label, &fake.image, &t, &reference)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OtsuView {
    pub histogram: Vec<u64>,
    pub threshold: f64,
    /// Between-class variance of every candidate split, in histogram order.
    pub separation: Vec<f64>,
    pub binary: Gray8,
}

/// Histogram, Otsu criterion and binarization of an 8-bit image.
pub fn otsu_view(side: usize, pixels: &[u8]) -> Result<OtsuView> {
    if side == 0 || pixels.len() != side * side {
        return Err(Error::Param(format!("expected {side}x{side} pixels, got {}", pixels.len())));
    }
    let img = Image::from_vec(side, side, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    let mut histogram = vec![0u64; OTSU_BINS];
    for &v in img.as_slice() {
        histogram[bin_of(v)] += 1;
    }
    let n = img.len() as f64;
    let mut separation = Vec::with_capacity(OTSU_BINS - 1);
    let (mut w0, mut s0) = (0.0, 0.0);
    let total: f64 = histogram.iter().enumerate().map(|(k, &h)| k as f64 * h as f64).sum();
    for (k, &h) in histogram.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += h as f64;
        s0 += k as f64 * h as f64;
        let w1 = n - w0;
        separation.push(if w0 == 0.0 || w1 == 0.0 { 0.0 } else { (s0 / w0 - (total - s0) / w1).powi(2) * w0 * w1 / (n * n) });
    }
    let threshold = otsu_threshold(&img)?;
    Ok(OtsuView { histogram, threshold, separation, binary: Gray8::from_bits(&binarize(&img, threshold)) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryView {
    pub resolution: usize,
    /// Decision values, row-major with row 0 at `y = 0`.
    pub decision: Vec<f64>,
    pub support: Vec<bool>,
    pub outliers: Vec<bool>,
    pub rho: f64,
}

/// Fits a one-class SVM to points in the unit square and samples its decision function.
pub fn boundary_view(xy: &[f64], nu: f64, gamma: f64, resolution: usize) -> Result<BoundaryView> {
    if xy.len() % 2 != 0 || xy.is_empty() || xy.len() / 2 > MAX_POINTS {
        return Err(Error::Param(format!("need 1..={MAX_POINTS} (x, y) pairs")));
    }
    if resolution == 0 || resolution > 200 {
        return Err(Error::Param("resolution must lie in 1..=200".into()));
    }
    let points: Vec<Vec<f64>> = xy.chunks(2).map(|p| p.to_vec()).collect();
    let fit = fit_ocsvm(&points, nu, gamma, 1e-6)?;
    let grid = fit.model.boundary_grid([(0.0, 1.0), (0.0, 1.0)], resolution)?;
    Ok(BoundaryView {
        resolution,
        decision: grid.into_vec(),
        support: fit.alpha_full.iter().map(|a| *a > SV_EPS).collect(),
        outliers: fit.train_decision.iter().map(|f| *f < 0.0).collect(),
        rho: fit.model.rho,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(Error::from)).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(seed: u32, n_sym: u32, dot_gain: f64, noise_sigma: f64, attack: &str) -> std::result::Result<String, JsValue> {
    to_js(simulation_view(seed as u64, n_sym as usize, dot_gain, noise_sigma, attack))
}

#[wasm_bindgen]
pub fn otsu(side: u32, pixels: &[u8]) -> std::result::Result<String, JsValue> {
    to_js(otsu_view(side as usize, pixels))
}

#[wasm_bindgen]
pub fn ocsvm_boundary(xy: &[f64], nu: f64, gamma: f64, resolution: u32) -> std::result::Result<String, JsValue> {
    to_js(boundary_view(xy, nu, gamma, resolution as usize))
}
