//! Print → acquire channel and copy attacks.
//!
//! Printing spreads ink with a linear kernel (dot gain) and clamps coverage to
//! `[0,1]`. Acquisition maps coverage to reflectance, applies a Gaussian PSF,
//! illumination scaling, sensor noise and a gamma curve. Copy attacks estimate
//! the template from an acquired code and reprint the estimate.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{BinaryGrid, Grid, Image};
use crate::metrics;
use crate::seed;
use crate::template::Template;

/// Luminance weights for collapsing colour planes.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub dot_gain: f64,
    /// Half-width of the square ink-spread kernel; every neighbour gets weight `dot_gain / 8`.
    pub spread_radius: usize,
    pub blur_sigma: f64,
    pub substrate_albedo: f64,
    pub ink_albedo: f64,
    pub noise_sigma: f64,
    pub gamma: f64,
    pub illum_scale: f64,
    pub rotation_deg: f64,
    pub seed: u64,
    /// Emit three colour planes (image becomes their luminance).
    pub color: bool,
    /// Per-plane multipliers on the substrate albedo (colour mode only).
    pub substrate_tint: [f64; 3],
    /// Per-plane multipliers on the ink albedo (colour mode only).
    pub ink_tint: [f64; 3],
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            dot_gain: 0.12,
            spread_radius: 2,
            blur_sigma: 0.8,
            substrate_albedo: WHITE_PAPER,
            ink_albedo: 0.08,
            noise_sigma: 0.05,
            gamma: 1.0,
            illum_scale: 1.0,
            rotation_deg: 0.0,
            seed: 0,
            color: false,
            substrate_tint: [1.0, 1.0, 1.0],
            ink_tint: [1.0, 1.0, 1.0],
        }
    }
}

pub const WHITE_PAPER: f64 = 0.95;
pub const GRAY_PAPER: f64 = 0.75;

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.dot_gain,
            self.blur_sigma,
            self.substrate_albedo,
            self.ink_albedo,
            self.noise_sigma,
            self.gamma,
            self.illum_scale,
            self.rotation_deg,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return param("channel parameters must be finite");
        }
        if self.dot_gain < 0.0 || self.blur_sigma < 0.0 || self.noise_sigma < 0.0 {
            return param("dot_gain, blur_sigma and noise_sigma must be >= 0");
        }
        if !(self.substrate_albedo > 0.0 && self.substrate_albedo <= 1.0) {
            return param("substrate_albedo must lie in (0,1]");
        }
        if !(self.ink_albedo >= 0.0 && self.ink_albedo < self.substrate_albedo) {
            return param("ink_albedo must lie in [0, substrate_albedo)");
        }
        if self.gamma <= 0.0 || self.illum_scale <= 0.0 {
            return param("gamma and illum_scale must be > 0");
        }
        if self.substrate_tint.iter().chain(&self.ink_tint).any(|t| !(t.is_finite() && *t > 0.0)) {
            return param("colour tints must be positive");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_substrate(mut self, substrate: Substrate) -> Self {
        self.substrate_albedo = substrate.albedo();
        self.substrate_tint = substrate.tint();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substrate {
    White,
    Gray,
}

impl Substrate {
    pub fn albedo(self) -> f64 {
        match self {
            Substrate::White => WHITE_PAPER,
            Substrate::Gray => GRAY_PAPER,
        }
    }

    /// Gray stock is slightly warm; white stock slightly blue.
    pub fn tint(self) -> [f64; 3] {
        match self {
            Substrate::White => [0.99, 1.0, 1.02],
            Substrate::Gray => [1.03, 1.0, 0.95],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeLabel {
    Original,
    Fake1White,
    Fake1Gray,
    Fake2White,
    Fake2Gray,
    PhysicalReference,
}

impl CodeLabel {
    pub const CLASSES: [CodeLabel; 5] = [
        CodeLabel::Original,
        CodeLabel::Fake1White,
        CodeLabel::Fake1Gray,
        CodeLabel::Fake2White,
        CodeLabel::Fake2Gray,
    ];
    pub const FAKES: [CodeLabel; 4] =
        [CodeLabel::Fake1White, CodeLabel::Fake1Gray, CodeLabel::Fake2White, CodeLabel::Fake2Gray];

    pub fn as_str(self) -> &'static str {
        match self {
            CodeLabel::Original => "original",
            CodeLabel::Fake1White => "fake1_white",
            CodeLabel::Fake1Gray => "fake1_gray",
            CodeLabel::Fake2White => "fake2_white",
            CodeLabel::Fake2Gray => "fake2_gray",
            CodeLabel::PhysicalReference => "physical_reference",
        }
    }

    /// Index among the five authentication classes.
    pub fn class_index(self) -> Option<usize> {
        CodeLabel::CLASSES.iter().position(|&c| c == self)
    }

    pub fn is_fake(self) -> bool {
        CodeLabel::FAKES.contains(&self)
    }
}

impl std::fmt::Display for CodeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CodeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CodeLabel::CLASSES
            .iter()
            .chain(std::iter::once(&CodeLabel::PhysicalReference))
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Param(format!("unknown code label {s:?}")))
    }
}

/// An acquired code: original, fake, or physical reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedCode {
    pub image: Image,
    /// Colour planes when acquired in colour mode; `image` is then their luminance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planes: Option<Vec<Image>>,
    pub label: CodeLabel,
    pub template_id: String,
    pub acquisition_seed: u64,
    pub symbol_px: usize,
}

/// Ink coverage after printing, including the marker frame if one was printed.
#[derive(Clone, Debug, PartialEq)]
pub struct InkMap {
    pub coverage: Image,
    pub marker_width_px: usize,
    pub symbol_px: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinarizeMode {
    Otsu,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFamily {
    /// Copier with built-in morphological cleanup and mild dot gain.
    Fake1,
    /// Copier without cleanup and strong dot gain.
    Fake2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    pub family: AttackFamily,
    pub substrate: Substrate,
    pub binarize_mode: BinarizeMode,
    pub morph_cleanup: bool,
    pub reprint: ChannelParams,
}

impl AttackParams {
    pub fn fake1(substrate: Substrate) -> Self {
        AttackParams {
            family: AttackFamily::Fake1,
            substrate,
            binarize_mode: BinarizeMode::Otsu,
            morph_cleanup: true,
            reprint: ChannelParams { dot_gain: 0.3, ..ChannelParams::default() }.with_substrate(substrate),
        }
    }

    pub fn fake2(substrate: Substrate) -> Self {
        AttackParams {
            family: AttackFamily::Fake2,
            substrate,
            binarize_mode: BinarizeMode::Otsu,
            morph_cleanup: false,
            reprint: ChannelParams { dot_gain: 0.9, ..ChannelParams::default() }.with_substrate(substrate),
        }
    }

    pub fn for_label(label: CodeLabel) -> Option<Self> {
        match label {
            CodeLabel::Fake1White => Some(Self::fake1(Substrate::White)),
            CodeLabel::Fake1Gray => Some(Self::fake1(Substrate::Gray)),
            CodeLabel::Fake2White => Some(Self::fake2(Substrate::White)),
            CodeLabel::Fake2Gray => Some(Self::fake2(Substrate::Gray)),
            _ => None,
        }
    }

    pub fn label(&self) -> CodeLabel {
        match (self.family, self.substrate) {
            (AttackFamily::Fake1, Substrate::White) => CodeLabel::Fake1White,
            (AttackFamily::Fake1, Substrate::Gray) => CodeLabel::Fake1Gray,
            (AttackFamily::Fake2, Substrate::White) => CodeLabel::Fake2White,
            (AttackFamily::Fake2, Substrate::Gray) => CodeLabel::Fake2Gray,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BinarizeMode::Fixed(t) = self.binarize_mode {
            if !(t > 0.0 && t < 1.0) {
                return param(format!("fixed binarization threshold must lie in (0,1), got {t}"));
            }
        }
        self.reprint.validate()
    }
}

fn spread(pixels: &BinaryGrid, dot_gain: f64, radius: usize) -> Image {
    let (rows, cols) = pixels.shape();
    if dot_gain == 0.0 || radius == 0 {
        return pixels.to_f64();
    }
    let w = dot_gain / 8.0;
    let r = radius as isize;
    Grid::from_fn(rows, cols, |i, j| {
        let centre = pixels.at(i, j) as f64;
        let mut neighbours = 0usize;
        for di in -r..=r {
            for dj in -r..=r {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii >= 0 && jj >= 0 && (ii as usize) < rows && (jj as usize) < cols {
                    neighbours += pixels.at(ii as usize, jj as usize) as usize;
                }
            }
        }
        (centre + w * neighbours as f64).clamp(0.0, 1.0)
    })
}

/// Prints a template (including its marker frame, if any).
pub fn print(t: &Template, p: &ChannelParams) -> Result<InkMap> {
    p.validate()?;
    Ok(InkMap {
        coverage: spread(&t.pixels, p.dot_gain, p.spread_radius),
        marker_width_px: t.marker_width_px,
        symbol_px: t.symbol_px,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (rows, cols) = img.shape();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horiz: Image = Grid::from_fn(rows, cols, |i, j| {
        k.iter().enumerate().map(|(t, w)| w * img.at(i, clampi(j as isize + t as isize - r, cols))).sum()
    });
    Grid::from_fn(rows, cols, |i, j| {
        k.iter().enumerate().map(|(t, w)| w * horiz.at(clampi(i as isize + t as isize - r, rows), j)).sum()
    })
}

fn bilinear(img: &Image, y: f64, x: f64) -> f64 {
    let (rows, cols) = img.shape();
    let y = y.clamp(0.0, (rows - 1) as f64);
    let x = x.clamp(0.0, (cols - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
    let bot = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Rotates about the image centre (bilinear, replicated borders).
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (rows, cols) = img.shape();
    let (cy, cx) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    Grid::from_fn(rows, cols, |i, j| {
        let (dy, dx) = (i as f64 - cy, j as f64 - cx);
        // inverse mapping: output pixel samples the source rotated by -degrees
        bilinear(img, cy + c * dy - s * dx, cx + s * dy + c * dx)
    })
}

fn acquire_plane(ink: &Image, p: &ChannelParams, substrate: f64, ink_albedo: f64, noise: &mut impl FnMut() -> f64) -> Image {
    let reflectance = ink.map(|&v| substrate * (1.0 - v) + ink_albedo * v);
    let mut img = gaussian_blur(&reflectance, p.blur_sigma);
    for v in img.as_mut_slice() {
        let lit = *v * p.illum_scale + noise();
        *v = lit.clamp(0.0, 1.0).powf(p.gamma);
    }
    if p.rotation_deg != 0.0 {
        // geometric distortion, then synchronisation with the known transform
        img = rotate(&rotate(&img, p.rotation_deg), -p.rotation_deg);
    }
    img.clamp01();
    img
}

fn crop(img: &Image, margin: usize) -> Image {
    if margin == 0 {
        return img.clone();
    }
    img.window(margin, margin, img.rows() - 2 * margin, img.cols() - 2 * margin)
}

/// Acquires a printed ink map, returning the CDP area with the marker frame cropped.
pub fn acquire(ink: &InkMap, p: &ChannelParams, label: CodeLabel, template_id: &str) -> Result<ObservedCode> {
    p.validate()?;
    let mut rng = seed::rng(p.seed);
    let normal = Normal::new(0.0, p.noise_sigma.max(0.0)).map_err(|e| Error::Param(e.to_string()))?;
    let mut noise = || if p.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
    let m = ink.marker_width_px;
    let (image, planes) = if p.color {
        let planes: Vec<Image> = (0..3)
            .map(|k| {
                let s = (p.substrate_albedo * p.substrate_tint[k]).min(1.0);
                let a = (p.ink_albedo * p.ink_tint[k]).min(s);
                crop(&acquire_plane(&ink.coverage, p, s, a, &mut noise), m)
            })
            .collect();
        (luminance(&planes), Some(planes))
    } else {
        (crop(&acquire_plane(&ink.coverage, p, p.substrate_albedo, p.ink_albedo, &mut noise), m), None)
    };
    Ok(ObservedCode {
        image,
        planes,
        label,
        template_id: template_id.to_string(),
        acquisition_seed: p.seed,
        symbol_px: ink.symbol_px,
    })
}

pub fn luminance(planes: &[Image]) -> Image {
    let mut out = planes[0].map(|v| v * LUMA[0]);
    for (k, plane) in planes.iter().enumerate().skip(1) {
        for (o, v) in out.as_mut_slice().iter_mut().zip(plane.as_slice()) {
            *o += LUMA[k] * v;
        }
    }
    out
}

/// One pass of a 3×3 majority filter (replicated borders).
pub fn majority_filter(b: &BinaryGrid) -> BinaryGrid {
    let (rows, cols) = b.shape();
    Grid::from_fn(rows, cols, |i, j| {
        let mut ones = 0;
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let ii = (i as isize + di).clamp(0, rows as isize - 1) as usize;
                let jj = (j as isize + dj).clamp(0, cols as isize - 1) as usize;
                ones += b.at(ii, jj) as usize;
            }
        }
        (ones >= 5) as u8
    })
}

/// Template estimate an attacker recovers from an acquired code.
pub fn estimate_template(observed: &ObservedCode, a: &AttackParams) -> Result<BinaryGrid> {
    a.validate()?;
    let threshold = match a.binarize_mode {
        BinarizeMode::Otsu => metrics::otsu_threshold(&observed.image)
            .map_err(|e| Error::Attack(format!("cannot binarize code {}: {e}", observed.template_id)))?,
        BinarizeMode::Fixed(t) => t,
    };
    let mut est = metrics::binarize(&observed.image, threshold);
    if a.morph_cleanup {
        est = majority_filter(&est);
    }
    Ok(est)
}

/// Scans-and-reprints `observed`. The reprint carries a marker frame of
/// `marker_width_px` so it is acquired under the same geometry as originals.
pub fn copy_attack(observed: &ObservedCode, a: &AttackParams, marker_width_px: usize) -> Result<ObservedCode> {
    let est = estimate_template(observed, a)?;
    let framed = frame_pixels(&est, marker_width_px)?;
    let ink = InkMap {
        coverage: spread(&framed, a.reprint.dot_gain, a.reprint.spread_radius),
        marker_width_px,
        symbol_px: observed.symbol_px,
    };
    acquire(&ink, &a.reprint, a.label(), &observed.template_id)
}

fn frame_pixels(est: &BinaryGrid, w: usize) -> Result<BinaryGrid> {
    if w == 0 {
        return Ok(est.clone());
    }
    let n = est.rows();
    if 2 * w > n {
        return param("marker width exceeds half the grid");
    }
    let side = n + 2 * w;
    Ok(Grid::from_fn(side, side, |r, c| {
        let in_r = r >= w && r < w + n;
        let in_c = c >= w && c < w + n;
        match (in_r, in_c) {
            (true, true) => est.at(r - w, c - w),
            (false, false) => 1,
            _ => 0,
        }
    }))
}
