//! Binary copy detection pattern templates.
//!
//! A template is a random grid of black/white symbols, block-upsampled to
//! pixel resolution. Ink is `1`, paper is `0`. An optional frame with four
//! solid corner squares (synchro-markers) can be added around the CDP area.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::{BinaryGrid, Grid};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub symbols: BinaryGrid,
    pub symbol_px: usize,
    /// Pixel grid. When `marker_width_px > 0` this includes the marker frame.
    pub pixels: BinaryGrid,
    pub seed: u64,
    pub marker_width_px: usize,
}

/// Sidecar metadata written next to a template PGM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateMeta {
    pub seed: u64,
    pub n_sym: usize,
    pub symbol_px: usize,
    pub marker_width_px: usize,
}

impl Template {
    pub fn n_sym(&self) -> usize {
        self.symbols.rows()
    }

    /// Side length of the CDP area in pixels (without marker frame).
    pub fn cdp_px(&self) -> usize {
        self.n_sym() * self.symbol_px
    }

    pub fn meta(&self) -> TemplateMeta {
        TemplateMeta {
            seed: self.seed,
            n_sym: self.n_sym(),
            symbol_px: self.symbol_px,
            marker_width_px: self.marker_width_px,
        }
    }

    /// Builds a template from a symbol grid (used by fixtures and augmentation).
    pub fn from_symbols(symbols: BinaryGrid, symbol_px: usize, seed: u64) -> Result<Self> {
        if symbols.rows() != symbols.cols() || symbols.rows() < 2 {
            return param("symbol grid must be square with side >= 2");
        }
        if symbol_px == 0 {
            return param("symbol_px must be >= 1");
        }
        if symbols.as_slice().iter().any(|&v| v > 1) {
            return param("symbol entries must be 0 or 1");
        }
        let pixels = symbols.upsample(symbol_px);
        Ok(Template { symbols, symbol_px, pixels, seed, marker_width_px: 0 })
    }

    /// Rotates the CDP by quarter turns clockwise. Marker-free templates only.
    pub fn rotate90(&self, quarter_turns: usize) -> Result<Self> {
        if self.marker_width_px != 0 {
            return Err(Error::State("rotate a cropped template".into()));
        }
        Template::from_symbols(self.symbols.rotate90(quarter_turns), self.symbol_px, self.seed)
    }
}

pub fn generate_template(seed: u64, n_sym: usize, symbol_px: usize, black_fraction: f64) -> Result<Template> {
    if n_sym < 2 {
        return param(format!("n_sym must be >= 2, got {n_sym}"));
    }
    if symbol_px < 1 {
        return param("symbol_px must be >= 1");
    }
    if !(black_fraction > 0.0 && black_fraction < 1.0) {
        return param(format!("black_fraction must lie in (0,1), got {black_fraction}"));
    }
    let mut rng = seed::rng(seed);
    let symbols = Grid::from_fn(n_sym, n_sym, |_, _| rng.gen_bool(black_fraction) as u8);
    Template::from_symbols(symbols, symbol_px, seed)
}

/// Surrounds the CDP area with a white frame of width `marker_width_px` whose
/// four corner squares are solid black.
pub fn add_markers(t: &Template, marker_width_px: usize) -> Result<Template> {
    if t.marker_width_px != 0 {
        return Err(Error::State("template already carries markers".into()));
    }
    if marker_width_px == 0 {
        return Ok(t.clone());
    }
    let n = t.pixels.rows();
    if 2 * marker_width_px > n {
        return param(format!("marker width {marker_width_px} exceeds half of the {n}px grid"));
    }
    let w = marker_width_px;
    let side = n + 2 * w;
    let pixels = Grid::from_fn(side, side, |r, c| {
        let in_r = r >= w && r < w + n;
        let in_c = c >= w && c < w + n;
        if in_r && in_c {
            t.pixels.at(r - w, c - w)
        } else if !in_r && !in_c {
            1
        } else {
            0
        }
    });
    Ok(Template { pixels, marker_width_px: w, ..t.clone() })
}

/// Returns the central CDP area of a template produced by [`add_markers`].
pub fn crop_to_cdp(t: &Template) -> Result<Template> {
    let w = t.marker_width_px;
    if w == 0 {
        return Ok(t.clone());
    }
    let n = t.cdp_px();
    if t.pixels.rows() != n + 2 * w || t.pixels.cols() != n + 2 * w {
        return Err(Error::State("pixel grid does not match recorded marker frame".into()));
    }
    Ok(Template { pixels: t.pixels.window(w, w, n, n), marker_width_px: 0, ..t.clone() })
}
