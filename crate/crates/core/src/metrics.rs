//! Spatial-domain similarity between a probe and a digital or physical reference.

use serde::{Deserialize, Serialize};

use crate::channel::ObservedCode;
use crate::error::{param, Error, Result};
use crate::grid::{BinaryGrid, Grid, Image};
use crate::template::Template;

pub const OTSU_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Digital,
    Physical,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Digital => "digital",
            ReferenceKind::Physical => "physical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pearson: f64,
    pub hamming_sym: usize,
    pub l1: f64,
    pub l2: f64,
    pub reference_kind: ReferenceKind,
}

pub enum Reference<'a> {
    Digital(&'a Template),
    Physical(&'a ObservedCode),
}

/// Histogram bin of an intensity in `[0,1]`; bin `k` covers `[k/256, (k+1)/256)`.
#[inline]
pub fn bin_of(v: f64) -> usize {
    ((v * OTSU_BINS as f64).floor().max(0.0) as usize).min(OTSU_BINS - 1)
}

/// Otsu's threshold over a 256-bin histogram.
///
/// The split after bin `k` maximising the between-class variance is chosen
/// (lowest `k` on ties) and returned as that bin's upper edge `(k+1)/256`, so
/// that `v < threshold` selects exactly the lower class. The comparison is
/// done in exact integer arithmetic on bin sums.
pub fn otsu_threshold(image: &Image) -> Result<f64> {
    let mut hist = [0u64; OTSU_BINS];
    for &v in image.as_slice() {
        if !v.is_finite() {
            return param("image contains non-finite values");
        }
        hist[bin_of(v)] += 1;
    }
    let n: u64 = hist.iter().sum();
    let total: u64 = hist.iter().enumerate().map(|(k, &h)| k as u64 * h).sum();

    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for (k, &h) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        n0 += h;
        s0 += k as u64 * h;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // σ²_B · n² = (s0·n − S·n0)² / (n0·n1)
        let d = (s0 as i128 * n as i128 - total as i128 * n0 as i128).unsigned_abs();
        let num = d * d;
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => greater(num, den, bn, bd),
        };
        if better {
            best = Some((k, num, den));
        }
    }
    match best {
        Some((k, num, _)) if num > 0 => Ok((k + 1) as f64 / OTSU_BINS as f64),
        _ => Err(Error::Degenerate("histogram occupies a single bin".into())),
    }
}

/// `a/b > c/d` for non-negative fractions without overflow.
fn greater(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64 / b as f64) > (c as f64 / d as f64),
    }
}

/// Ink (1) where the image is darker than `threshold`.
pub fn binarize(image: &Image, threshold: f64) -> BinaryGrid {
    image.map(|&v| (v < threshold) as u8)
}

/// Reduces a binary pixel grid to symbols by block majority, ties → ink.
pub fn to_symbols(a: &BinaryGrid, symbol_px: usize) -> Result<BinaryGrid> {
    if symbol_px == 0 || a.rows() % symbol_px != 0 || a.cols() % symbol_px != 0 {
        return param(format!("{}x{} grid is not a multiple of symbol size {symbol_px}", a.rows(), a.cols()));
    }
    let block = symbol_px * symbol_px;
    Ok(Grid::from_fn(a.rows() / symbol_px, a.cols() / symbol_px, |i, j| {
        let mut ones = 0;
        for r in i * symbol_px..(i + 1) * symbol_px {
            for c in j * symbol_px..(j + 1) * symbol_px {
                ones += a.at(r, c) as usize;
            }
        }
        (2 * ones >= block) as u8
    }))
}

/// Number of symbols that differ between two symbol grids.
pub fn symbol_distance(a: &BinaryGrid, b: &BinaryGrid) -> Result<usize> {
    if !a.same_shape(b) {
        return param("symbol grids differ in shape");
    }
    Ok(a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| x != y).count())
}

/// Symbol-wise Hamming distance between a binary pixel estimate and a template.
pub fn hamming_symbols(a: &BinaryGrid, t: &Template) -> Result<usize> {
    let n = t.cdp_px();
    if a.shape() != (n, n) {
        return param(format!("estimate is {}x{}, template CDP area is {n}x{n}", a.rows(), a.cols()));
    }
    symbol_distance(&to_symbols(a, t.symbol_px)?, &t.symbols)
}

/// Sample Pearson correlation over flattened pixels.
pub fn pearson(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) || a.is_empty() {
        return param("pearson needs two non-empty images of the same shape");
    }
    let (ma, mb) = (a.mean(), b.mean());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("pearson correlation of a constant image".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute and root-mean-square per-pixel differences.
pub fn lp_distances(a: &Image, b: &Image) -> Result<(f64, f64)> {
    if !a.same_shape(b) || a.is_empty() {
        return param("lp distances need two non-empty images of the same shape");
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = x - y;
        s1 += d.abs();
        s2 += d * d;
    }
    let n = a.len() as f64;
    Ok((s1 / n, (s2 / n).sqrt()))
}

fn otsu_binarize(img: &Image) -> Result<BinaryGrid> {
    Ok(binarize(img, otsu_threshold(img)?))
}

/// All four metrics of `probe` against a reference.
///
/// A digital template is compared as its ideal reflectance rendering (paper 1,
/// ink 0). Against a physical reference both images are Otsu-binarized
/// individually before the symbol-wise Hamming distance.
pub fn feature_vector(probe: &ObservedCode, reference: Reference<'_>) -> Result<FeatureVector> {
    match reference {
        Reference::Digital(t) => {
            let ideal = t.pixels.to_reflectance();
            if !probe.image.same_shape(&ideal) {
                return param("probe and template differ in shape");
            }
            let (l1, l2) = lp_distances(&probe.image, &ideal)?;
            Ok(FeatureVector {
                pearson: pearson(&probe.image, &ideal)?,
                hamming_sym: hamming_symbols(&otsu_binarize(&probe.image)?, t)?,
                l1,
                l2,
                reference_kind: ReferenceKind::Digital,
            })
        }
        Reference::Physical(r) => {
            if !probe.image.same_shape(&r.image) {
                return param("probe and physical reference differ in shape");
            }
            let (l1, l2) = lp_distances(&probe.image, &r.image)?;
            let sp = r.symbol_px;
            let hamming_sym = if probe.image == r.image {
                0
            } else {
                symbol_distance(
                    &to_symbols(&otsu_binarize(&probe.image)?, sp)?,
                    &to_symbols(&otsu_binarize(&r.image)?, sp)?,
                )?
            };
            Ok(FeatureVector {
                pearson: pearson(&probe.image, &r.image)?,
                hamming_sym,
                l1,
                l2,
                reference_kind: ReferenceKind::Physical,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::template::generate_template;

    #[test]
    fn otsu_on_two_levels() {
        let img = Grid::from_fn(10, 10, |r, _| if r < 4 { 0.2 } else { 0.8 });
        let th = otsu_threshold(&img).unwrap();
        assert!((0.2..0.8).contains(&th));
        assert_eq!(th, oracles::otsu_exhaustive(&img).unwrap());
        assert_eq!(binarize(&img, th).count_ones(), 40);
    }

    #[test]
    fn otsu_rejects_constant_image() {
        assert!(matches!(otsu_threshold(&Grid::filled(4, 4, 0.3)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn binarize_extremes() {
        let img = Grid::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0);
        assert_eq!(binarize(&img, 0.0).count_ones(), 0);
        assert_eq!(binarize(&img, 1.0 + 1e-9).count_ones(), 16);
    }

    #[test]
    fn hamming_identity_and_complement() {
        let t = generate_template(4, 8, 3, 0.5).unwrap();
        assert_eq!(hamming_symbols(&t.pixels, &t).unwrap(), 0);
        let comp = t.pixels.map(|&v| 1 - v);
        assert_eq!(hamming_symbols(&comp, &t).unwrap(), 64);
        assert!(hamming_symbols(&Grid::filled(5, 5, 0), &t).is_err());
    }

    #[test]
    fn majority_ties_go_to_ink() {
        let mut a = Grid::filled(2, 2, 0u8);
        a.set(0, 0, 1);
        a.set(1, 1, 1);
        assert_eq!(to_symbols(&a, 2).unwrap().at(0, 0), 1);
    }

    #[test]
    fn pearson_basics() {
        let a = Grid::from_fn(3, 3, |r, c| (r * r + c) as f64);
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = a.map(|v| 5.0 - v);
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&a, &Grid::filled(3, 3, 1.0)).is_err());
        let x = Grid::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let y = Grid::from_vec(1, 3, vec![1.0, 2.0, 3.5]).unwrap();
        let expected = oracles::pearson_naive(x.as_slice(), y.as_slice());
        assert!((pearson(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn lp_examples() {
        let a = Grid::from_fn(4, 4, |r, c| (r + c) as f64 / 10.0);
        assert_eq!(lp_distances(&a, &a).unwrap(), (0.0, 0.0));
        let b = a.map(|v| v + 0.1);
        let (l1, l2) = lp_distances(&a, &b).unwrap();
        assert!((l1 - 0.1).abs() < 1e-12 && (l2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn feature_vector_against_itself() {
        let t = generate_template(4, 8, 3, 0.5).unwrap();
        let probe = ObservedCode {
            image: t.pixels.to_reflectance(),
            planes: None,
            label: crate::channel::CodeLabel::Original,
            template_id: "x".into(),
            acquisition_seed: 0,
            symbol_px: 3,
        };
        let f = feature_vector(&probe, Reference::Digital(&t)).unwrap();
        assert_eq!((f.hamming_sym, f.l1, f.l2), (0, 0.0, 0.0));
        let g = feature_vector(&probe, Reference::Physical(&probe)).unwrap();
        assert_eq!((g.hamming_sym, g.l1, g.l2), (0, 0.0, 0.0));
        assert_eq!(g.reference_kind, ReferenceKind::Physical);
    }
}
