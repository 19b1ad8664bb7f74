use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, AttackFamily, AttackParams, BinarizeMode, ChannelParams, CodeLabel, ObservedCode};
use crate::error::{param, Error, Result};
use crate::grid::{Grid, Image};
use crate::io;
use crate::seed;
use crate::template::{add_markers, generate_template, Template, TemplateMeta};

/// Settings of one copy-attack family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    pub dot_gain: f64,
    pub morph_cleanup: bool,
    pub binarize_mode: BinarizeMode,
}

impl AttackSettings {
    fn from_params(a: &AttackParams) -> Self {
        AttackSettings { dot_gain: a.reprint.dot_gain, morph_cleanup: a.morph_cleanup, binarize_mode: a.binarize_mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub fake1: AttackSettings,
    pub fake2: AttackSettings,
}

impl Default for AttackConfig {
    fn default() -> Self {
        use crate::channel::Substrate::White;
        AttackConfig {
            fake1: AttackSettings::from_params(&AttackParams::fake1(White)),
            fake2: AttackSettings::from_params(&AttackParams::fake2(White)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub templates: usize,
    pub n_sym: usize,
    pub symbol_px: usize,
    pub black_fraction: f64,
    pub marker_width_px: usize,
    /// Channel of the genuine printer and of every scanner; fakes only override dot gain and substrate.
    pub channel: ChannelParams,
    pub attack: AttackConfig,
    pub physical_reference: bool,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            templates: 300,
            n_sym: 24,
            symbol_px: 3,
            black_fraction: 0.5,
            marker_width_px: 6,
            channel: ChannelParams { color: true, ..ChannelParams::default() },
            attack: AttackConfig::default(),
            physical_reference: true,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.templates == 0 {
            return param("templates must be positive");
        }
        if self.n_sym < 2 || self.symbol_px == 0 || !(self.black_fraction > 0.0 && self.black_fraction < 1.0) {
            return param("n_sym >= 2, symbol_px >= 1 and black_fraction in (0,1) required");
        }
        if 2 * self.marker_width_px > self.n_sym * self.symbol_px {
            return param("marker_width_px exceeds half the code side");
        }
        self.channel.validate()?;
        for l in CodeLabel::FAKES {
            self.attack(l).expect("fake label").validate()?;
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        Ok(io::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    /// Attack settings for a fake label, reprinted and scanned through this config's channel.
    pub fn attack(&self, label: CodeLabel) -> Option<AttackParams> {
        let mut a = AttackParams::for_label(label)?;
        let s = match a.family {
            AttackFamily::Fake1 => &self.attack.fake1,
            AttackFamily::Fake2 => &self.attack.fake2,
        };
        a.binarize_mode = s.binarize_mode;
        a.morph_cleanup = s.morph_cleanup;
        a.reprint = ChannelParams { dot_gain: s.dot_gain, ..self.channel.clone() }.with_substrate(a.substrate);
        Some(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub label: CodeLabel,
    pub template_id: String,
    pub split: Split,
    pub augmentation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: DatasetConfig,
    pub template_ids: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeMeta {
    label: CodeLabel,
    template_id: String,
    acquisition_seed: u64,
    symbol_px: usize,
}

/// All codes printed from one template.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateItem {
    pub id: String,
    /// CDP area only (no marker frame).
    pub template: Template,
    pub original: ObservedCode,
    pub physical_reference: Option<ObservedCode>,
    /// In `CodeLabel::FAKES` order.
    pub fakes: Vec<ObservedCode>,
}

impl TemplateItem {
    /// Original followed by the fakes.
    pub fn probes(&self) -> impl Iterator<Item = &ObservedCode> {
        std::iter::once(&self.original).chain(&self.fakes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub items: Vec<TemplateItem>,
}

pub fn template_id(i: usize) -> String {
    format!("t{i:04}")
}

fn quantize_code(mut c: ObservedCode) -> ObservedCode {
    match c.planes.take() {
        Some(planes) => {
            let q: Vec<Image> = planes.iter().map(io::quantize_image).collect();
            c.image = channel::luminance(&q);
            c.planes = Some(q);
        }
        None => c.image = io::quantize_image(&c.image),
    }
    c
}

fn generate_item(cfg: &DatasetConfig, i: usize) -> Result<TemplateItem> {
    let id = template_id(i);
    let idx = i as u64;
    let t = generate_template(seed::derive_seed(cfg.seed, "template", idx), cfg.n_sym, cfg.symbol_px, cfg.black_fraction)?;
    let framed = add_markers(&t, cfg.marker_width_px)?;
    let p = cfg.channel.clone().with_seed(seed::derive_seed(cfg.seed, "acquire/original", idx));
    let ink = channel::print(&framed, &p)?;
    let original = quantize_code(channel::acquire(&ink, &p, CodeLabel::Original, &id)?);
    let physical_reference = if cfg.physical_reference {
        let pr = p.clone().with_seed(seed::derive_seed(cfg.seed, "acquire/reference", idx));
        Some(quantize_code(channel::acquire(&ink, &pr, CodeLabel::PhysicalReference, &id)?))
    } else {
        None
    };
    // the attacker scans the genuine print with its own device
    let ps = p.clone().with_seed(seed::derive_seed(cfg.seed, "attack/scan", idx));
    let scan = channel::acquire(&ink, &ps, CodeLabel::Original, &id)?;
    let fakes = CodeLabel::FAKES
        .iter()
        .map(|&l| {
            let mut a = cfg.attack(l).expect("fake label");
            a.reprint.seed = seed::derive_seed(cfg.seed, &format!("attack/{}", l.as_str()), idx);
            Ok(quantize_code(channel::copy_attack(&scan, &a, cfg.marker_width_px)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TemplateItem { id, template: t, original, physical_reference, fakes })
}

/// Generates the dataset in memory, at the 8-bit precision it is stored with.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let items = (0..cfg.templates).into_par_iter().map(|i| generate_item(cfg, i)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { config: cfg.clone(), items })
}

/// Assigns templates to train/val/test in 40/10/50 proportions.
pub fn split_indices(n: usize, seed_value: u64) -> Vec<Split> {
    let n_train = (0.4 * n as f64).round() as usize;
    let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::derived_rng(seed_value, "split", 0));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            out[i] = Split::Train;
        } else if rank < n_train + n_val {
            out[i] = Split::Val;
        }
    }
    out
}

/// Split of every template id in a manifest.
pub fn split(manifest: &DatasetManifest, seed_value: u64) -> BTreeMap<String, Split> {
    manifest.template_ids.iter().cloned().zip(split_indices(manifest.template_ids.len(), seed_value)).collect()
}

fn code_path(c: &ObservedCode) -> String {
    let ext = if c.planes.is_some() { "ppm" } else { "pgm" };
    format!("codes/{}_{}.{ext}", c.template_id, c.label.as_str())
}

fn write_code(dir: &Path, c: &ObservedCode) -> Result<String> {
    let rel = code_path(c);
    let path = dir.join(&rel);
    match &c.planes {
        Some(p) => io::write_ppm(&path, p)?,
        None => io::write_pgm(&path, &c.image)?,
    }
    let meta = CodeMeta {
        label: c.label,
        template_id: c.template_id.clone(),
        acquisition_seed: c.acquisition_seed,
        symbol_px: c.symbol_px,
    };
    io::write_json(&path.with_extension("json"), &meta)?;
    Ok(rel)
}

fn read_code(dir: &Path, rel: &str) -> Result<ObservedCode> {
    let path = dir.join(rel);
    let meta: CodeMeta = io::read_json(&path.with_extension("json"))?;
    let (image, planes) = if rel.ends_with(".ppm") {
        let planes = io::read_ppm(&path)?;
        (channel::luminance(&planes), Some(planes))
    } else {
        (io::read_pgm(&path)?, None)
    };
    Ok(ObservedCode {
        image,
        planes,
        label: meta.label,
        template_id: meta.template_id,
        acquisition_seed: meta.acquisition_seed,
        symbol_px: meta.symbol_px,
    })
}

impl Dataset {
    pub fn manifest(&self) -> Result<DatasetManifest> {
        let splits = split_indices(self.items.len(), self.config.seed);
        let mut entries = Vec::new();
        for (item, &s) in self.items.iter().zip(&splits) {
            let codes = item.probes().chain(item.physical_reference.as_ref());
            for c in codes {
                entries.push(ManifestEntry {
                    path: code_path(c),
                    label: c.label,
                    template_id: item.id.clone(),
                    split: s,
                    augmentation: "none".into(),
                });
            }
        }
        Ok(DatasetManifest {
            seed: self.config.seed,
            config_hash: self.config.hash()?,
            config: self.config.clone(),
            template_ids: self.items.iter().map(|i| i.id.clone()).collect(),
            entries,
        })
    }

    /// Writes templates, codes with JSON sidecars, and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        for item in &self.items {
            let tpath = dir.join(format!("templates/{}.pgm", item.id));
            io::write_pgm(&tpath, &item.template.pixels.map(|&v| 1.0 - v as f64))?;
            io::write_json(&tpath.with_extension("json"), &item.template.meta())?;
            for c in item.probes().chain(item.physical_reference.as_ref()) {
                write_code(dir, c)?;
            }
        }
        let manifest = self.manifest()?;
        io::write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest = io::read_json(&dir.join("manifest.json"))?;
        let cfg = manifest.config.clone();
        if cfg.hash()? != manifest.config_hash {
            return Err(Error::Data("manifest config hash does not match its config".into()));
        }
        let mut by_template: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in &manifest.entries {
            by_template.entry(e.template_id.as_str()).or_default().push(e);
        }
        let items = manifest
            .template_ids
            .par_iter()
            .map(|id| {
                let tpath = dir.join(format!("templates/{id}.pgm"));
                let meta: TemplateMeta = io::read_json(&tpath.with_extension("json"))?;
                let img = io::read_pgm(&tpath)?;
                let px = meta.symbol_px;
                let n = meta.n_sym;
                if img.shape() != (n * px, n * px) {
                    return Err(Error::Data(format!("template {id} has shape {:?}", img.shape())));
                }
                let symbols = Grid::from_fn(n, n, |r, c| (img.at(r * px, c * px) < 0.5) as u8);
                let template = Template::from_symbols(symbols, px, meta.seed)?;
                let mut original = None;
                let mut physical_reference = None;
                let mut fakes = Vec::new();
                for e in by_template.get(id.as_str()).map(Vec::as_slice).unwrap_or_default() {
                    let c = read_code(dir, &e.path)?;
                    match c.label {
                        CodeLabel::Original => original = Some(c),
                        CodeLabel::PhysicalReference => physical_reference = Some(c),
                        _ => fakes.push(c),
                    }
                }
                fakes.sort_by_key(|c| c.label);
                let original = original.ok_or_else(|| Error::Data(format!("template {id} has no original")))?;
                if fakes.iter().map(|c| c.label).ne(CodeLabel::FAKES) {
                    return Err(Error::Data(format!("template {id} lacks some fake kinds")));
                }
                Ok(TemplateItem { id: id.clone(), template, original, physical_reference, fakes })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { config: cfg, items })
    }

    pub fn indices(&self, splits: &[Split], which: Split) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| splits[i] == which).collect()
    }
}

/// Generates and writes a dataset.
pub fn synthesize_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    generate_dataset(cfg)?.write(dir)
}

/// One augmented variant of a code.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub tag: String,
    pub code: ObservedCode,
    /// Clockwise quarter turns applied (templates must be rotated alike).
    pub quarter_turns: usize,
}

pub const AUGMENT_GAMMAS: [f64; 8] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2];

fn map_code(c: &ObservedCode, f: impl Fn(&Image) -> Image) -> ObservedCode {
    ObservedCode {
        image: f(&c.image),
        planes: c.planes.as_ref().map(|p| p.iter().map(&f).collect()),
        ..c.clone()
    }
}

/// Clockwise rotation of the image and any colour planes.
pub fn rotate_code(code: &ObservedCode, quarter_turns: usize) -> ObservedCode {
    map_code(code, |g| g.rotate90(quarter_turns))
}

/// Identity, three rotations and eight gamma corrections (not composed).
pub fn augment(code: &ObservedCode) -> Vec<Augmented> {
    let mut out = vec![Augmented { tag: "identity".into(), code: code.clone(), quarter_turns: 0 }];
    for q in 1..4 {
        out.push(Augmented { tag: format!("rot{}", 90 * q), code: rotate_code(code, q), quarter_turns: q });
    }
    for g in AUGMENT_GAMMAS {
        let c = if g == 1.0 { code.clone() } else { map_code(code, |img| img.map(|v| v.powf(g))) };
        out.push(Augmented { tag: format!("gamma{g:.1}"), code: c, quarter_turns: 0 });
    }
    out
}
