//! Dataset synthesis, splits, augmentation, repeated seeded experiment runs,
//! error reports and PCA embeddings.

mod dataset;
mod pca;
mod report;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{
    augment, generate_dataset, AttackConfig, AttackSettings, rotate_code, split, split_indices, synthesize_dataset, template_id, Augmented, Dataset, DatasetConfig,
    DatasetManifest, ManifestEntry, Split, TemplateItem, AUGMENT_GAMMAS,
};
pub use pca::{pca_embed, Embedding};
pub use report::{mean_std, runs_from_csv, runs_to_csv, ErrorReport, Metric, ReportRow, RunEntry, RunResult};

use crate::channel::{CodeLabel, ObservedCode};
use crate::decision::{self, Thresholds};
use crate::deepfeat::{self, AeConfig, AeModel, AeSample, DeepFeatures, Scenario};
use crate::error::{param, Error, Result};
use crate::grid::Image;
use crate::metrics::{self, Reference, ReferenceKind};
use crate::ocsvm::{self, OcSvmModel};
use crate::seed;
use crate::supervised::{self, TrainConfig};
use crate::template::Template;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Supervised5Class,
    SupervisedBinaryPerFake,
    OcsvmSpatial,
    Deep(Scenario),
}

impl Preset {
    pub fn all() -> Vec<Preset> {
        let mut v = vec![Preset::Supervised5Class, Preset::SupervisedBinaryPerFake, Preset::OcsvmSpatial];
        v.extend(Scenario::ALL.map(Preset::Deep));
        v
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Supervised5Class => f.write_str("supervised-5class"),
            Preset::SupervisedBinaryPerFake => f.write_str("supervised-binary-per-fake"),
            Preset::OcsvmSpatial => f.write_str("ocsvm-spatial"),
            Preset::Deep(s) => write!(f, "deep-scenario-{}", s.number()),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::all()
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Param(format!("unknown preset {s:?}; expected one of {:?}", Preset::all().iter().map(|p| p.to_string()).collect::<Vec<_>>())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub seed: u64,
    /// Augment the training split (rotations and gamma).
    pub augment: bool,
    pub supervised: TrainConfig,
    pub ae: AeConfig,
    /// Candidate ν values for the spatial OC-SVM; the one with the lowest validation P_miss wins.
    pub ocsvm_nu_grid: Vec<f64>,
    pub ocsvm_gamma: f64,
    /// ν of the OC-SVM over the two deep features.
    pub deep_ocsvm_nu: f64,
    pub ocsvm_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            runs: 5,
            seed: 0,
            augment: true,
            supervised: TrainConfig::default(),
            ae: AeConfig::default(),
            ocsvm_nu_grid: vec![0.0005, 0.01, 0.03, 0.1],
            ocsvm_gamma: 0.1,
            deep_ocsvm_nu: 0.0005,
            ocsvm_tol: 1e-6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return param("runs must be positive");
        }
        if self.ocsvm_nu_grid.is_empty() || self.ocsvm_nu_grid.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return param("ocsvm_nu_grid must be non-empty with values in (0,1]");
        }
        if !(self.deep_ocsvm_nu > 0.0 && self.deep_ocsvm_nu <= 1.0) || !(self.ocsvm_gamma > 0.0) || !(self.ocsvm_tol > 0.0) {
            return param("deep_ocsvm_nu in (0,1], positive ocsvm_gamma and ocsvm_tol required");
        }
        Ok(())
    }
}

fn entry(setup: &str, class: &str, metric: Metric, value: f64) -> RunEntry {
    RunEntry { setup: setup.to_string(), class: class.to_string(), metric, value }
}

/// Seed of run `r`.
pub fn run_seed(master: u64, r: usize) -> u64 {
    seed::derive_seed(master, "run", r as u64)
}

struct RunSplit {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn run_split(ds: &Dataset, seed_value: u64) -> Result<RunSplit> {
    let s = split_indices(ds.items.len(), seed_value);
    let rs = RunSplit { train: ds.indices(&s, Split::Train), val: ds.indices(&s, Split::Val), test: ds.indices(&s, Split::Test) };
    if rs.train.is_empty() || rs.val.is_empty() || rs.test.is_empty() {
        return Err(Error::Data(format!("{} templates are too few for a train/val/test split", ds.items.len())));
    }
    Ok(rs)
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        hit += f as usize;
        n += 1;
    }
    hit as f64 / n as f64
}

/// Training variants of a code, paired with the correspondingly rotated template.
fn training_variants(code: &ObservedCode, t: &Template, augment_on: bool) -> Vec<(ObservedCode, Template, usize)> {
    if !augment_on {
        return vec![(code.clone(), t.clone(), 0)];
    }
    augment(code)
        .into_iter()
        .map(|a| {
            let rt = t.rotate90(a.quarter_turns).expect("dataset templates carry no markers");
            (a.code, rt, a.quarter_turns)
        })
        .collect()
}

// ---------------------------------------------------------------- deep features

/// Autoencoder training samples from the originals of `idx`.
pub fn ae_samples(ds: &Dataset, idx: &[usize], augment_on: bool) -> Vec<AeSample> {
    idx.iter()
        .flat_map(|&i| {
            let item = &ds.items[i];
            training_variants(&item.original, &item.template, augment_on)
                .into_iter()
                .map(|(c, t, _)| AeSample { x: c.image, t: t.symbols })
        })
        .collect()
}

/// Autoencoder config with the geometry of the dataset.
pub fn ae_config_for(ds: &Dataset, base: &AeConfig, seed_value: u64) -> AeConfig {
    AeConfig { n_sym: ds.config.n_sym, symbol_px: ds.config.symbol_px, seed: seed_value, ..base.clone() }
}

pub fn deep_features(model: &AeModel, codes: &[(&ObservedCode, &Template)]) -> Result<Vec<DeepFeatures>> {
    codes.par_iter().map(|(c, t)| model.extract_features(&c.image, &t.symbols)).collect()
}

fn deep_vector(f: &DeepFeatures) -> Vec<f64> {
    vec![f.hamming_sym as f64, f.recon_l2.unwrap_or(0.0)]
}

fn run_deep(ds: &Dataset, cfg: &ExperimentConfig, scenario: Scenario, seed_value: u64) -> Result<Vec<RunEntry>> {
    let sp = run_split(ds, seed_value)?;
    let samples = ae_samples(ds, &sp.train, cfg.augment);
    let model = deepfeat::train_ae(&samples, scenario, &ae_config_for(ds, &cfg.ae, seed_value))?;

    let val: Vec<(&ObservedCode, &Template)> = sp.val.iter().map(|&i| (&ds.items[i].original, &ds.items[i].template)).collect();
    let val_f = deep_features(&model, &val)?;
    let recon: Vec<f64> = val_f.iter().filter_map(|f| f.recon_l2).collect();
    let th = decision::calibrate(&val_f.iter().map(|f| f.hamming_sym).collect::<Vec<_>>(), &recon)?;

    let svm = if scenario.has_decoder() {
        let train_f: Vec<Vec<f64>> = samples
            .par_iter()
            .map(|s| model.extract_features(&s.x, &s.t).map(|f| deep_vector(&f)))
            .collect::<Result<_>>()?;
        Some(ocsvm::train_ocsvm(&train_f, cfg.deep_ocsvm_nu, cfg.ocsvm_gamma, cfg.ocsvm_tol)?)
    } else {
        None
    };

    type Rule<'a> = Box<dyn Fn(&DeepFeatures) -> Result<bool> + Sync + 'a>;
    let mut rules: Vec<(&str, Rule)> = vec![("one", Box::new(move |f: &DeepFeatures| Ok(decision::rule_one_metric(f.hamming_sym, th.gamma1).accepted())))];
    if scenario.has_decoder() {
        rules.push(("two", Box::new(move |f: &DeepFeatures| Ok(decision::rule_two_metric(f.hamming_sym, f.recon_l2.unwrap_or(0.0), th).accepted()))));
        let m = svm.as_ref().expect("trained above");
        rules.push(("ocsvm", Box::new(move |f: &DeepFeatures| Ok(decision::rule_ocsvm(m, &deep_vector(f))?.accepted()))));
    }

    let test_codes: Vec<(&ObservedCode, &Template)> =
        sp.test.iter().flat_map(|&i| ds.items[i].probes().map(move |c| (c, &ds.items[i].template))).collect();
    let test_f = deep_features(&model, &test_codes)?;

    let s = scenario.number();
    let mut out = Vec::new();
    for (name, rule) in &rules {
        let setup = format!("scenario-{s}/{name}");
        let val_acc = val_f.iter().map(rule).collect::<Result<Vec<_>>>()?;
        out.push(entry(&setup, CodeLabel::Original.as_str(), Metric::ValPMiss, fraction(val_acc.iter().map(|a| !a))));
        let acc = test_f.iter().map(rule).collect::<Result<Vec<_>>>()?;
        for label in CodeLabel::CLASSES {
            let flags = test_codes.iter().zip(&acc).filter(|((c, _), _)| c.label == label);
            let (metric, value) = if label.is_fake() {
                (Metric::PFa, fraction(flags.map(|(_, &a)| a)))
            } else {
                (Metric::PMiss, fraction(flags.map(|(_, &a)| !a)))
            };
            out.push(entry(&setup, label.as_str(), metric, value));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- spatial OC-SVM

/// Spatial OC-SVM features of a probe: `[pearson.., hamming_sym]`, with one
/// Pearson coefficient per colour plane in colour mode.
pub fn spatial_features(probe: &ObservedCode, t: &Template, physical: Option<&ObservedCode>, kind: ReferenceKind, color: bool) -> Result<Vec<f64>> {
    let reference = match kind {
        ReferenceKind::Digital => Reference::Digital(t),
        ReferenceKind::Physical => Reference::Physical(physical.ok_or_else(|| Error::Data(format!("{} has no physical reference", probe.template_id)))?),
    };
    let fv = metrics::feature_vector(probe, reference)?;
    if !color {
        return Ok(vec![fv.pearson, fv.hamming_sym as f64]);
    }
    let planes = probe.planes.as_ref().ok_or_else(|| Error::Data("colour features need colour planes".into()))?;
    let ideal: Image = t.pixels.to_reflectance();
    let mut out = Vec::with_capacity(4);
    for (k, plane) in planes.iter().enumerate() {
        let r = match kind {
            ReferenceKind::Digital => metrics::pearson(plane, &ideal)?,
            ReferenceKind::Physical => {
                let rp = physical.and_then(|p| p.planes.as_ref()).ok_or_else(|| Error::Data("physical reference lacks colour planes".into()))?;
                metrics::pearson(plane, &rp[k])?
            }
        };
        out.push(r);
    }
    out.push(fv.hamming_sym as f64);
    Ok(out)
}

/// Spatial OC-SVM trained on the originals of `train`, with ν chosen on the
/// originals of `val`: the lowest validation P_miss wins, ties go to the smaller ν.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialOcsvm {
    pub model: OcSvmModel,
    pub reference: ReferenceKind,
    pub color: bool,
    pub nu: f64,
    pub val_p_miss: f64,
}

pub fn fit_spatial_ocsvm(ds: &Dataset, train: &[usize], val: &[usize], kind: ReferenceKind, color: bool, cfg: &ExperimentConfig) -> Result<SpatialOcsvm> {
    let points: Vec<Vec<f64>> = train
        .par_iter()
        .flat_map_iter(|&i| {
            let item = &ds.items[i];
            training_variants(&item.original, &item.template, cfg.augment).into_iter().map(move |(c, t, q)| {
                // the reference is rotated with the probe; gamma only alters the probe
                let r = match kind {
                    ReferenceKind::Physical => item.physical_reference.as_ref().map(|r| rotate_code(r, q)),
                    ReferenceKind::Digital => None,
                };
                spatial_features(&c, &t, r.as_ref(), kind, color)
            })
        })
        .collect::<Result<_>>()?;
    let val_f = originals_features(ds, val, kind, color)?;
    let mut best: Option<SpatialOcsvm> = None;
    let mut sorted = cfg.ocsvm_nu_grid.clone();
    sorted.sort_by(f64::total_cmp);
    for nu in sorted {
        let model = ocsvm::train_ocsvm(&points, nu, cfg.ocsvm_gamma, cfg.ocsvm_tol)?;
        let miss = fraction(val_f.iter().map(|f| model.decision(f).map(|d| d < 0.0).unwrap_or(true)));
        if best.as_ref().map_or(true, |b| miss < b.val_p_miss) {
            best = Some(SpatialOcsvm { model, reference: kind, color, nu, val_p_miss: miss });
        }
    }
    Ok(best.expect("non-empty grid"))
}

fn originals_features(ds: &Dataset, idx: &[usize], kind: ReferenceKind, color: bool) -> Result<Vec<Vec<f64>>> {
    idx.par_iter()
        .map(|&i| {
            let item = &ds.items[i];
            spatial_features(&item.original, &item.template, item.physical_reference.as_ref(), kind, color)
        })
        .collect()
}

fn run_ocsvm_spatial(ds: &Dataset, cfg: &ExperimentConfig, seed_value: u64) -> Result<Vec<RunEntry>> {
    let sp = run_split(ds, seed_value)?;
    let has_color = ds.items.iter().all(|i| i.original.planes.is_some());
    let mut kinds = vec![ReferenceKind::Digital];
    if ds.config.physical_reference {
        kinds.push(ReferenceKind::Physical);
    }
    let mut modes = vec![false];
    if has_color {
        modes.push(true);
    }
    let mut out = Vec::new();
    for &kind in &kinds {
        for &color in &modes {
            let setup = format!("{}/{}", kind.as_str(), if color { "rgb" } else { "gray" });
            let fit = fit_spatial_ocsvm(ds, &sp.train, &sp.val, kind, color, cfg)?;
            log::info!("{setup}: selected nu={} (validation P_miss {})", fit.nu, fit.val_p_miss);
            out.push(entry(&setup, CodeLabel::Original.as_str(), Metric::ValPMiss, fit.val_p_miss));
            let test: Vec<(CodeLabel, Vec<f64>)> = sp
                .test
                .par_iter()
                .flat_map_iter(|&i| {
                    let item = &ds.items[i];
                    item.probes().map(move |c| Ok((c.label, spatial_features(c, &item.template, item.physical_reference.as_ref(), kind, color)?)))
                })
                .collect::<Result<_>>()?;
            for label in CodeLabel::CLASSES {
                let acc = test
                    .iter()
                    .filter(|(l, _)| *l == label)
                    .map(|(_, f)| Ok(decision::rule_ocsvm(&fit.model, f)?.accepted()))
                    .collect::<Result<Vec<_>>>()?;
                let (metric, value) =
                    if label.is_fake() { (Metric::PFa, fraction(acc.into_iter())) } else { (Metric::PMiss, fraction(acc.into_iter().map(|a| !a))) };
                out.push(entry(&setup, label.as_str(), metric, value));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- supervised

/// Class groupings evaluated by the multi-class preset: name, class names, label map.
pub fn groupings() -> Vec<(&'static str, Vec<String>, fn(CodeLabel) -> usize)> {
    fn five(l: CodeLabel) -> usize {
        l.class_index().expect("probe label")
    }
    fn three(l: CodeLabel) -> usize {
        match l {
            CodeLabel::Original => 0,
            CodeLabel::Fake1White | CodeLabel::Fake1Gray => 1,
            _ => 2,
        }
    }
    fn two(l: CodeLabel) -> usize {
        l.is_fake() as usize
    }
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    vec![
        ("5-class", CodeLabel::CLASSES.iter().map(|l| l.as_str().to_string()).collect(), five as fn(CodeLabel) -> usize),
        ("3-class", names(&["original", "fake1", "fake2"]), three),
        ("2-class", names(&["original", "fake"]), two),
    ]
}

fn supervised_training(ds: &Dataset, idx: &[usize], labels: &[CodeLabel], augment_on: bool) -> Vec<ObservedCode> {
    idx.iter()
        .flat_map(|&i| ds.items[i].probes().filter(|c| labels.contains(&c.label)).cloned().collect::<Vec<_>>())
        .flat_map(|c| if augment_on { augment(&c).into_iter().map(|a| a.code).collect() } else { vec![c] })
        .collect()
}

fn run_supervised_multi(ds: &Dataset, cfg: &ExperimentConfig, seed_value: u64) -> Result<Vec<RunEntry>> {
    let sp = run_split(ds, seed_value)?;
    let train = supervised_training(ds, &sp.train, &CodeLabel::CLASSES, cfg.augment);
    let tc = TrainConfig { seed: seed_value, ..cfg.supervised.clone() };
    let mode = if tc.use_color { "rgb" } else { "gray" };
    let test: Vec<&ObservedCode> = sp.test.iter().flat_map(|&i| ds.items[i].probes()).collect();
    let mut out = Vec::new();
    for (name, classes, map) in groupings() {
        let refs: Vec<&ObservedCode> = train.iter().collect();
        let labels: Vec<usize> = train.iter().map(|c| map(c.label)).collect();
        let model = supervised::train_classifier(&refs, &labels, &classes, &tc)?;
        let pred = test.par_iter().map(|c| model.predict(c).map(|p| p.0)).collect::<Result<Vec<_>>>()?;
        let setup = format!("{name}/{mode}");
        for (k, class) in classes.iter().enumerate() {
            let err = fraction(test.iter().zip(&pred).filter(|(c, _)| map(c.label) == k).map(|(_, &p)| p != k));
            out.push(entry(&setup, class, Metric::ClassError, err));
        }
    }
    Ok(out)
}

fn run_supervised_binary(ds: &Dataset, cfg: &ExperimentConfig, seed_value: u64) -> Result<Vec<RunEntry>> {
    let sp = run_split(ds, seed_value)?;
    let has_color = ds.items.iter().all(|i| i.original.planes.is_some());
    let mut out = Vec::new();
    for fake in CodeLabel::FAKES {
        let train = supervised_training(ds, &sp.train, &[CodeLabel::Original, fake], cfg.augment);
        let refs: Vec<&ObservedCode> = train.iter().collect();
        let labels: Vec<usize> = train.iter().map(|c| c.label.is_fake() as usize).collect();
        let probes: Vec<(&ObservedCode, bool)> = sp
            .test
            .iter()
            .flat_map(|&i| ds.items[i].probes().filter(|c| c.label == CodeLabel::Original || c.label == fake))
            .map(|c| (c, c.label == CodeLabel::Original))
            .collect();
        for color in if has_color { vec![false, true] } else { vec![false] } {
            let tc = TrainConfig { seed: seed_value, use_color: color, ..cfg.supervised.clone() };
            let names = vec!["original".to_string(), fake.as_str().to_string()];
            let model = supervised::train_classifier(&refs, &labels, &names, &tc)?;
            let (p_miss, p_fa) = supervised::binary_rates(&model, &probes, 0)?;
            let setup = format!("binary-{}/{}", fake.as_str(), if color { "rgb" } else { "gray" });
            out.push(entry(&setup, CodeLabel::Original.as_str(), Metric::PMiss, p_miss));
            out.push(entry(&setup, fake.as_str(), Metric::PFa, p_fa));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- runs

/// One run of a preset with the given run seed.
pub fn run_once(ds: &Dataset, preset: Preset, cfg: &ExperimentConfig, seed_value: u64) -> Result<Vec<RunEntry>> {
    match preset {
        Preset::Supervised5Class => run_supervised_multi(ds, cfg, seed_value),
        Preset::SupervisedBinaryPerFake => run_supervised_binary(ds, cfg, seed_value),
        Preset::OcsvmSpatial => run_ocsvm_spatial(ds, cfg, seed_value),
        Preset::Deep(s) => run_deep(ds, cfg, s, seed_value),
    }
}

/// Per-run results and their aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub runs: Vec<RunResult>,
    pub report: ErrorReport,
}

/// Runs `cfg.runs` seeded repetitions of a preset (resplitting each time).
pub fn run_experiment(ds: &Dataset, preset: Preset, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let s = run_seed(cfg.seed, r);
            Ok(RunResult { run: r, seed: s, entries: run_once(ds, preset, cfg, s)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ErrorReport::aggregate(&preset.to_string(), cfg.seed, &ds.config.hash()?, &runs)?;
    Ok(ExperimentOutput { runs, report })
}

/// Calibrated thresholds from the validation originals of a split.
pub fn calibrate_on(ds: &Dataset, model: &AeModel, val: &[usize]) -> Result<Thresholds> {
    let codes: Vec<(&ObservedCode, &Template)> = val.iter().map(|&i| (&ds.items[i].original, &ds.items[i].template)).collect();
    let f = deep_features(model, &codes)?;
    let recon: Vec<f64> = f.iter().filter_map(|f| f.recon_l2).collect();
    decision::calibrate(&f.iter().map(|f| f.hamming_sym).collect::<Vec<_>>(), &recon)
}

/// Spatial metrics of every probe against both references, as exported by the `metrics` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub template_id: String,
    pub label: CodeLabel,
    pub reference_kind: ReferenceKind,
    pub pearson: f64,
    pub hamming_sym: usize,
    pub l1: f64,
    pub l2: f64,
}

pub fn spatial_feature_rows(ds: &Dataset) -> Result<Vec<FeatureRow>> {
    let rows: Vec<Vec<FeatureRow>> = ds
        .items
        .par_iter()
        .map(|item| {
            let mut v = Vec::new();
            for c in item.probes() {
                let mut refs = vec![Reference::Digital(&item.template)];
                if let Some(r) = &item.physical_reference {
                    refs.push(Reference::Physical(r));
                }
                for r in refs {
                    let f = metrics::feature_vector(c, r)?;
                    v.push(FeatureRow {
                        template_id: item.id.clone(),
                        label: c.label,
                        reference_kind: f.reference_kind,
                        pearson: f.pearson,
                        hamming_sym: f.hamming_sym,
                        l1: f.l1,
                        l2: f.l2,
                    });
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
