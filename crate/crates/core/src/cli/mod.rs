//! Command-line entry point.
//!
//! Every command reads an optional JSON [`RunConfig`]; flags override it and
//! `CDP_AUTHKIT_SEED` overrides the config seed. Exit codes: 0 success,
//! 1 validation error (bad flags or config), 2 runtime failure.

mod selftest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CodeLabel};
use crate::deepfeat::{self, AeConfig, AeModel, Scenario};
use crate::error::{Error, Result};
use crate::experiment::{self, AttackConfig, Dataset, DatasetConfig, ErrorReport, ExperimentConfig, Preset, Split};
use crate::metrics::ReferenceKind;
use crate::ocsvm::Scaler;
use crate::supervised::{self, TrainConfig};
use crate::template::{add_markers, generate_template};
use crate::{io, seed};

pub use selftest::{run_selftest, SelftestCheck};

pub const SEED_ENV: &str = "CDP_AUTHKIT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    /// Templates written by `gen`.
    pub count: usize,
    pub n_sym: usize,
    pub symbol_px: usize,
    pub black_fraction: f64,
    pub marker_width_px: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        TemplateConfig { count: 10, n_sym: d.n_sym, symbol_px: d.symbol_px, black_fraction: d.black_fraction, marker_width_px: d.marker_width_px }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcsvmConfig {
    pub nu_grid: Vec<f64>,
    pub rbf_gamma: f64,
    pub deep_nu: f64,
    pub tol: f64,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        OcsvmConfig { nu_grid: e.ocsvm_nu_grid, rbf_gamma: e.ocsvm_gamma, deep_nu: e.deep_ocsvm_nu, tol: e.ocsvm_tol }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub ocsvm: OcsvmConfig,
    pub supervised: TrainConfig,
    pub ae: AeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Templates synthesised by `dataset` (and by `eval` without `--dataset`).
    pub templates: usize,
    pub physical_reference: bool,
    pub runs: usize,
    pub augment: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let e = ExperimentConfig::default();
        ExperimentSettings { templates: d.templates, physical_reference: d.physical_reference, runs: e.runs, augment: e.augment }
    }
}

/// Complete configuration of a CLI invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log_level: String,
    pub template: TemplateConfig,
    pub channel: ChannelParams,
    pub attack: AttackConfig,
    pub model: ModelConfig,
    pub experiment: ExperimentSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            log_level: "warn".into(),
            template: TemplateConfig::default(),
            channel: d.channel,
            attack: d.attack,
            model: ModelConfig::default(),
            experiment: ExperimentSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            templates: self.experiment.templates,
            n_sym: self.template.n_sym,
            symbol_px: self.template.symbol_px,
            black_fraction: self.template.black_fraction,
            marker_width_px: self.template.marker_width_px,
            channel: self.channel.clone(),
            attack: self.attack.clone(),
            physical_reference: self.experiment.physical_reference,
            seed: self.seed,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let o = &self.model.ocsvm;
        ExperimentConfig {
            runs: self.experiment.runs,
            seed: self.seed,
            augment: self.experiment.augment,
            supervised: self.model.supervised.clone(),
            ae: self.model.ae.clone(),
            ocsvm_nu_grid: o.nu_grid.clone(),
            ocsvm_gamma: o.rbf_gamma,
            deep_ocsvm_nu: o.deep_nu,
            ocsvm_tol: o.tol,
        }
    }

    fn level(&self) -> Result<log::LevelFilter> {
        self.log_level.parse().map_err(|_| Error::Param(format!("unknown log_level {:?}", self.log_level)))
    }
}

#[derive(Parser, Debug)]
#[command(name = "cdp-authkit", version, about = "Copy detection pattern authentication toolkit")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write digital templates (with marker frame) as PGM + JSON.
    Gen {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Synthesise originals, fakes and physical references with a manifest.
    Dataset {
        #[arg(long)]
        templates: Option<usize>,
    },
    /// Export spatial metrics of every code against both references (CSV).
    Metrics(DatasetArg),
    /// Train a model on the manifest's training split.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Calibrate decision thresholds of an autoencoder on the validation split.
    Calibrate {
        #[command(flatten)]
        data: DatasetArg,
        /// Autoencoder model JSON from `train ae`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a preset repeatedly and write its error report.
    Eval {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        runs: Option<usize>,
        /// Dataset directory; synthesised in memory from the config when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Re-render a report JSON as Markdown, checking it against a per-run CSV.
    Report {
        report: PathBuf,
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// PCA embedding of standardised spatial features (CSV).
    Embed {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, value_enum, default_value_t = RefArg::Digital)]
        reference: RefArg,
        #[arg(long, default_value_t = 2)]
        dims: usize,
    },
    /// Time the main operations (printed, not written).
    Bench,
    /// Run the oracle-equivalence checks.
    Selftest,
}

#[derive(Args, Debug)]
pub struct DatasetArg {
    /// Dataset directory written by `dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Spatial-feature one-class SVM (ν chosen on the validation split).
    Ocsvm {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, value_enum, default_value_t = RefArg::Digital)]
        reference: RefArg,
        #[arg(long)]
        color: bool,
    },
    /// Five-class supervised classifier; also reports the MI lower bound on the test split.
    Supervised {
        #[command(flatten)]
        data: DatasetArg,
    },
    /// Template-estimating autoencoder.
    Ae {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        scenario: u8,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefArg {
    Digital,
    Physical,
}

impl From<RefArg> for ReferenceKind {
    fn from(r: RefArg) -> Self {
        match r {
            RefArg::Digital => ReferenceKind::Digital,
            RefArg::Physical => ReferenceKind::Physical,
        }
    }
}

/// Resolves the effective configuration: file, then environment seed, then flags.
pub fn resolve_config(cli: &Cli, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => {
            let bytes = io::read_bytes(p)?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Param(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = env_seed {
        cfg.seed = s.trim().parse().map_err(|_| Error::Param(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.verbose > 0 {
        cfg.log_level = ["warn", "info", "debug", "trace"][(cli.verbose as usize).min(3)].into();
    }
    match &cli.command {
        Command::Gen { count: Some(c) } => cfg.template.count = *c,
        Command::Dataset { templates: Some(t) } => cfg.experiment.templates = *t,
        Command::Eval { runs: Some(r), .. } => cfg.experiment.runs = *r,
        Command::Train(TrainCommand::Ae { epochs: Some(e), .. }) => cfg.model.ae.epochs = *e,
        _ => {}
    }
    cfg.level()?;
    Ok(cfg)
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = match resolve_config(&cli, env_seed.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let _ = env_logger::Builder::new().filter_level(cfg.level().unwrap_or(log::LevelFilter::Warn)).try_init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return 1;
        }
        pool = pool.num_threads(j);
    }
    let result = match pool.build() {
        Ok(p) => p.install(|| run(&cli.command, &cfg)),
        Err(e) => Err(Error::Training(format!("cannot start worker pool: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn written(path: &Path) {
    println!("wrote {}", path.display());
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir)
}

fn manifest_split(ds: &Dataset) -> Vec<Split> {
    experiment::split_indices(ds.items.len(), ds.config.seed)
}

fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Gen { .. } => cmd_gen(cfg),
        Command::Dataset { .. } => {
            let dc = cfg.dataset_config();
            let manifest = experiment::synthesize_dataset(&dc, &cfg.out_dir)?;
            written(&cfg.out_dir.join("manifest.json"));
            println!("{} templates, {} codes, config hash {}", manifest.template_ids.len(), manifest.entries.len(), manifest.config_hash);
            Ok(())
        }
        Command::Metrics(d) => {
            let ds = load_dataset(&d.dataset)?;
            let rows = experiment::spatial_feature_rows(&ds)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            let path = out_path(cfg, "metrics.csv");
            io::write_bytes(&path, &w.into_inner().map_err(|e| Error::Data(e.to_string()))?)?;
            written(&path);
            Ok(())
        }
        Command::Train(t) => cmd_train(t, cfg),
        Command::Calibrate { data, model } => {
            let ds = load_dataset(&data.dataset)?;
            let m: AeModel = io::read_json(model)?;
            let val = ds.indices(&manifest_split(&ds), Split::Val);
            let th = experiment::calibrate_on(&ds, &m, &val)?;
            let path = out_path(cfg, "thresholds.json");
            io::write_json(&path, &th)?;
            written(&path);
            Ok(())
        }
        Command::Eval { preset, dataset, .. } => {
            let preset: Preset = preset.parse()?;
            let ds = match dataset {
                Some(d) => load_dataset(d)?,
                None => experiment::generate_dataset(&cfg.dataset_config())?,
            };
            let out = experiment::run_experiment(&ds, preset, &cfg.experiment_config())?;
            let stem = preset.to_string();
            let json = out_path(cfg, &format!("{stem}_report.json"));
            io::write_json(&json, &out.report)?;
            let md = out_path(cfg, &format!("{stem}_report.md"));
            io::write_bytes(&md, out.report.to_markdown().as_bytes())?;
            let runs = out_path(cfg, &format!("{stem}_runs.csv"));
            io::write_bytes(&runs, experiment::runs_to_csv(&out.runs)?.as_bytes())?;
            for p in [&json, &md, &runs] {
                written(p);
            }
            print!("{}", out.report.to_markdown());
            Ok(())
        }
        Command::Report { report, runs } => {
            let r: ErrorReport = io::read_json(report)?;
            if let Some(csv_path) = runs {
                let text = String::from_utf8(io::read_bytes(csv_path)?).map_err(|e| Error::Data(e.to_string()))?;
                let again = ErrorReport::aggregate(&r.preset, r.seed, &r.dataset_hash, &experiment::runs_from_csv(&text)?)?;
                if again != r {
                    return Err(Error::Data(format!("{} does not aggregate to {}", csv_path.display(), report.display())));
                }
            }
            let md = out_path(cfg, &format!("{}_report.md", r.preset));
            io::write_bytes(&md, r.to_markdown().as_bytes())?;
            written(&md);
            Ok(())
        }
        Command::Embed { data, reference, dims } => {
            let ds = load_dataset(&data.dataset)?;
            let kind: ReferenceKind = (*reference).into();
            let rows: Vec<_> = experiment::spatial_feature_rows(&ds)?.into_iter().filter(|r| r.reference_kind == kind).collect();
            let raw: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.pearson, r.hamming_sym as f64, r.l1, r.l2]).collect();
            let scaler = Scaler::fit(&raw);
            let feats: Vec<Vec<f64>> = raw.iter().map(|f| scaler.apply(f)).collect();
            let emb = experiment::pca_embed(&feats, *dims)?;
            let labels: Vec<String> = rows.iter().map(|r| r.label.as_str().to_string()).collect();
            let path = out_path(cfg, &format!("embedding_{}.csv", kind.as_str()));
            io::write_bytes(&path, emb.to_csv(&labels).as_bytes())?;
            written(&path);
            println!("explained variance ratio {:?}", emb.explained_variance_ratio());
            Ok(())
        }
        Command::Bench => cmd_bench(cfg),
        Command::Selftest => {
            let checks = run_selftest(cfg.seed);
            let mut failed = 0;
            for c in &checks {
                println!("{} {} ({})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                failed += !c.passed as usize;
            }
            if failed > 0 {
                return Err(Error::Training(format!("{failed} selftest check(s) failed")));
            }
            println!("all {} checks passed", checks.len());
            Ok(())
        }
    }
}

fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let t = &cfg.template;
    for i in 0..t.count {
        let id = experiment::template_id(i);
        let tpl = generate_template(seed::derive_seed(cfg.seed, "template", i as u64), t.n_sym, t.symbol_px, t.black_fraction)?;
        let framed = add_markers(&tpl, t.marker_width_px)?;
        let path = out_path(cfg, &format!("templates/{id}.pgm"));
        io::write_pgm(&path, &framed.pixels.map(|&v| 1.0 - v as f64))?;
        io::write_json(&path.with_extension("json"), &framed.meta())?;
    }
    println!("wrote {} templates to {}", t.count, out_path(cfg, "templates").display());
    Ok(())
}

#[derive(Serialize)]
struct SupervisedSummary {
    class_names: Vec<String>,
    test_accuracy: f64,
    mi: supervised::MiEstimate,
}

fn cmd_train(t: &TrainCommand, cfg: &RunConfig) -> Result<()> {
    let ecfg = cfg.experiment_config();
    match t {
        TrainCommand::Ocsvm { data, reference, color } => {
            let ds = load_dataset(&data.dataset)?;
            let s = manifest_split(&ds);
            let fit = experiment::fit_spatial_ocsvm(&ds, &ds.indices(&s, Split::Train), &ds.indices(&s, Split::Val), (*reference).into(), *color, &ecfg)?;
            let path = out_path(cfg, "ocsvm_model.json");
            io::write_json(&path, &fit)?;
            written(&path);
            println!("nu {} validation P_miss {}", fit.nu, fit.val_p_miss);
        }
        TrainCommand::Supervised { data } => {
            let ds = load_dataset(&data.dataset)?;
            let s = manifest_split(&ds);
            let train_idx = ds.indices(&s, Split::Train);
            let codes: Vec<_> = train_idx
                .iter()
                .flat_map(|&i| ds.items[i].probes().cloned().collect::<Vec<_>>())
                .flat_map(|c| if ecfg.augment { experiment::augment(&c).into_iter().map(|a| a.code).collect() } else { vec![c] })
                .collect();
            let refs: Vec<_> = codes.iter().collect();
            let labels: Vec<usize> = codes.iter().map(|c| c.label.class_index().expect("probe")).collect();
            let names: Vec<String> = CodeLabel::CLASSES.iter().map(|l| l.as_str().to_string()).collect();
            let tc = TrainConfig { seed: cfg.seed, ..cfg.model.supervised.clone() };
            let model = supervised::train_classifier(&refs, &labels, &names, &tc)?;
            let test: Vec<_> = ds.indices(&s, Split::Test).into_iter().flat_map(|i| ds.items[i].probes().collect::<Vec<_>>()).collect();
            let mut log_probs = Vec::new();
            let mut correct = 0usize;
            let mut truth = Vec::new();
            for c in &test {
                let (k, lp) = model.predict(c)?;
                let y = c.label.class_index().expect("probe");
                correct += (k == y) as usize;
                truth.push(y);
                log_probs.push(lp);
            }
            let mi = supervised::estimate_mi_lower_bound(&truth, &log_probs)?;
            let path = out_path(cfg, "supervised_model.json");
            io::write_json(&path, &model)?;
            let summary = out_path(cfg, "supervised_summary.json");
            io::write_json(&summary, &SupervisedSummary { class_names: names, test_accuracy: correct as f64 / test.len().max(1) as f64, mi })?;
            written(&path);
            written(&summary);
        }
        TrainCommand::Ae { data, scenario, .. } => {
            let scenario = Scenario::try_from(*scenario)?;
            let ds = load_dataset(&data.dataset)?;
            let s = manifest_split(&ds);
            let samples = experiment::ae_samples(&ds, &ds.indices(&s, Split::Train), ecfg.augment);
            let model = deepfeat::train_ae(&samples, scenario, &experiment::ae_config_for(&ds, &cfg.model.ae, cfg.seed))?;
            let n = scenario.number();
            let path = out_path(cfg, &format!("ae_scenario{n}_model.json"));
            io::write_json(&path, &model)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["epoch", "generator", "template_rms", "recon_rms", "disc_t", "disc_x"])?;
            for (e, l) in model.loss_trace.iter().enumerate() {
                w.write_record([e.to_string(), format!("{:?}", l.generator), format!("{:?}", l.template_rms), format!("{:?}", l.recon_rms), format!("{:?}", l.disc_t), format!("{:?}", l.disc_x)])?;
            }
            let trace = out_path(cfg, &format!("ae_scenario{n}_loss.csv"));
            io::write_bytes(&trace, &w.into_inner().map_err(|e| Error::Data(e.to_string()))?)?;
            written(&path);
            written(&trace);
        }
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let dc = DatasetConfig { templates: 4, ..cfg.dataset_config() };
    let time = |name: &str, reps: usize, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        println!("{name:<28} {:>10.3} ms/op", start.elapsed().as_secs_f64() * 1e3 / reps as f64);
        Ok(())
    };
    time("generate 4-template dataset", 3, &mut || experiment::generate_dataset(&dc).map(|_| ()))?;
    let ds = experiment::generate_dataset(&dc)?;
    let item = &ds.items[0];
    time("otsu_threshold", 200, &mut || crate::metrics::otsu_threshold(&item.original.image).map(|_| ()))?;
    time("feature_vector (digital)", 200, &mut || {
        crate::metrics::feature_vector(&item.original, crate::metrics::Reference::Digital(&item.template)).map(|_| ())
    })?;
    let mut rng = seed::derived_rng(cfg.seed, "bench", 0);
    let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rand::Rng::gen::<f64>(&mut rng), rand::Rng::gen::<f64>(&mut rng)]).collect();
    time("train_ocsvm n=200", 3, &mut || crate::ocsvm::train_ocsvm(&pts, 0.1, 0.5, 1e-6).map(|_| ()))?;
    let samples = experiment::ae_samples(&ds, &[0, 1, 2, 3], false);
    for s in Scenario::ALL {
        let c = AeConfig { epochs: 1, batch_size: 4, ..experiment::ae_config_for(&ds, &cfg.model.ae, cfg.seed) };
        time(&format!("ae epoch (4 samples, s{})", s.number()), 1, &mut || deepfeat::train_ae(&samples, s, &c).map(|_| ()))?;
    }
    Ok(())
}
