//! Compact oracle-equivalence checks behind the `selftest` command.

use rand::Rng;

use crate::deepfeat::{self, AeConfig, AeModel, AeSample, Scenario};
use crate::grid::Grid;
use crate::metrics;
use crate::ocsvm;
use crate::oracles;
use crate::seed;
use crate::supervised;
use crate::template::{generate_template, Template};

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> SelftestCheck {
    SelftestCheck { name, passed, detail }
}

fn random_image(rng: &mut seed::Rng, side: usize) -> Grid<f64> {
    Grid::from_fn(side, side, |_, _| rng.gen_range(0..256u32) as f64 / 255.0)
}

fn otsu(rng: &mut seed::Rng) -> SelftestCheck {
    let mut mismatches = 0;
    for _ in 0..200 {
        let side = rng.gen_range(2..20);
        let img = random_image(rng, side);
        if metrics::otsu_threshold(&img).ok() != oracles::otsu_exhaustive(&img).ok() {
            mismatches += 1;
        }
    }
    check("otsu matches exhaustive search", mismatches == 0, format!("{mismatches}/200 mismatches"))
}

fn metric_oracles(rng: &mut seed::Rng) -> SelftestCheck {
    let mut worst: f64 = 0.0;
    let mut ham_bad = 0;
    for i in 0..200u64 {
        let px = rng.gen_range(1..4);
        let t = generate_template(i, rng.gen_range(2..8), px, 0.5).expect("valid template");
        let side = t.cdp_px();
        let a = random_image(rng, side);
        let b = random_image(rng, side);
        if let (Ok(p), (l1, l2)) = (metrics::pearson(&a, &b), metrics::lp_distances(&a, &b).expect("same shape")) {
            let (nl1, nl2) = oracles::lp_naive(a.as_slice(), b.as_slice());
            worst = worst.max((p - oracles::pearson_naive(a.as_slice(), b.as_slice())).abs()).max((l1 - nl1).abs()).max((l2 - nl2).abs());
        }
        let bin = a.map(|&v| (v < 0.5) as u8);
        if metrics::hamming_symbols(&bin, &t).ok() != Some(oracles::hamming_naive(&bin, &t.symbols, px)) {
            ham_bad += 1;
        }
    }
    check("metrics match naive definitions", worst < 1e-12 && ham_bad == 0, format!("max abs diff {worst:.2e}, hamming mismatches {ham_bad}"))
}

fn svm(rng: &mut seed::Rng) -> SelftestCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>() * 4.0, rng.gen::<f64>() * 4.0]).collect();
        let nu = rng.gen_range(0.1..1.0);
        let fit = match ocsvm::fit_ocsvm(&pts, nu, 0.5, 1e-10) {
            Ok(f) => f,
            Err(e) => return check("ocsvm dual matches projected gradient", false, e.to_string()),
        };
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| fit.model.feature_scaler.apply(p)).collect();
        let k: Vec<Vec<f64>> =
            scaled.iter().map(|a| scaled.iter().map(|b| (-0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()).collect()).collect();
        let (_, obj) = oracles::ocsvm_dual_projected_gradient(&k, 1.0 / (nu * n as f64), 20_000);
        worst = worst.max((fit.objective - obj).abs());
    }
    check("ocsvm dual matches projected gradient", worst < 1e-6, format!("max objective gap {worst:.2e}"))
}

fn tiny_ae_samples() -> Vec<AeSample> {
    (0..3u64)
        .map(|i| {
            let t: Template = generate_template(50 + i, 4, 3, 0.5).expect("valid template");
            AeSample { x: t.pixels.map(|&v| if v == 1 { 0.15 } else { 0.85 }), t: t.symbols }
        })
        .collect()
}

fn tiny_ae_config() -> AeConfig {
    AeConfig { n_sym: 4, symbol_px: 3, margin_px: 1, channels: 3, disc_hidden: 4, beta: 0.5, epochs: 1, batch_size: 3, seed: 9, ..AeConfig::default() }
}

fn gradients() -> SelftestCheck {
    let samples = tiny_ae_samples();
    let mut worst: f64 = 0.0;
    for s in Scenario::ALL {
        match AeModel::new(s, tiny_ae_config()) {
            Ok(m) => worst = worst.max(deepfeat::gradient_check(&m, &samples, 10, 1)),
            Err(e) => return check("autoencoder gradients match finite differences", false, e.to_string()),
        }
    }
    check("autoencoder gradients match finite differences", worst < 1e-4, format!("max relative error {worst:.2e}"))
}

fn beta_collapse() -> SelftestCheck {
    let samples = tiny_ae_samples();
    let cfg = AeConfig { beta: 0.0, epochs: 10, batch_size: 1, ..tiny_ae_config() };
    let mut ok = true;
    for (a, b) in [(Scenario::S1, Scenario::S3), (Scenario::S2, Scenario::S4)] {
        let run = |s| {
            let mut m = AeModel::new(s, cfg.clone())?;
            deepfeat::train_steps(&mut m, &samples, Some(20))
        };
        ok &= matches!((run(a), run(b)), (Ok(x), Ok(y)) if x == y);
    }
    check("beta = 0 collapses scenarios 3/4 onto 1/2", ok, "20 steps".into())
}

fn mi_sanity() -> SelftestCheck {
    let ln2 = 2f64.ln();
    let perfect = supervised::estimate_mi_lower_bound(&[0, 1], &[vec![0.0, f64::NEG_INFINITY], vec![f64::NEG_INFINITY, 0.0]]);
    let uniform = supervised::estimate_mi_lower_bound(&[0, 1, 0, 1], &vec![vec![-ln2, -ln2]; 4]);
    let ok = matches!((&perfect, &uniform), (Ok(p), Ok(u)) if (p.lower_bound - ln2).abs() < 1e-9 && u.lower_bound.abs() < 1e-9);
    check("mutual-information bound sanity", ok, "perfect = ln 2, uniform = 0".into())
}

/// Runs every check; none of them panics on failure.
pub fn run_selftest(seed_value: u64) -> Vec<SelftestCheck> {
    let mut rng = seed::derived_rng(seed_value, "selftest", 0);
    vec![otsu(&mut rng), metric_oracles(&mut rng), svm(&mut rng), gradients(), beta_collapse(), mi_sanity()]
}
