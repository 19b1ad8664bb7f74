use cdp_authkit::deepfeat::{fit_discriminator, train_ae, AeConfig, AeModel, AeSample, Scenario};
use cdp_authkit::experiment::{ae_samples, generate_dataset, DatasetConfig};
use cdp_authkit::nn::{sigmoid, Mlp};
use cdp_authkit::seed::derived_rng;
use cdp_authkit::Error;
use rand::seq::SliceRandom;
use rand::Rng;

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

#[test]
fn default_training_lowers_loss_and_separates_coarse_fakes() {
    let ds = generate_dataset(&DatasetConfig { templates: 24, ..Default::default() }).unwrap();
    let train: Vec<usize> = (0..16).collect();
    let samples = ae_samples(&ds, &train, false);
    let cfg = AeConfig::default();
    let model = train_ae(&samples, Scenario::S3, &cfg).unwrap();
    assert_eq!(model.loss_trace.len(), cfg.epochs + 1);
    let (first, last) = (model.loss_trace[0].generator, model.loss_trace[cfg.epochs].generator);
    assert!(last < first, "loss {first} -> {last}");

    let held_out = &ds.items[16..];
    let originals: Vec<usize> =
        held_out.iter().map(|it| model.extract_features(&it.original.image, &it.template.symbols).unwrap().hamming_sym).collect();
    let coarse: Vec<usize> = held_out
        .iter()
        .flat_map(|it| it.fakes[2..].iter().map(move |f| (f, it)))
        .map(|(f, it)| model.extract_features(&f.image, &it.template.symbols).unwrap().hamming_sym)
        .collect();
    assert!(median(originals.clone()) < median(coarse.clone()), "{originals:?} vs {coarse:?}");
}

#[test]
fn discriminator_on_identical_distributions_outputs_one_half() {
    let mut rng = derived_rng(6, "disc", 0);
    let real: Vec<Vec<f64>> = (0..64).map(|_| (0..16).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
    let mut fake = real.clone();
    fake.shuffle(&mut rng);
    let mut d = Mlp::new(&[16, 32, 1], &mut rng);
    fit_discriminator(&mut d, &real, &fake, 300, 1e-3);
    let mean = real.iter().map(|x| sigmoid(d.forward(x).output()[0])).sum::<f64>() / real.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean output {mean}");
}

fn tiny_samples() -> Vec<AeSample> {
    (0..6u64)
        .map(|i| {
            let t = cdp_authkit::template::generate_template(i, 6, 3, 0.5).unwrap();
            AeSample { x: t.pixels.map(|&v| if v == 1 { 0.2 } else { 0.9 }), t: t.symbols }
        })
        .collect()
}

#[test]
fn features_match_scenario_layout() {
    let cfg = AeConfig { n_sym: 6, symbol_px: 3, margin_px: 1, channels: 3, disc_hidden: 4, epochs: 2, batch_size: 3, ..Default::default() };
    let samples = tiny_samples();
    for s in Scenario::ALL {
        let m = train_ae(&samples, s, &cfg).unwrap();
        let f = m.extract_features(&samples[0].x, &samples[0].t).unwrap();
        assert_eq!(f.recon_l2.is_some(), s.has_decoder());
        assert_eq!(f.disc_t_score.is_some(), s.has_disc_t());
        assert_eq!(f.disc_x_score.is_some(), s.has_disc_x());
        assert!(f.hamming_sym <= 36);
        for score in [f.disc_t_score, f.disc_x_score].into_iter().flatten() {
            assert!(score > 0.0 && score < 1.0);
        }
        if let Some(r) = m.reconstruct(&samples[0].x).unwrap() {
            assert!(r.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<AeModel>(&json).unwrap(), m);
    }
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let bad = [
        AeConfig { lambda1: 0.0, ..Default::default() },
        AeConfig { beta: -0.1, ..Default::default() },
        AeConfig { epochs: 0, ..Default::default() },
    ];
    for cfg in bad {
        assert!(matches!(AeModel::new(Scenario::S1, cfg), Err(Error::Param(_))));
    }
    let cfg = AeConfig { n_sym: 5, symbol_px: 3, ..Default::default() };
    assert!(train_ae(&tiny_samples(), Scenario::S1, &cfg).is_err());
    assert!(matches!(Scenario::try_from(5), Err(Error::Param(_))));
}
