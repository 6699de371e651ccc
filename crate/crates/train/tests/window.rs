use lact_core::AngularWindow;
use lact_train::{TrainConfig, WindowSampler};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn on_grid(a: f64) -> bool {
    ((a / 0.5) - (a / 0.5).round()).abs() < 1e-9
}

#[test]
fn fixed_range_always_has_that_span() {
    let cfg = TrainConfig { fixed_range: Some(30.0), ..Default::default() };
    let s = WindowSampler::from_config(&cfg, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        assert_eq!(s.sample(&mut rng).span_deg(), 30.0);
    }
}

#[test]
fn descending_weights_favour_narrow_windows() {
    let s = WindowSampler::from_config(&TrainConfig::default(), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 7];
    for _ in 0..10_000 {
        let span = s.sample(&mut rng).span_deg();
        counts[((span - 30.0) / 10.0).round() as usize] += 1;
    }
    assert!(counts[0] > counts[6], "{counts:?}");
    // 7/28 vs 1/28 of the draws.
    assert!((counts[0] as f64 / 1e4 - 0.25).abs() < 0.02, "{counts:?}");
    assert!((counts[6] as f64 / 1e4 - 1.0 / 28.0).abs() < 0.01, "{counts:?}");
}

#[test]
fn windows_never_wrap_and_stay_on_grid() {
    let s = WindowSampler::from_config(&TrainConfig::default(), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_beta = 0.0f64;
    for _ in 0..100_000 {
        let w = s.sample(&mut rng);
        assert!(w.alpha_deg >= 0.0 && w.beta_deg <= 360.0, "{w}");
        assert!(on_grid(w.alpha_deg) && on_grid(w.beta_deg), "{w}");
        AngularWindow::new(w.alpha_deg, w.beta_deg).unwrap();
        max_beta = max_beta.max(w.beta_deg);
    }
    assert_eq!(max_beta, 360.0);
}

#[test]
fn uniform_mode_covers_half_degree_spans() {
    let cfg = TrainConfig { uniform_range_mode: true, ..Default::default() };
    let s = WindowSampler::from_config(&cfg, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..20_000 {
        let span = s.sample_span(&mut rng);
        assert!((30.0..=90.0).contains(&span) && on_grid(span));
        seen.insert((span * 2.0) as u32);
    }
    assert_eq!(seen.len(), 121);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    for bad in [
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { range_weights: vec![1.0; 6], ..ok.clone() },
        TrainConfig { range_weights: vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0], ..ok.clone() },
        TrainConfig { fixed_range: Some(20.0), ..ok.clone() },
        TrainConfig { lr: f64::NAN, ..ok.clone() },
        TrainConfig { holdout_fraction: 1.0, ..ok.clone() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let json = serde_json::to_string(&ok).unwrap();
    let back: TrainConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ok);
    let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "lr": 0.001}"#).unwrap();
    assert_eq!((partial.epochs, partial.lr, partial.batch_size), (3, 0.001, 8));
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
}

proptest! {
    #[test]
    fn any_seed_gives_valid_windows(seed in any::<u64>(), uniform in any::<bool>()) {
        let cfg = TrainConfig { uniform_range_mode: uniform, ..Default::default() };
        let s = WindowSampler::from_config(&cfg, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let w = s.sample(&mut rng);
            prop_assert!(AngularWindow::new(w.alpha_deg, w.beta_deg).is_ok());
            prop_assert!(on_grid(w.alpha_deg) && on_grid(w.beta_deg));
        }
    }
}
