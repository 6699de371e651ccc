use lact_core::phantom::DatasetManifest;
use lact_core::projector::{extract_window, forward_project};
use lact_core::{AngularWindow, FanBeamGeometry, Image};
use lact_nn::rotate::rotate_plane;
use lact_nn::{Checkpoint, ModelConfig};
use lact_train::eval::{mean_mcc, read_csv, write_csv};
use lact_train::input::{prepare_windowed, valid_rows};
use lact_train::recon::reconstruct_batch;
use lact_train::*;

fn small_model() -> ModelConfig {
    ModelConfig {
        input_cols: 36,
        stage_channels: vec![4, 8, 16],
        blocks_per_stage: vec![1, 1, 1],
        bottleneck_spatial: [4, 4],
        decoder_stages: vec![16, 8, 4],
        output_size: 32,
        ..ModelConfig::desk64()
    }
}

fn small_data(count: usize, seed: u64) -> Dataset {
    let geom = FanBeamGeometry::desk_scaled(32, 36);
    Dataset::generate(&DatasetManifest::new(count, 32, seed).with_geometry(geom)).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig { model: small_model(), batch_size: 4, lr: 1e-3, eval_every: 0, seed: 5, ..Default::default() }
}

#[test]
fn full_window_fills_every_row() {
    let data = small_data(1, 1);
    let cfg = small_model();
    let x = prepare_input(&data.samples[0].sino, &AngularWindow::new(90.0, 180.0).unwrap(), &cfg).unwrap();
    assert_eq!(x.shape(), &[1, 2, 181, 36]);
    let plane = 181 * 36;
    assert!(x.data()[plane..].iter().all(|&m| m == 1.0));
}

#[test]
fn narrow_window_is_zero_padded_and_masked() {
    let data = small_data(1, 1);
    let cfg = small_model();
    let w = AngularWindow::new(40.0, 70.0).unwrap();
    let x = prepare_input(&data.samples[0].sino, &w, &cfg).unwrap();
    let plane = 181 * 36;
    assert!(x.data()[61 * 36..plane].iter().all(|&v| v == 0.0));
    let mask_sum: f32 = x.data()[plane..].iter().sum();
    assert_eq!(mask_sum, (61 * 36) as f32);
    // Cropping the valid rows gives back exactly the extracted window.
    let win = extract_window(&data.samples[0].sino, &w).unwrap();
    assert_eq!(valid_rows(&x, 61).unwrap(), win.values());

    let no_mask = ModelConfig { use_mask_channel: false, ..cfg };
    assert_eq!(prepare_windowed(&win, &no_mask).unwrap().shape(), &[1, 1, 181, 36]);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let data = small_data(1, 1);
    let wrong = ModelConfig { input_cols: 40, ..small_model() };
    let w = AngularWindow::new(0.0, 30.0).unwrap();
    let err = prepare_input(&data.samples[0].sino, &w, &wrong).unwrap_err();
    assert!(err.is_data_error(), "{err}");
    let short = ModelConfig { input_rows: 50, ..small_model() };
    assert!(prepare_input(&data.samples[0].sino, &w, &short).is_err());
}

#[test]
fn rotating_the_phantom_shifts_the_sinogram_window() {
    // The window [a, a + s] of x equals the window [0, s] of x rotated by -a,
    // which is why predictions in the canonical frame are rotated by a.
    let data = small_data(1, 2);
    let geom = data.geometry();
    let x = &data.samples[0].image;
    for alpha in [90.0, 180.0, 270.0] {
        let mut canon = vec![0.0f32; 32 * 32];
        rotate_plane(x.values(), 32, -alpha, &mut canon);
        let canon = Image::from_vec(32, canon).unwrap();
        let a = extract_window(&forward_project(&canon, &geom).unwrap(), &AngularWindow::new(0.0, 60.0).unwrap()).unwrap();
        let b = extract_window(&data.samples[0].sino, &AngularWindow::new(alpha, alpha + 60.0).unwrap()).unwrap();
        let scale = b.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let worst = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 1e-4 * scale, "alpha {alpha}: {worst} vs scale {scale}");
    }
}

#[test]
fn perfect_reconstruction_scores_one_per_sample() {
    let data = small_data(3, 3);
    let levels: Vec<usize> = (1..=7).collect();
    let (scores, rows) =
        evaluate_levels(&mut PerfectReconstructor, &data.samples, &levels, EvalStart::Fixed(0.0), 0.5).unwrap();
    assert_eq!(rows.len(), 21);
    for (s, range) in scores.iter().zip([90.0, 80.0, 70.0, 60.0, 50.0, 40.0, 30.0]) {
        assert_eq!(s.range_deg, range);
        assert!((s.mcc_sum - 3.0).abs() < 1e-12, "{s:?}");
        assert!((s.ssim_mean - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fbp_degrades_with_narrower_windows() {
    let geom = FanBeamGeometry::desk_scaled(64, 70);
    let data = Dataset::generate(&DatasetManifest::new(12, 64, 4).with_geometry(geom)).unwrap();
    let levels: Vec<usize> = (1..=7).collect();
    let (scores, _) =
        evaluate_levels(&mut FbpReconstructor::default(), &data.samples, &levels, EvalStart::Seeded(1), 0.5).unwrap();
    for s in &scores {
        println!("level {} ({}°): mcc_sum {:.3}", s.level, s.range_deg, s.mcc_sum);
    }
    assert!(scores[0].mcc_sum > scores[3].mcc_sum && scores[3].mcc_sum > scores[6].mcc_sum);
}

#[test]
fn zero_start_reconstruction_is_the_raw_network_output() {
    let data = small_data(1, 6);
    let mut t = Trainer::new(small_config(), 0.5).unwrap();
    let w = AngularWindow::new(0.0, 50.0).unwrap();
    let x = prepare_input(&data.samples[0].sino, &w, &small_model()).unwrap();
    let raw = t.model_mut().predict(x).unwrap();
    let img = ModelReconstructor::new(t.model_mut()).reconstruct(&data.samples[0], &w).unwrap();
    assert_eq!(img.values(), raw.data());
}

#[test]
fn batched_reconstruction_matches_single_calls() {
    let data = small_data(10, 7);
    let mut t = Trainer::new(small_config(), 0.5).unwrap();
    let items: Vec<_> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (&s.sino, AngularWindow::new(7.5 * i as f64, 7.5 * i as f64 + 30.0 + 5.0 * i as f64).unwrap()))
        .collect();
    let batched = reconstruct_batch(t.model_mut(), &items).unwrap();
    for (item, b) in items.iter().zip(&batched) {
        let single = reconstruct_batch(t.model_mut(), std::slice::from_ref(item)).unwrap();
        let worst = single[0].values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 1e-5, "{worst}");
    }
}

#[test]
fn frozen_parameters_keep_the_loss() {
    let data = small_data(4, 8);
    let cfg = TrainConfig { lr: 0.0, ..small_config() };
    let mut t = Trainer::new(cfg, 0.5).unwrap();
    let batch: Vec<&Sample> = data.samples.iter().collect();
    let before = t.model().params().tensors().to_vec();
    let first = t.train_step(&batch).unwrap();
    assert_eq!(t.model().params().tensors(), &before[..]);
    assert!(first.is_finite() && first >= 0.0);
    // A fresh trainer at step 0 draws the same windows.
    let mut fresh = Trainer::new(TrainConfig { lr: 0.0, ..small_config() }, 0.5).unwrap();
    assert_eq!(fresh.train_step(&batch).unwrap(), first);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let data = small_data(8, 9);
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, epochs: usize| {
        let cfg = TrainConfig { epochs, eval_every: 1, ..small_config() };
        let mut t = Trainer::new(cfg, 0.5).unwrap();
        let out = Outputs {
            checkpoint: Some(dir.path().join(format!("{name}.lack"))),
            log_csv: Some(dir.path().join(format!("{name}_log.csv"))),
            eval_csv: Some(dir.path().join(format!("{name}_eval.csv"))),
        };
        let (train, hold) = data.split(0.25);
        let h = t.fit(train, hold, &out).unwrap();
        (h, out)
    };
    let (h1, o1) = run("a", 3);
    let (h2, o2) = run("b", 3);
    let losses = |h: &History| h.log.iter().map(|r| (r.epoch, r.step, r.loss)).collect::<Vec<_>>();
    assert_eq!(losses(&h1), losses(&h2));
    assert_eq!(h1.eval, h2.eval);
    let read = |p: &Option<std::path::PathBuf>| std::fs::read(p.as_ref().unwrap()).unwrap();
    assert_eq!(read(&o1.checkpoint), read(&o2.checkpoint));
    assert_eq!(read(&o1.eval_csv), read(&o2.eval_csv));
    assert_eq!(h1.eval.len(), 21);

    // Two epochs, then one more from the checkpoint, equals three at once.
    let (_, o3) = run("c", 2);
    let ckpt = Checkpoint::load(o3.checkpoint.as_ref().unwrap()).unwrap();
    let mut t = Trainer::resume(TrainConfig { epochs: 3, ..small_config() }, 0.5, &ckpt).unwrap();
    let (train, hold) = data.split(0.25);
    t.fit(train, hold, &Outputs::default()).unwrap();
    assert_eq!(t.checkpoint().encode().unwrap(), read(&o1.checkpoint));
}

#[test]
fn max_steps_counts_updates_across_epochs() {
    let data = small_data(6, 10);
    let cfg = TrainConfig { max_steps: Some(5), epochs: 1, ..small_config() };
    let mut t = Trainer::new(cfg, 0.5).unwrap();
    let h = t.fit(&data.samples, &[], &Outputs::default()).unwrap();
    assert_eq!(t.step(), 5);
    // Two updates per epoch with 6 samples in batches of 4.
    assert_eq!(h.log.iter().map(|r| r.step).collect::<Vec<_>>(), vec![2, 4, 5]);
}

#[test]
fn overfits_four_samples() {
    let data = small_data(4, 11);
    let cfg = TrainConfig { fixed_range: Some(90.0), ..small_config() };
    let mut t = Trainer::new(cfg, 0.5).unwrap();
    let batch: Vec<&Sample> = data.samples.iter().collect();
    let first = t.train_step(&batch).unwrap();
    let mut last = first;
    for _ in 1..500 {
        last = t.train_step(&batch).unwrap();
    }
    println!("overfit: initial MSE {first:.4e}, after 500 steps {last:.4e}");
    assert!(last < 0.1 * first, "{last} vs {first}");
}

#[test]
fn bad_images_are_reported() {
    let data = small_data(2, 12);
    let mut t = Trainer::new(TrainConfig { model: ModelConfig::desk64(), ..small_config() }, 0.5).unwrap();
    let batch: Vec<&Sample> = data.samples.iter().collect();
    let err = t.train_step(&batch).unwrap_err();
    assert!(err.is_data_error(), "{err}");
}

#[test]
fn split_keeps_the_tail() {
    let data = small_data(10, 13);
    let (a, b) = data.split(0.01);
    assert_eq!((a.len(), b.len()), (9, 1));
    assert_eq!(b[0].id, "sample_000009");
    let (a, b) = data.split(0.0);
    assert_eq!((a.len(), b.len()), (10, 0));
}

#[test]
fn generated_and_loaded_datasets_agree() {
    let geom = FanBeamGeometry::desk_scaled(32, 36);
    let manifest = DatasetManifest::new(3, 32, 14).with_geometry(geom);
    let dir = tempfile::tempdir().unwrap();
    lact_core::phantom::generate_dataset(&manifest, dir.path()).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    let made = Dataset::generate(&manifest).unwrap();
    assert_eq!(loaded.samples, made.samples);
}

#[test]
fn metrics_csv_round_trips() {
    let data = small_data(3, 15);
    let (_, rows) =
        evaluate_levels(&mut FbpReconstructor::default(), &data.samples, &[1, 7], EvalStart::Fixed(0.0), 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_csv(&p, &rows).unwrap();
    let back: Vec<lact_core::metrics::MetricsRow> = read_csv(&p).unwrap();
    assert_eq!(back, rows);
    let header = std::fs::read_to_string(&p).unwrap();
    assert!(header.starts_with("sample_id,level,range_deg,mcc,psnr_db,ssim\n"));
    assert!(mean_mcc(&[]) == 0.0);
}
