use std::fs;
use std::path::Path;

use greeneye_core::cyclegan::{
    fine_tune, generator_losses, image_to_tensor, train, ArchConfig, BestMarker, EngineError, Generator,
    ModelBundle, NetworkRole, TrainOutcome, Trainer, TrainingConfig, BEST_MARKER_FILE, LOSS_CSV_FILE,
    TRAIN_LOG_FILE,
};
use greeneye_core::dataset::{write_synthetic_pair, DatasetPair, SyntheticEye};
use greeneye_core::nn::Tensor;
use regex::Regex;

fn tiny(seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        epochs: 1,
        validation_images: 0,
        arch: ArchConfig {
            gen_channels: 2,
            gen_downsamplings: 1,
            res_blocks: 1,
            stem_kernel: 3,
            disc_channels: 2,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn pair(root: &Path, count: usize) -> DatasetPair {
    write_synthetic_pair(&root.join("data"), count, 3, 12.0).unwrap()
}

fn losses_csv(out: &Path) -> String {
    fs::read_to_string(out.join(LOSS_CSV_FILE)).unwrap()
}

fn eye_tensor(cx: f64, cy: f64) -> Tensor {
    image_to_tensor(SyntheticEye::new(cx, cy).render().pixels())
}

#[test]
fn identity_generators_have_zero_reconstruction_losses() {
    let cfg = tiny(0);
    let mut bundle = ModelBundle::new(cfg.clone()).unwrap();
    bundle.g = Generator::identity(NetworkRole::G);
    bundle.f = Generator::identity(NetworkRole::F);
    let (a, b) = (eye_tensor(180.0, 140.0), eye_tensor(220.0, 160.0));
    let (g, f) = generator_losses(&bundle, &a, &b, &cfg).unwrap();
    for l in [g, f] {
        assert_eq!((l.cycle_fwd, l.cycle_bwd, l.identity), (0.0, 0.0, 0.0));
        assert!(l.adv.is_finite() && l.adv > 0.0);
        assert!((l.total - l.adv).abs() < 1e-12);
    }
}

#[test]
fn training_steps_leave_identity_generators_loss_free() {
    let cfg = tiny(1);
    let mut bundle = ModelBundle::new(cfg.clone()).unwrap();
    bundle.g = Generator::identity(NetworkRole::G);
    bundle.f = Generator::identity(NetworkRole::F);
    let mut trainer = Trainer::new(bundle, cfg).unwrap();
    let (a, b) = (eye_tensor(150.0, 120.0), eye_tensor(240.0, 170.0));
    for _ in 0..3 {
        let r = trainer.train_step(&a, &b).unwrap();
        for l in [r.g_a_to_b, r.g_b_to_a] {
            assert_eq!((l.cycle_fwd, l.cycle_bwd, l.identity), (0.0, 0.0, 0.0));
        }
    }
}

#[test]
fn discriminator_targets_follow_the_noise_setting() {
    let quiet = TrainingConfig { label_noise_amplitude: 0.0, ..tiny(0) };
    let mut t = Trainer::new(ModelBundle::new(quiet.clone()).unwrap(), quiet).unwrap();
    assert!(t.discriminator_targets(100, true).iter().all(|&v| v == 0.9));
    assert!(t.discriminator_targets(100, false).iter().all(|&v| v == 0.0));

    let noisy = TrainingConfig { label_noise_amplitude: 0.05, ..tiny(0) };
    let mut t = Trainer::new(ModelBundle::new(noisy.clone()).unwrap(), noisy).unwrap();
    let real = t.discriminator_targets(1000, true);
    let fake = t.discriminator_targets(1000, false);
    assert!(real.iter().all(|&v| (0.85..=0.95).contains(&v)));
    assert!(fake.iter().all(|&v| (0.0..=0.05).contains(&v)));
    assert!(real.iter().any(|&v| v != real[0]));
}

#[test]
fn same_seed_gives_identical_loss_logs() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let run = |seed: u64, name: &str| {
        let out = dir.path().join(name);
        train(&pair, &TrainingConfig { max_steps: Some(3), epochs: 3, ..tiny(seed) }, &out).unwrap();
        losses_csv(&out)
    };
    let first = run(4, "a");
    assert_eq!(first, run(4, "b"));
    assert_ne!(first, run(5, "c"));
}

#[test]
fn log_and_csv_follow_their_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let out = dir.path().join("run");
    let outcome = train(&pair, &TrainingConfig { epochs: 2, ..tiny(1) }, &out).unwrap();
    assert_eq!(outcome.reports.len(), 4);

    let line = Regex::new(r"^>(\d+), dA\[\d+\.\d{3},\d+\.\d{3}\] dB\[\d+\.\d{3},\d+\.\d{3}\] g\[\d+\.\d{3},\d+\.\d{3}\]$").unwrap();
    let log = fs::read_to_string(out.join(TRAIN_LOG_FILE)).unwrap();
    let steps: Vec<u64> = log.lines().map(|l| line.captures(l).unwrap_or_else(|| panic!("bad line {l:?}"))[1].parse().unwrap()).collect();
    assert_eq!(steps, vec![1, 2, 3, 4]);

    let csv = losses_csv(&out);
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("step,dA_real,dA_fake,dB_real,dB_fake,g_AtoB,g_BtoA,adv,cyc_f,cyc_b,id"));
    for (i, row) in rows.enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 11);
        assert_eq!(cols[0], (i + 1).to_string());
        assert!(cols[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn one_checkpoint_per_epoch_and_step_checkpoints_on_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let out = dir.path().join("run");
    let outcome = train(&pair, &TrainingConfig { epochs: 3, checkpoint_every: 4, ..tiny(2) }, &out).unwrap();
    assert_eq!(outcome.epoch_checkpoints.len(), 3);
    for (i, p) in outcome.epoch_checkpoints.iter().enumerate() {
        assert!(p.ends_with(format!("epoch_{:03}", i + 1)));
        let loaded = ModelBundle::load(p).unwrap();
        assert_eq!(loaded.epoch, i as u64 + 1);
        assert_eq!(loaded.step, 2 * (i as u64 + 1));
    }
    assert_eq!(outcome.step_checkpoints.len(), 1);
    assert!(outcome.step_checkpoints[0].ends_with("step_000004"));
}

#[test]
fn validation_writes_a_best_marker() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let out = dir.path().join("run");
    let outcome: TrainOutcome = train(&pair, &TrainingConfig { epochs: 2, validation_images: 2, ..tiny(3) }, &out).unwrap();
    assert_eq!(outcome.validation.len(), 2);
    let marker: BestMarker = serde_json::from_slice(&fs::read(out.join(BEST_MARKER_FILE)).unwrap()).unwrap();
    assert_eq!(Some(&marker), outcome.best.as_ref());
    let best_rate = outcome.validation.iter().map(|v| v.1).fold(f64::MIN, f64::max);
    assert_eq!(marker.success_rate, best_rate);
    assert!(marker.checkpoint.join("manifest.json").exists());
}

#[test]
fn fine_tuning_holds_frozen_layers_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let cfg = TrainingConfig { epochs: 2, ..tiny(6) };
    let base = train(&pair, &cfg, &dir.path().join("base")).unwrap().bundle;
    let tuned = fine_tune(base.clone(), &pair, &["down".to_string()], &cfg, &dir.path().join("tuned")).unwrap().bundle;
    assert_eq!(tuned.step, 4);
    let mut frozen_seen = 0;
    let mut moved = 0;
    for role in [NetworkRole::G, NetworkRole::F] {
        for (before, after) in base.network(role).params().iter().zip(tuned.network(role).params()) {
            if before.name.starts_with("down") {
                frozen_seen += 1;
                assert_eq!(before.value, after.value, "{} {} moved", role.as_str(), before.name);
            } else if before.value != after.value {
                moved += 1;
            }
        }
    }
    assert_eq!(frozen_seen, 4);
    assert!(moved > 0);
}

#[test]
fn empty_freeze_list_matches_plain_training() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 2);
    let cfg = TrainingConfig { max_steps: Some(2), ..tiny(7) };
    let fresh = ModelBundle::new(cfg.clone()).unwrap();
    let tuned = fine_tune(fresh, &pair, &[], &cfg, &dir.path().join("tuned")).unwrap();
    let plain = train(&pair, &cfg, &dir.path().join("plain")).unwrap();
    assert_eq!(losses_csv(&dir.path().join("tuned")), losses_csv(&dir.path().join("plain")));
    for role in NetworkRole::ALL {
        assert_eq!(tuned.bundle.network(role).params(), plain.bundle.network(role).params());
    }
}

#[test]
fn unknown_freeze_entry_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair(dir.path(), 1);
    let cfg = tiny(0);
    let bundle = ModelBundle::new(cfg.clone()).unwrap();
    let err = fine_tune(bundle, &pair, &["encoder9".to_string()], &cfg, &dir.path().join("o")).unwrap_err();
    assert!(matches!(err, EngineError::UnknownLayerName(ref n) if n == "encoder9"), "{err}");
}

#[test]
fn empty_domain_is_reported_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut pair = pair(dir.path(), 1);
    pair.domain_a.clear();
    let out = dir.path().join("o");
    let err = train(&pair, &tiny(0), &out).unwrap_err();
    assert!(matches!(err, EngineError::EmptyDomain(ref d) if d == "A"), "{err}");
    assert!(!out.join(TRAIN_LOG_FILE).exists());
}
