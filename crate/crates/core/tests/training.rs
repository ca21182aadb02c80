use sqa_core::audio::{write_wav, AudioClip};
use sqa_core::dataset::{Manifest, RatedClip, Split, SynthSpec};
use sqa_core::model::{train, ChannelScale, TrainConfig, TrainError};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        seed: 7,
        lr: 3e-3,
        batch_size: 5,
        epochs: 3,
        patience: 0,
        channel_scale: ChannelScale::new(1, 16).unwrap(),
        input_frames: 16,
        dropout_rate: 0.0,
        val_fraction: 0.0,
        ..TrainConfig::default()
    }
}

fn corpus(dir: &std::path::Path, models: usize, clips: usize) -> Manifest {
    let spec = SynthSpec {
        num_models: models,
        clips_per_model: clips,
        duration_secs: 0.1,
        seed: 3,
        ..SynthSpec::default()
    };
    sqa_core::dataset::generate_synthetic_corpus(&spec, dir).unwrap()
}

#[test]
fn memorizes_ten_clips() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 5, 2);
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 10,
        lr: 3e-3,
        channel_scale: ChannelScale::new(1, 8).unwrap(),
        ..tiny_config()
    };
    let report = train(cfg.initial_model().unwrap(), &m, None, &cfg).unwrap();
    let final_mse = report.curve.iter().map(|s| s.val_mse).fold(f64::INFINITY, f64::min);
    assert!(final_mse < 0.05, "best train mse {final_mse}");
}

#[test]
fn identical_seeds_give_identical_weights() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2, 5);
    let cfg = TrainConfig {
        dropout_rate: 0.3,
        val_fraction: 0.2,
        ..tiny_config()
    };
    let a = train(cfg.initial_model().unwrap(), &m, None, &cfg).unwrap();
    let b = train(cfg.initial_model().unwrap(), &m, None, &cfg).unwrap();
    assert_eq!(a.bundle.to_bytes(), b.bundle.to_bytes());
    assert_eq!(a.curve, b.curve);
    let c = train(
        cfg.initial_model().unwrap(),
        &m,
        None,
        &TrainConfig { seed: 8, ..cfg.clone() },
    )
    .unwrap();
    assert_ne!(a.bundle.digest(), c.bundle.digest());
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2, 5);
    let cfg = TrainConfig {
        lr: 0.0,
        init_head_from_targets: false,
        ..tiny_config()
    };
    let start = cfg.initial_model().unwrap().to_bundle();
    let report = train(cfg.initial_model().unwrap(), &m, None, &cfg).unwrap();
    assert_eq!(report.steps, 6);
    assert_eq!(report.model.to_bundle(), start);
}

#[test]
fn missing_clip_reports_its_id() {
    let dir = tempfile::tempdir().unwrap();
    let ok = AudioClip::new(vec![0.1; 3000], 16000, "ok").unwrap();
    write_wav(&ok, dir.path().join("ok.wav")).unwrap();
    let clip = |id: &str| RatedClip {
        clip_id: id.into(),
        clip_path: format!("{id}.wav").into(),
        model_id: "m".into(),
        mos_sig: 3.0,
        mos_bak: 3.0,
        mos_ovrl: 3.0,
        num_ratings: 1,
    };
    let m = Manifest::new(Split::Train, dir.path(), vec![clip("ok"), clip("gone")]).unwrap();
    let cfg = tiny_config();
    match train(cfg.initial_model().unwrap(), &m, None, &cfg) {
        Err(TrainError::DataUnavailable { clip_id, .. }) => assert_eq!(clip_id, "gone"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_file_and_loss_curve() {
    let cfg = TrainConfig::from_toml_str(
        "seed = 4\nlr = 0.001\nbatch_size = 8\nepochs = 2\npatience = 1\nchannel_scale = \"1/4\"\nvariant = \"sig_only\"\n",
    )
    .unwrap();
    assert_eq!(cfg.channel_scale, ChannelScale::QUARTER);
    assert_eq!(cfg.variant, "sig_only");
    let float = TrainConfig::from_toml_str("channel_scale = 0.25").unwrap();
    assert_eq!(float.channel_scale, ChannelScale::QUARTER);
    assert!(TrainConfig::from_toml_str("learning_rate = 1").is_err());
    assert!(TrainConfig::from_toml_str("variant = \"five_output\"").is_err());

    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2, 4);
    let cfg = tiny_config();
    let report = train(cfg.initial_model().unwrap(), &m, None, &cfg).unwrap();
    let path = dir.path().join("loss_curve.csv");
    report.write_loss_curve(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,train_mse,val_mse"));
    assert_eq!(lines.count(), cfg.epochs + 1);
}
