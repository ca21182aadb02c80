use proptest::prelude::*;
use sqa_core::model::{load_weights, save_weights, ChannelScale, Model, ModelConfig, WeightBundle, WeightError};

fn model(seed: u64, variant: &str) -> Model {
    let cfg = ModelConfig {
        input_frames: 16,
        channel_scale: ChannelScale::new(1, 16).unwrap(),
        ..ModelConfig::default()
    }
    .with_variant(variant)
    .unwrap();
    Model::initialized(cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bytes_round_trip(seed in any::<u64>(), variant in prop::sample::select(vec!["three_output", "sig_only"])) {
        let b = model(seed, variant).to_bundle();
        let back = WeightBundle::from_bytes(&b.to_bytes()).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(back.digest(), b.digest());
        let m = Model::from_bundle(&back).unwrap();
        prop_assert_eq!(m.to_bundle(), b);
    }

    #[test]
    fn any_flipped_byte_is_detected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let bytes = model(seed, "three_output").to_bundle().to_bytes();
        let mut bad = bytes.clone();
        let i = pos.index(bad.len());
        bad[i] ^= 1 << bit;
        prop_assert!(WeightBundle::from_bytes(&bad).is_err());
    }

    #[test]
    fn any_truncation_is_detected(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let bytes = model(seed, "sig_only").to_bundle().to_bytes();
        let n = cut.index(bytes.len());
        prop_assert!(WeightBundle::from_bytes(&bytes[..n]).is_err());
    }
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.sqaw");
    let b = model(1, "three_output").to_bundle();
    save_weights(&b, &path).unwrap();
    assert_eq!(load_weights(&path).unwrap(), b);
    std::fs::write(&path, b"nope").unwrap();
    assert!(matches!(load_weights(&path), Err(WeightError::BadMagic)));
    let mut sig = model(1, "sig_only");
    assert!(sig.load_bundle(&b).is_err());
}
