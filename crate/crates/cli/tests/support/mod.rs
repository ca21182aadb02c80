#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sqa_core::audio::{write_wav, AudioClip};
use sqa_core::model::{save_weights, ChannelScale, Model, ModelConfig};

/// A randomly initialised 1/16-width model on 16-frame inputs.
pub fn tiny_weights(dir: &Path, variant: &str, seed: u64) -> PathBuf {
    let cfg = ModelConfig {
        input_frames: 16,
        channel_scale: ChannelScale::new(1, 16).unwrap(),
        ..ModelConfig::default()
    }
    .with_variant(variant)
    .unwrap();
    let model = Model::initialized(cfg, seed).unwrap();
    let path = dir.join(format!("{variant}_{seed}.sqaw"));
    save_weights(&model.to_bundle(), &path).unwrap();
    path
}

/// A 16-bit mono tone with a little deterministic hiss.
pub fn tone_clip(secs: f64, rate: u32, id: &str) -> AudioClip {
    let n = (secs * f64::from(rate)) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            let hiss = ((i as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0 - 0.5;
            (0.25 * (std::f64::consts::TAU * 330.0 * t).sin() + 0.02 * hiss) as f32
        })
        .collect();
    AudioClip::new(samples, rate, id).unwrap()
}

pub fn write_tone(path: &Path, secs: f64) -> PathBuf {
    write_wav(&tone_clip(secs, 16_000, "tone"), path).unwrap();
    path.to_path_buf()
}

/// Runs the CLI in-process, returning (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sqa"];
    argv.extend_from_slice(args);
    let code = sqa_cli::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
