//! Mini-batch Adam training on MSE against mean MOS labels.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use super::{ChannelScale, Model, ModelConfig, ModelError, WeightBundle};
use crate::audio::{self, CANONICAL_RATE};
use crate::dataset::{Manifest, Split};
use crate::nn::{mse_loss, AdamConfig, AdamState, Mode, NnError, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("clip {clip_id:?} could not be loaded: {reason}")]
    DataUnavailable { clip_id: String, reason: String },
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("nothing to train on: {0}")]
    EmptyDataset(String),
    #[error("invalid training config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Training hyper-parameters, readable from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub channel_scale: ChannelScale,
    pub variant: String,
    /// Share of the training manifest held out when no validation manifest is given.
    pub val_fraction: f64,
    /// Feature frames per training segment (100 frames = 1 s).
    pub input_frames: usize,
    pub dropout_rate: f64,
    /// Start the head at zero weights and mean-target biases, so the first
    /// predictions are the label means.
    pub init_head_from_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr: 1e-4,
            batch_size: 32,
            epochs: 50,
            patience: 5,
            channel_scale: ChannelScale::ONE,
            variant: "three_output".into(),
            val_fraction: 0.1,
            input_frames: 900,
            dropout_rate: 0.3,
            init_head_from_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::ConfigInvalid(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {}", self.val_fraction));
        }
        self.model_config()?;
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig, TrainError> {
        let cfg = ModelConfig {
            input_frames: self.input_frames,
            channel_scale: self.channel_scale,
            dropout_rate: self.dropout_rate,
            ..ModelConfig::default()
        }
        .with_variant(&self.variant)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A freshly initialized model for this config.
    pub fn initial_model(&self) -> Result<Model, TrainError> {
        Ok(Model::initialized(self.model_config()?, self.seed)?)
    }
}

/// One row of the loss curve. Epoch 0 is measured before any update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training MSE: inference-mode at epoch 0, running batch mean after.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    /// The model restored to its best-validation checkpoint.
    pub model: Model,
    pub bundle: WeightBundle,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub steps: u64,
}

impl TrainReport {
    pub fn best_val_mse(&self) -> f64 {
        self.curve[self.best_epoch].val_mse
    }

    pub fn write_loss_curve(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        std::fs::write(path, loss_curve_csv(&self.curve))?;
        Ok(())
    }
}

pub fn loss_curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for s in curve {
        out.push_str(&format!("{},{:.9},{:.9}\n", s.epoch, s.train_mse, s.val_mse));
    }
    out
}

/// Input tensors and targets held in memory for the whole run.
struct Examples {
    inputs: Vec<Tensor<f32>>,
    targets: Vec<Tensor<f32>>,
}

impl Examples {
    fn load(model: &Model, manifest: &Manifest) -> Result<Self, TrainError> {
        let variant = model.config().variant;
        let seg_len = model.segment_len();
        let stft = model.stft();
        let mut inputs = Vec::with_capacity(manifest.len());
        let mut targets = Vec::with_capacity(manifest.len());
        for clip in manifest.clips() {
            let unavailable = |reason: String| TrainError::DataUnavailable {
                clip_id: clip.clip_id.clone(),
                reason,
            };
            let audio = audio::load_wav(manifest.resolve(clip)).map_err(|e| unavailable(e.to_string()))?;
            let audio = if audio.sample_rate() == CANONICAL_RATE {
                audio
            } else {
                audio::resample(&audio, CANONICAL_RATE).map_err(|e| unavailable(e.to_string()))?
            };
            let seg = audio::fit_single_segment(&audio, seg_len).map_err(|e| unavailable(e.to_string()))?;
            let feats = stft.features(&seg.samples).map_err(|e| unavailable(e.to_string()))?;
            inputs.push(model.features_to_tensor(&feats)?);
            let t: Vec<f32> = variant.targets(clip).iter().map(|&v| v as f32).collect();
            targets.push(Tensor::new(vec![t.len()], t)?);
        }
        Ok(Self { inputs, targets })
    }

    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    fn eval_mse(&self, model: &Model) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let pred = model.network().predict(x)?;
            total += mse_loss(&pred, y)?.0;
        }
        Ok(total / self.len() as f64)
    }
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a);
    rng.set_word_pos(u128::from(b) * 16);
    rand::RngCore::next_u64(&mut rng)
}

/// Trains `model` on `manifest`, validating on `val` or on a seeded hold-out
/// of `manifest` when `val` is `None`.
///
/// Runs single-threaded with per-sample dropout streams derived from
/// `(seed, epoch, sample)`, so identical inputs give identical weights.
pub fn train(
    mut model: Model,
    manifest: &Manifest,
    val: Option<&Manifest>,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(TrainError::EmptyDataset("training manifest has no clips".into()));
    }
    let all = Examples::load(&model, manifest)?;
    let (train_set, val_set) = match val {
        Some(v) => {
            crate::dataset::check_disjoint(&[manifest, v]).map_err(|e| TrainError::ConfigInvalid(e.to_string()))?;
            (all, Examples::load(&model, v)?)
        }
        None => {
            let mut idx: Vec<usize> = (0..all.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0)));
            let n_val = ((all.len() as f64) * cfg.val_fraction).round() as usize;
            let n_val = n_val.min(all.len() - 1);
            let (v, t) = idx.split_at(n_val);
            (all.subset(t), all.subset(v))
        }
    };
    log::info!(
        "training on {} clips, validating on {} ({:?} split)",
        train_set.len(),
        val_set.len(),
        val.map_or(Split::Unspecified, |v| v.split)
    );
    // Without validation data the training loss drives checkpointing.
    let monitor = |m: &Model| -> Result<f64, TrainError> {
        if val_set.len() > 0 {
            val_set.eval_mse(m)
        } else {
            train_set.eval_mse(m)
        }
    };

    if cfg.init_head_from_targets {
        let dim = model.config().variant.output_dim();
        let mut mean = vec![0.0f64; dim];
        for t in &train_set.targets {
            for (m, &v) in mean.iter_mut().zip(t.data()) {
                *m += f64::from(v) / train_set.len() as f64;
            }
        }
        let head = model.network_mut().layers_mut().last_mut().expect("non-empty network");
        let params = head.layer.params_mut();
        params[0].fill(0.0);
        for (b, m) in params[1].data_mut().iter_mut().zip(mean) {
            *b = m as f32;
        }
    }

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.network().params(),
    );

    let mut curve = vec![EpochStats {
        epoch: 0,
        train_mse: train_set.eval_mse(&model)?,
        val_mse: monitor(&model)?,
    }];
    if !curve[0].val_mse.is_finite() {
        return Err(TrainError::DivergedLoss { epoch: 0 });
    }
    let mut best = (0usize, curve[0].val_mse, model.network().params().cloned().collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, epoch as u64)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.network().zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3 + epoch as u64, i as u64));
                let mut mode = Mode::Training(&mut rng);
                let (pred, trace) = model.network().forward(&train_set.inputs[i], &mut mode)?;
                let (loss, mut g) = mse_loss(&pred, &train_set.targets[i])?;
                if !loss.is_finite() {
                    return Err(TrainError::DivergedLoss { epoch });
                }
                loss_sum += loss;
                g.scale(scale);
                model.network().backward(&trace, g, &mut grads, false)?;
            }
            adam.step(model.network_mut().params_mut(), &grads)?;
        }
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / train_set.len() as f64,
            val_mse: monitor(&model)?,
        };
        if !stats.val_mse.is_finite() {
            return Err(TrainError::DivergedLoss { epoch });
        }
        log::info!(
            "epoch {epoch}: train_mse {:.4} val_mse {:.4}",
            stats.train_mse,
            stats.val_mse
        );
        curve.push(stats);
        if stats.val_mse < best.1 {
            best = (epoch, stats.val_mse, model.network().params().cloned().collect());
        } else if cfg.patience > 0 && epoch - best.0 >= cfg.patience {
            log::info!("no improvement for {} epochs, stopping", cfg.patience);
            break;
        }
    }

    for (p, b) in model.network_mut().params_mut().zip(best.2) {
        *p = b;
    }
    let bundle = model.to_bundle();
    Ok(TrainReport {
        model,
        bundle,
        curve,
        best_epoch: best.0,
        steps: adam.step_count(),
    })
}
