//! The convolutional P.835 predictor: architecture, scoring and training.
//!
//! The layer stack is four 3x3 convolutions (128, 64, 64, 32 channels),
//! three conv + 2x2 max-pool + dropout stages of 32 channels, a 64-channel
//! convolution, global max pooling and dense layers of 128 and 64 units
//! ahead of a linear head. Channel counts are scaled by
//! [`ChannelScale`] for desk-sized runs.

mod train;
mod variant;
mod weights;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{self, AudioClip, AudioError, SegmentPolicy};
use crate::features::{FeatureError, FeatureMatrix, Stft, StftConfig};
use crate::nn::{Conv2d, Dense, Dropout, GlobalMaxPool, MaxPool2d, Network, NnError, Relu, Scalar, Tensor};

pub use train::{train, EpochStats, TrainConfig, TrainError, TrainReport};
pub use variant::{variant, variant_names, variants, OutputVariant, SigOnly, ThreeOutput};
pub use weights::{load_weights, save_weights, NamedTensor, WeightBundle, WeightError, FORMAT_VERSION};

pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Weights(#[from] WeightError),
}

/// Positive rational multiplier applied to channel and hidden-unit counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelScale {
    num: u32,
    den: u32,
}

impl ChannelScale {
    pub const ONE: Self = Self { num: 1, den: 1 };
    pub const QUARTER: Self = Self { num: 1, den: 4 };

    pub fn new(num: u32, den: u32) -> Result<Self, ModelError> {
        if num == 0 || den == 0 {
            return Err(ModelError::ConfigInvalid(format!("channel scale {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    /// `ceil(count * num / den)`.
    pub fn apply(&self, count: usize) -> usize {
        (count * self.num as usize).div_ceil(self.den as usize)
    }
}

impl fmt::Display for ChannelScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for ChannelScale {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::ConfigInvalid(format!("channel scale {s:?}"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            return Self::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        }
        if let Ok(n) = s.parse::<u32>() {
            return Self::new(n, 1);
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        // Decimal forms like 0.25 or 0.5.
        let den = 1000u32;
        let num = (v * f64::from(den)).round();
        if !(num >= 1.0 && (num / f64::from(den) - v).abs() < 1e-9) {
            return Err(bad());
        }
        let g = gcd(num as u32, den);
        Self::new(num as u32 / g, den / g)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Serialize for ChannelScale {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ChannelScale {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u32),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(n) => n.to_string(),
            Raw::Float(v) => v.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Architecture hyper-parameters.
#[derive(Clone)]
pub struct ModelConfig {
    pub variant: &'static dyn OutputVariant,
    pub input_frames: usize,
    pub input_bins: usize,
    pub channel_scale: ChannelScale,
    pub dropout_rate: f64,
}

impl fmt::Debug for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelConfig")
            .field("variant", &self.variant.name())
            .field("input_frames", &self.input_frames)
            .field("input_bins", &self.input_bins)
            .field("channel_scale", &self.channel_scale)
            .field("dropout_rate", &self.dropout_rate)
            .finish()
    }
}

impl PartialEq for ModelConfig {
    fn eq(&self, other: &Self) -> bool {
        self.variant.name() == other.variant.name()
            && self.input_frames == other.input_frames
            && self.input_bins == other.input_bins
            && self.channel_scale == other.channel_scale
            && self.dropout_rate.to_bits() == other.dropout_rate.to_bits()
    }
}

impl Default for ModelConfig {
    /// Full-size three-output model on 9 s inputs (900 x 161).
    fn default() -> Self {
        Self {
            variant: &ThreeOutput,
            input_frames: 900,
            input_bins: 161,
            channel_scale: ChannelScale::ONE,
            dropout_rate: 0.3,
        }
    }
}

/// Conv channel counts of the trunk, before scaling.
const CONV_CHANNELS: [usize; 7] = [128, 64, 64, 32, 32, 32, 64];
const HIDDEN_UNITS: [usize; 2] = [128, 64];

/// Fixed affine map applied to dB features before the first convolution, so
/// activations start near unit scale.
pub const INPUT_CENTER_DB: f32 = -60.0;
pub const INPUT_SPREAD_DB: f32 = 20.0;

impl ModelConfig {
    pub fn with_variant(mut self, name: &str) -> Result<Self, ModelError> {
        self.variant = variant(name).ok_or_else(|| {
            ModelError::ConfigInvalid(format!("unknown variant {name:?}; known: {:?}", variant_names()))
        })?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_frames < 8 || self.input_bins < 8 {
            return Err(ModelError::ConfigInvalid(format!(
                "input {}x{} is too small for three 2x2 pools",
                self.input_frames, self.input_bins
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::ConfigInvalid(format!("dropout rate {}", self.dropout_rate)));
        }
        Ok(())
    }

    /// Segment length in samples that yields `input_frames` feature frames.
    pub fn segment_len(&self, stft: &StftConfig) -> usize {
        self.input_frames * stft.hop_len
    }

    /// Stable 64-bit digest of the architecture-defining fields.
    pub fn hash(&self) -> u64 {
        let canon = format!(
            "sqa-model;variant={};frames={};bins={};scale={};dropout={:?};input=({:?},{:?})",
            self.variant.name(),
            self.input_frames,
            self.input_bins,
            self.channel_scale,
            self.dropout_rate,
            INPUT_CENTER_DB,
            INPUT_SPREAD_DB
        );
        let digest = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Builds the layer stack with zero weights.
pub fn build_network<S: Scalar>(cfg: &ModelConfig) -> Result<Network<S>, ModelError> {
    cfg.validate()?;
    let c = |i: usize| cfg.channel_scale.apply(CONV_CHANNELS[i]);
    let mut net = Network::new();
    let mut cin = 1;
    for i in 0..4 {
        net.push(format!("conv{}", i + 1), Conv2d::new(cin, c(i), 3)?)
            .push(format!("relu{}", i + 1), Relu);
        cin = c(i);
    }
    net.push("pool1", MaxPool2d).push("drop1", Dropout::new(cfg.dropout_rate)?);
    for (stage, i) in [(2, 4), (3, 5)] {
        net.push(format!("conv{}", i + 1), Conv2d::new(cin, c(i), 3)?)
            .push(format!("relu{}", i + 1), Relu)
            .push(format!("pool{stage}"), MaxPool2d)
            .push(format!("drop{stage}"), Dropout::new(cfg.dropout_rate)?);
        cin = c(i);
    }
    net.push("conv7", Conv2d::new(cin, c(6), 3)?)
        .push("relu7", Relu)
        .push("global_maxpool", GlobalMaxPool);
    let mut din = c(6);
    for (i, &units) in HIDDEN_UNITS.iter().enumerate() {
        let units = cfg.channel_scale.apply(units);
        net.push(format!("dense{}", i + 1), Dense::new(din, units)?)
            .push(format!("relu_dense{}", i + 1), Relu);
        din = units;
    }
    net.push("head", Dense::new(din, cfg.variant.output_dim())?);
    Ok(net)
}

/// He-uniform initialization of every conv and dense layer, zero biases.
pub fn init_network<S: Scalar>(net: &mut Network<S>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in net.layers_mut() {
        l.layer.init(&mut rng);
    }
}

/// P.835 scores. `bak` and `ovrl` are absent for the SIG-only variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosScores {
    pub sig: f64,
    pub bak: Option<f64>,
    pub ovrl: Option<f64>,
}

impl MosScores {
    pub fn full(sig: f64, bak: f64, ovrl: f64) -> Self {
        Self {
            sig,
            bak: Some(bak),
            ovrl: Some(ovrl),
        }
    }

    /// Clamps every present score into `[1, 5]`; non-finite values map to 1.
    pub fn clamped(self) -> Self {
        Self {
            sig: clamp_mos(self.sig),
            bak: self.bak.map(clamp_mos),
            ovrl: self.ovrl.map(clamp_mos),
        }
    }

    pub fn heads(&self) -> [Option<f64>; 3] {
        [Some(self.sig), self.bak, self.ovrl]
    }
}

pub fn clamp_mos(v: f64) -> f64 {
    if v.is_nan() {
        MOS_MIN
    } else {
        v.clamp(MOS_MIN, MOS_MAX)
    }
}

/// Result of scoring one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipScore {
    pub clip_id: String,
    pub scores: MosScores,
    pub num_segments: usize,
}

/// A configured network plus its feature extractor.
#[derive(Debug)]
pub struct Model {
    config: ModelConfig,
    net: Network<f32>,
    stft: Stft,
}

impl Model {
    /// Builds a model with zero weights.
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        let net = build_network(&config)?;
        let stft = Stft::new(StftConfig::default())?;
        if stft.config().num_bins() != config.input_bins {
            return Err(ModelError::ConfigInvalid(format!(
                "input_bins {} does not match the {} feature bins",
                config.input_bins,
                stft.config().num_bins()
            )));
        }
        Ok(Self { config, net, stft })
    }

    /// Builds and He-initializes a model.
    pub fn initialized(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut m = Self::build(config)?;
        init_network(&mut m.net, seed);
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stft_config(&self) -> &StftConfig {
        self.stft.config()
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn segment_len(&self) -> usize {
        self.config.segment_len(self.stft.config())
    }

    pub fn features_to_tensor(&self, features: &FeatureMatrix) -> Result<Tensor<f32>, ModelError> {
        let (t, f) = features.shape();
        if (t, f) != (self.config.input_frames, self.config.input_bins) {
            return Err(NnError::ShapeMismatch(format!(
                "features {t}x{f}, model expects {}x{}",
                self.config.input_frames, self.config.input_bins
            ))
            .into());
        }
        let x = features.values().iter().map(|&v| (v - INPUT_CENTER_DB) / INPUT_SPREAD_DB).collect();
        Ok(Tensor::new(vec![t, f, 1], x)?)
    }

    /// Raw (unclamped) outputs for one feature matrix, dropout disabled.
    pub fn predict_segment(&self, features: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        let x = self.features_to_tensor(features)?;
        let y = self.net.predict(&x)?;
        Ok(y.data().iter().map(|&v| f64::from(v)).collect())
    }

    /// Clamped scores for one feature matrix.
    pub fn score_segment(&self, features: &FeatureMatrix) -> Result<MosScores, ModelError> {
        let raw = self.predict_segment(features)?;
        Ok(self.config.variant.scores(&raw).clamped())
    }

    /// Segments a clip (zero-padding the tail), scores each segment and
    /// averages the raw outputs before clamping.
    pub fn score_clip(&self, clip: &AudioClip) -> Result<ClipScore, ModelError> {
        let clip = if clip.sample_rate() == audio::CANONICAL_RATE {
            std::borrow::Cow::Borrowed(clip)
        } else {
            std::borrow::Cow::Owned(audio::resample(clip, audio::CANONICAL_RATE)?)
        };
        let segments = audio::segment(&clip, self.segment_len(), SegmentPolicy::PadLast)?;
        let mut sum = vec![0.0f64; self.config.variant.output_dim()];
        for seg in &segments {
            let features = self.stft.features(&seg.samples)?;
            for (acc, v) in sum.iter_mut().zip(self.predict_segment(&features)?) {
                *acc += v;
            }
        }
        let n = segments.len() as f64;
        let mean: Vec<f64> = sum.into_iter().map(|v| v / n).collect();
        Ok(ClipScore {
            clip_id: clip.clip_id().to_string(),
            scores: self.config.variant.scores(&mean).clamped(),
            num_segments: segments.len(),
        })
    }

    pub fn to_bundle(&self) -> WeightBundle {
        WeightBundle::from_model(self)
    }

    /// Builds a model from a bundle's own config and loads its tensors.
    pub fn from_bundle(bundle: &WeightBundle) -> Result<Self, ModelError> {
        let mut m = Self::build(bundle.config.clone())?;
        m.load_bundle(bundle)?;
        Ok(m)
    }

    /// Replaces this model's weights. Layer shapes are checked before the
    /// config hash, so a bundle of another variant reports a shape mismatch.
    pub fn load_bundle(&mut self, bundle: &WeightBundle) -> Result<(), ModelError> {
        bundle.apply_to(&mut self.net, self.config.hash())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_scale_parsing() {
        assert_eq!("1/4".parse::<ChannelScale>().unwrap(), ChannelScale::QUARTER);
        assert_eq!("0.25".parse::<ChannelScale>().unwrap(), ChannelScale::QUARTER);
        assert_eq!("1".parse::<ChannelScale>().unwrap(), ChannelScale::ONE);
        assert!("0".parse::<ChannelScale>().is_err());
        assert!("x".parse::<ChannelScale>().is_err());
        assert_eq!(ChannelScale::QUARTER.apply(128), 32);
        assert_eq!(ChannelScale::new(1, 3).unwrap().apply(64), 22);
    }

    #[test]
    fn head_sizes() {
        let net = build_network::<f32>(&ModelConfig::default()).unwrap();
        let trace = net.shape_trace(&[900, 161, 1]).unwrap();
        assert_eq!(trace.last().unwrap().1, vec![3]);
        let cfg = ModelConfig::default().with_variant("sig_only").unwrap();
        let net = build_network::<f32>(&cfg).unwrap();
        assert_eq!(net.shape_trace(&[900, 161, 1]).unwrap().last().unwrap().1, vec![1]);
        assert!(ModelConfig::default().with_variant("nope").is_err());
    }

    #[test]
    fn invalid_configs() {
        let cfg = ModelConfig {
            input_frames: 7,
            ..ModelConfig::default()
        };
        assert!(matches!(build_network::<f32>(&cfg), Err(ModelError::ConfigInvalid(_))));
        let cfg = ModelConfig {
            dropout_rate: 1.0,
            ..ModelConfig::default()
        };
        assert!(build_network::<f32>(&cfg).is_err());
    }

    #[test]
    fn quarter_scale_first_conv() {
        let cfg = ModelConfig {
            channel_scale: ChannelScale::QUARTER,
            ..ModelConfig::default()
        };
        let net = build_network::<f32>(&cfg).unwrap();
        assert_eq!(net.layers()[0].layer.params()[0].shape(), &[3, 3, 1, 32]);
    }

    #[test]
    fn zero_weights_give_zero_raw() {
        let cfg = ModelConfig {
            input_frames: 16,
            channel_scale: ChannelScale::new(1, 16).unwrap(),
            ..ModelConfig::default()
        };
        let model = Model::build(cfg).unwrap();
        let f = FeatureMatrix::from_raw(vec![-30.0; 16 * 161], 16, 161).unwrap();
        assert_eq!(model.predict_segment(&f).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(model.score_segment(&f).unwrap(), MosScores::full(1.0, 1.0, 1.0));
    }

    #[test]
    fn clamping() {
        let s = MosScores {
            sig: 7.0,
            bak: Some(-3.0),
            ovrl: Some(f64::NAN),
        }
        .clamped();
        assert_eq!(s, MosScores::full(5.0, 1.0, 1.0));
    }

    #[test]
    fn config_hash_distinguishes() {
        let a = ModelConfig::default();
        let b = ModelConfig::default().with_variant("sig_only").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ModelConfig::default().hash());
    }
}
