//! Log-power spectrogram features.
//!
//! Segments are framed with a symmetric Hamming window, zero-padded to the
//! FFT size and transformed; the power spectrum is converted to dB with a
//! reference power of 1.0 and a fixed floor. Nothing is normalized.

use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::Segment;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment of {len} samples is shorter than one frame ({frame_len})")]
    SegmentTooShort { len: usize, frame_len: usize },
    #[error("invalid STFT config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature dump: {0}")]
    InvalidDump(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop_len: usize,
    pub fft_size: usize,
    pub power_floor_db: f64,
}

impl Default for StftConfig {
    /// 20 ms frames, 10 ms hop, 320-point FFT at 16 kHz.
    fn default() -> Self {
        Self {
            frame_len: 320,
            hop_len: 160,
            fft_size: 320,
            power_floor_db: -100.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.frame_len == 0 || self.hop_len == 0 || self.fft_size == 0 {
            return Err(FeatureError::InvalidConfig("all sizes must be positive".into()));
        }
        if self.fft_size < self.frame_len {
            return Err(FeatureError::InvalidConfig("fft_size < frame_len".into()));
        }
        if self.hop_len > self.frame_len {
            return Err(FeatureError::InvalidConfig("hop_len > frame_len".into()));
        }
        if !self.power_floor_db.is_finite() {
            return Err(FeatureError::InvalidConfig("floor must be finite".into()));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count produced for a segment of `len` samples (after centre padding).
    pub fn num_frames(&self, len: usize) -> usize {
        let padded = len + self.hop_len;
        if padded < self.frame_len {
            0
        } else {
            (padded - self.frame_len) / self.hop_len + 1
        }
    }

    /// Hex digest identifying this configuration.
    pub fn hash_hex(&self) -> String {
        let canon = format!(
            "stft;frame={};hop={};fft={};floor={:?};window=hamming-symmetric;power-db",
            self.frame_len, self.hop_len, self.fft_size, self.power_floor_db
        );
        hex::encode(&Sha256::digest(canon.as_bytes())[..8])
    }
}

/// Row-major `frames x bins` matrix of dB values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f32>,
    frames: usize,
    bins: usize,
}

impl FeatureMatrix {
    pub fn from_raw(values: Vec<f32>, frames: usize, bins: usize) -> Result<Self, FeatureError> {
        if values.len() != frames * bins {
            return Err(FeatureError::InvalidDump(format!(
                "{} values for {frames}x{bins}",
                values.len()
            )));
        }
        Ok(Self { values, frames, bins })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.bins + bin]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Linear power spectrogram in f64, row-major `frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi k / (n - 1))`.
pub fn hamming_window(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let denom = (n - 1) as f64;
            let mut w: Vec<f64> = (0..n.div_ceil(2))
                .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
                .collect();
            // Mirror so that w[k] == w[n-1-k] exactly.
            let tail: Vec<f64> = w[..n / 2].iter().rev().copied().collect();
            w.extend(tail);
            w
        }
    }
}

/// Reusable STFT plan: window and FFT are computed once per config.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let window = hamming_window(cfg.frame_len);
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self { cfg, window, fft })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Full complex spectrum of one windowed frame starting at `start` of `padded`.
    pub fn frame_spectrum(&self, padded: &[f64], start: usize) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        for (k, (b, &w)) in buf.iter_mut().zip(&self.window).enumerate() {
            b.re = padded[start + k] * w;
        }
        self.fft.process(&mut buf);
        buf
    }

    /// Centre-pads `samples` with `hop/2` zeros at the front and the rest of a hop at the back.
    pub fn pad(&self, samples: &[f32]) -> Vec<f64> {
        let left = self.cfg.hop_len / 2;
        let right = self.cfg.hop_len - left;
        let mut padded = Vec::with_capacity(samples.len() + self.cfg.hop_len);
        padded.resize(left, 0.0);
        padded.extend(samples.iter().map(|&s| f64::from(s)));
        padded.resize(padded.len() + right, 0.0);
        padded
    }

    pub fn power(&self, samples: &[f32]) -> Result<PowerSpectrogram, FeatureError> {
        if samples.len() < self.cfg.frame_len {
            return Err(FeatureError::SegmentTooShort {
                len: samples.len(),
                frame_len: self.cfg.frame_len,
            });
        }
        let padded = self.pad(samples);
        let frames = self.cfg.num_frames(samples.len());
        let bins = self.cfg.num_bins();
        let mut values = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            let spec = self.frame_spectrum(&padded, t * self.cfg.hop_len);
            values.extend(spec[..bins].iter().map(|c| c.norm_sqr()));
        }
        Ok(PowerSpectrogram { values, frames, bins })
    }

    pub fn features(&self, samples: &[f32]) -> Result<FeatureMatrix, FeatureError> {
        let power = self.power(samples)?;
        Ok(power_to_db(&power, self.cfg.power_floor_db))
    }
}

/// Frames, windows and transforms a segment into linear power.
pub fn stft_power(segment: &Segment, cfg: &StftConfig) -> Result<PowerSpectrogram, FeatureError> {
    Stft::new(cfg.clone())?.power(&segment.samples)
}

/// `max(10 log10(p), floor_db)`; zero power clamps to the floor.
pub fn power_to_db(power: &PowerSpectrogram, floor_db: f64) -> FeatureMatrix {
    let values = power
        .values
        .iter()
        .map(|&p| db(p, floor_db) as f32)
        .collect();
    FeatureMatrix {
        values,
        frames: power.frames,
        bins: power.bins,
    }
}

fn db(power: f64, floor_db: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(floor_db)
    } else {
        floor_db
    }
}

pub fn extract_features(segment: &Segment, cfg: &StftConfig) -> Result<FeatureMatrix, FeatureError> {
    Stft::new(cfg.clone())?.features(&segment.samples)
}

const DUMP_MAGIC: &[u8; 4] = b"SQAF";
const DUMP_VERSION: u32 = 1;

/// Writes `magic, version, T, F` (little-endian u32) followed by row-major f32 values.
pub fn write_feature_dump<W: Write>(features: &FeatureMatrix, mut w: W) -> Result<(), FeatureError> {
    w.write_all(DUMP_MAGIC)?;
    for v in [DUMP_VERSION, features.frames as u32, features.bins as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &features.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_dump<R: Read>(mut r: R) -> Result<FeatureMatrix, FeatureError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| FeatureError::InvalidDump("short header".into()))?;
    if &header[..4] != DUMP_MAGIC {
        return Err(FeatureError::InvalidDump("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != DUMP_VERSION {
        return Err(FeatureError::InvalidDump(format!("unsupported version {}", word(4))));
    }
    let (frames, bins) = (word(8) as usize, word(12) as usize);
    let mut payload = vec![0u8; frames * bins * 4];
    r.read_exact(&mut payload)
        .map_err(|_| FeatureError::InvalidDump("truncated payload".into()))?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::from_raw(values, frames, bins)
}
