//! Audio ingestion: WAV decoding, resampling and fixed-length segmentation.
//!
//! Everything here is a pure function of its inputs. No loudness
//! normalization is applied at any stage; the absolute level of a clip is
//! part of what the quality model sees.

use std::io::{Read, Seek};
use std::path::Path;

use thiserror::Error;

/// Canonical sample rate of the feature pipeline.
pub const CANONICAL_RATE: u32 = 16_000;

/// Default segment length: 9 s at 16 kHz.
pub const DEFAULT_SEGMENT_LEN: usize = 9 * CANONICAL_RATE as usize;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A mono PCM waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    clip_id: String,
}

impl AudioClip {
    /// Builds a clip, rejecting non-finite or out-of-range samples.
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        clip_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::InvalidArgument(format!(
                "sample {bad} is outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            clip_id: clip_id.into(),
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn with_id(mut self, clip_id: impl Into<String>) -> Self {
        self.clip_id = clip_id.into();
        self
    }
}

/// A fixed-length window cut from a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub source_clip: String,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentPolicy {
    /// Zero-pad the trailing partial window.
    PadLast,
    /// Discard the trailing partial window.
    DropLast,
}

/// Reads a WAV file from disk. The clip id is the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    decode_wav(std::io::BufReader::new(file), id)
}

/// Decodes an in-memory WAV payload.
pub fn decode_wav_bytes(bytes: &[u8], clip_id: impl Into<String>) -> Result<AudioClip, AudioError> {
    decode_wav(std::io::Cursor::new(bytes), clip_id.into())
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => AudioError::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::FormatError(msg) => AudioError::CorruptFile(msg.to_string()),
        hound::Error::IoError(e) => AudioError::CorruptFile(e.to_string()),
        other => AudioError::CorruptFile(other.to_string()),
    }
}

fn decode_wav<R: Read + Seek>(reader: R, clip_id: String) -> Result<AudioClip, AudioError> {
    let mut reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(AudioError::CorruptFile("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples (only 16-bit PCM and 32-bit float are read)"
            )))
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(AudioError::CorruptFile("partial sample frame".into()));
    }
    if interleaved.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    let samples = downmix(&interleaved, channels);
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::CorruptFile("non-finite sample".into()));
    }
    // Float files may legitimately exceed full scale; those samples are clamped.
    let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    AudioClip::new(samples, spec.sample_rate, clip_id)
}

/// Arithmetic-mean downmix of interleaved frames, accumulated in f64.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.iter().map(|&s| s as f32).collect();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
        .collect()
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let file = std::fs::File::create(path)?;
    write_wav_to(clip, std::io::BufWriter::new(file))
}

/// Encodes a clip as mono 32-bit float WAV bytes.
pub fn encode_wav_bytes(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    write_wav_to(clip, &mut cursor)?;
    Ok(cursor.into_inner())
}

fn write_wav_to<W: std::io::Write + Seek>(clip: &AudioClip, writer: W) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(map_hound)?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

/// Linear-interpolation resampler. Lossy: there is no anti-aliasing filter.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate || clip.is_empty() {
        let mut out = clip.clone();
        out.sample_rate = target_rate;
        return Ok(out);
    }
    let src = &clip.samples;
    let ratio = f64::from(clip.sample_rate) / f64::from(target_rate);
    let out_len = (src.len() as f64 / ratio).round() as usize;
    let last = src.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let idx = pos.floor() as usize;
            if idx >= last {
                return src[last];
            }
            let frac = pos - idx as f64;
            let a = f64::from(src[idx]);
            let b = f64::from(src[idx + 1]);
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        clip_id: clip.clip_id.clone(),
    })
}

/// Cuts a clip into consecutive non-overlapping windows of `segment_len`.
///
/// A clip shorter than one window always yields a single zero-padded
/// segment, regardless of policy.
pub fn segment(
    clip: &AudioClip,
    segment_len: usize,
    policy: SegmentPolicy,
) -> Result<Vec<Segment>, AudioError> {
    if segment_len == 0 {
        return Err(AudioError::InvalidArgument("segment length must be positive".into()));
    }
    if clip.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    let mut out = Vec::with_capacity(clip.len().div_ceil(segment_len));
    for (i, chunk) in clip.samples.chunks(segment_len).enumerate() {
        if chunk.len() < segment_len && policy == SegmentPolicy::DropLast && i > 0 {
            break;
        }
        let mut samples = chunk.to_vec();
        samples.resize(segment_len, 0.0);
        out.push(Segment {
            samples,
            source_clip: clip.clip_id.clone(),
            offset: i * segment_len,
        });
    }
    Ok(out)
}

/// Pads or truncates a clip to exactly one segment starting at offset 0.
pub fn fit_single_segment(clip: &AudioClip, segment_len: usize) -> Result<Segment, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    let mut samples: Vec<f32> = clip.samples.iter().copied().take(segment_len).collect();
    samples.resize(segment_len, 0.0);
    Ok(Segment {
        samples,
        source_clip: clip.clip_id.clone(),
        offset: 0,
    })
}
