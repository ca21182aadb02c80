//! Synthetic rated corpus with a closed-form quality oracle.
//!
//! Each clip is a harmonic complex with syllable-rate amplitude modulation,
//! hard-clipped with strength `d`, mixed with white or pink noise at a given
//! SNR and scaled to an RMS level. Labels follow directly from `(snr, d)`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DatasetError, Manifest, RatedClip, Split};
use crate::audio::{write_wav, AudioClip, CANONICAL_RATE};

/// Weights `(a, b, c)` of `ovrl = a·sig + b·bak + c`.
pub const OVRL_COEFFS: (f64, f64, f64) = (0.5, 0.4, 0.1);

const BAK_MID_SNR: f64 = 15.0;
const BAK_SNR_SCALE: f64 = 5.0;
/// Clipping threshold at `d = 1`, in dB below the clean peak.
const MAX_CLIP_DB: f64 = 30.0;
const SNR_JITTER_DB: f64 = 4.0;
const DISTORTION_JITTER: f64 = 0.08;
/// RNG stream reserved for per-condition parameters.
const CONDITION_STREAM: u64 = u64::MAX;

pub fn bak_oracle(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 5.0;
    }
    1.0 + 4.0 / (1.0 + (-(snr_db - BAK_MID_SNR) / BAK_SNR_SCALE).exp())
}

pub fn sig_oracle(distortion: f64) -> f64 {
    5.0 - 4.0 * distortion
}

pub fn ovrl_oracle(sig: f64, bak: f64) -> f64 {
    let (a, b, c) = OVRL_COEFFS;
    (a * sig + b * bak + c).clamp(1.0, 5.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_models: usize,
    pub clips_per_model: usize,
    /// Range of per-condition SNR centres, dB.
    pub snr_range: (f64, f64),
    /// Range of per-condition distortion centres, within [0, 1].
    pub distortion_range: (f64, f64),
    /// Output RMS level range, dBFS.
    pub level_range: (f64, f64),
    pub duration_secs: f64,
    pub seed: u64,
    /// Prefix for model and clip ids, so separately generated splits never collide.
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_models: 20,
            clips_per_model: 100,
            snr_range: (0.0, 35.0),
            distortion_range: (0.0, 0.9),
            level_range: (-32.0, -20.0),
            duration_secs: 1.0,
            seed: 0,
            id_prefix: String::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidSpec(m.into()));
        if self.num_models == 0 || self.clips_per_model == 0 {
            return bad("counts must be at least 1");
        }
        for (name, (lo, hi)) in [
            ("snr_range", self.snr_range),
            ("distortion_range", self.distortion_range),
            ("level_range", self.level_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(DatasetError::InvalidSpec(format!("{name} must be a finite interval")));
            }
        }
        let (dlo, dhi) = self.distortion_range;
        if dlo < 0.0 || dhi > 1.0 {
            return bad("distortion_range must lie within [0, 1]");
        }
        if self.level_range.1 > -3.0 {
            return bad("level_range must stay below -3 dBFS");
        }
        if !(self.duration_secs > 0.0 && self.duration_secs <= 60.0) {
            return bad("duration_secs must be in (0, 60]");
        }
        Ok(())
    }

    pub fn model_id(&self, model: usize) -> String {
        format!("{}m{:02}", self.id_prefix, model)
    }

    pub fn clip_id(&self, model: usize, clip: usize) -> String {
        format!("{}m{:02}_c{:03}", self.id_prefix, model, clip)
    }

    /// Condition centres, stratified so every model covers a distinct slice of
    /// both the SNR and the distortion ranges.
    pub fn conditions(&self) -> Vec<ConditionParams> {
        let mut rng = stream_rng(self.seed, CONDITION_STREAM);
        let n = self.num_models;
        let mut snr_strata: Vec<usize> = (0..n).collect();
        let mut dist_strata: Vec<usize> = (0..n).collect();
        snr_strata.shuffle(&mut rng);
        dist_strata.shuffle(&mut rng);
        let lerp = |(lo, hi): (f64, f64), stratum: usize, u: f64| lo + (hi - lo) * (stratum as f64 + u) / n as f64;
        (0..n)
            .map(|m| ConditionParams {
                snr_db: lerp(self.snr_range, snr_strata[m], rng.gen()),
                distortion: lerp(self.distortion_range, dist_strata[m], rng.gen()),
                noise: if m % 2 == 0 { NoiseKind::White } else { NoiseKind::Pink },
            })
            .collect()
    }

    /// Per-clip draw around a condition centre, from the clip's own RNG stream.
    pub fn clip_params(&self, cond: &ConditionParams, index: u64) -> ClipParams {
        let mut rng = stream_rng(self.seed, index);
        let snr_db = cond.snr_db + rng.gen_range(-SNR_JITTER_DB..=SNR_JITTER_DB);
        let distortion = (cond.distortion + rng.gen_range(-DISTORTION_JITTER..=DISTORTION_JITTER)).clamp(0.0, 1.0);
        let (llo, lhi) = self.level_range;
        ClipParams {
            snr_db,
            distortion,
            level_db: if llo == lhi { llo } else { rng.gen_range(llo..=lhi) },
            f0_hz: rng.gen_range(90.0..=250.0),
            mod_hz: rng.gen_range(3.0..=6.0),
            noise: cond.noise,
            seed: rng.gen(),
        }
    }
}

/// Characteristic parameters of one synthetic processing condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionParams {
    pub snr_db: f64,
    pub distortion: f64,
    pub noise: NoiseKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipParams {
    pub snr_db: f64,
    pub distortion: f64,
    pub level_db: f64,
    pub f0_hz: f64,
    pub mod_hz: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

impl ClipParams {
    /// Oracle labels `(sig, bak, ovrl)`.
    pub fn labels(&self) -> (f64, f64, f64) {
        let sig = sig_oracle(self.distortion);
        let bak = bak_oracle(self.snr_db);
        (sig, bak, ovrl_oracle(sig, bak))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Renders one clip at 16 kHz.
pub fn synthesize_clip(p: &ClipParams, num_samples: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let sr = CANONICAL_RATE as f64;
    let two_pi = std::f64::consts::TAU;

    let max_harmonic = ((3500.0 / p.f0_hz).floor() as usize).max(1);
    let phases: Vec<f64> = (0..max_harmonic).map(|_| rng.gen::<f64>() * two_pi).collect();
    let mod_phase = rng.gen::<f64>() * two_pi;
    let vibrato_hz = rng.gen_range(4.0..=7.0);

    let mut speech = Vec::with_capacity(num_samples);
    let mut phase = 0.0f64;
    for n in 0..num_samples {
        let t = n as f64 / sr;
        // Slight vibrato so harmonics are not perfectly stationary.
        let f0 = p.f0_hz * (1.0 + 0.02 * (two_pi * vibrato_hz * t).sin());
        phase += two_pi * f0 / sr;
        let mut x = 0.0;
        for (k, ph) in phases.iter().enumerate() {
            let h = (k + 1) as f64;
            x += (h * phase + ph).sin() / (h * h);
        }
        // Syllable envelope with near-silent gaps.
        let env = (0.5 * (1.0 - (two_pi * p.mod_hz * t + mod_phase).cos())).powi(2);
        speech.push(x * env);
    }

    if p.distortion > 0.0 {
        let peak = speech.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let thr = peak * 10f64.powf(-p.distortion * MAX_CLIP_DB / 20.0);
        for v in &mut speech {
            *v = v.clamp(-thr, thr);
        }
    }

    let speech_rms = rms(&speech).max(1e-12);
    let mut noise: Vec<f64> = (0..num_samples).map(|_| rng.sample(StandardNormal)).collect();
    if p.noise == NoiseKind::Pink {
        pink_filter(&mut noise);
    }
    let noise_gain = if p.snr_db == f64::INFINITY {
        0.0
    } else {
        speech_rms / rms(&noise).max(1e-12) / 10f64.powf(p.snr_db / 20.0)
    };
    let mix: Vec<f64> = speech.iter().zip(&noise).map(|(s, n)| s + noise_gain * n).collect();
    let gain = 10f64.powf(p.level_db / 20.0) / rms(&mix).max(1e-12);
    mix.iter().map(|v| (v * gain).clamp(-1.0, 1.0) as f32).collect()
}

/// Paul Kellet's economy pink filter, applied in place.
fn pink_filter(x: &mut [f64]) {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let w = *v;
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        *v = b0 + b1 + b2 + w * 0.1848;
    }
}

/// Writes `<out_dir>/<model_id>/<clip_id>.wav` for every clip plus
/// `<out_dir>/manifest.csv` holding the oracle labels.
pub fn generate_synthetic_corpus(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let num_samples = (spec.duration_secs * CANONICAL_RATE as f64).round() as usize;
    let mut clips = Vec::with_capacity(spec.num_models * spec.clips_per_model);
    for (m, cond) in spec.conditions().iter().enumerate() {
        let model_id = spec.model_id(m);
        std::fs::create_dir_all(out_dir.join(&model_id))?;
        for c in 0..spec.clips_per_model {
            let index = (m * spec.clips_per_model + c) as u64;
            let params = spec.clip_params(cond, index);
            let clip_id = spec.clip_id(m, c);
            let rel: PathBuf = [model_id.as_str(), &format!("{clip_id}.wav")].iter().collect();
            let audio = AudioClip::new(synthesize_clip(&params, num_samples), CANONICAL_RATE, clip_id.clone())
                .map_err(|e| DatasetError::IoFailure(e.to_string()))?;
            write_wav(&audio, out_dir.join(&rel)).map_err(|e| DatasetError::IoFailure(e.to_string()))?;
            let (sig, bak, ovrl) = params.labels();
            clips.push(RatedClip {
                clip_id,
                clip_path: rel,
                model_id: model_id.clone(),
                mos_sig: sig,
                mos_bak: bak,
                mos_ovrl: ovrl,
                num_ratings: 1,
            });
        }
    }
    let manifest = Manifest::new(Split::Unspecified, out_dir, clips)?;
    super::write_manifest(&manifest, out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_limit_and_endpoints() {
        assert_eq!(sig_oracle(0.0), 5.0);
        assert_eq!(bak_oracle(f64::INFINITY), 5.0);
        assert!((bak_oracle(1e6) - 5.0).abs() < 1e-12);
        assert_eq!(sig_oracle(1.0), 1.0);
        // Perfect SIG and BAK top out at 0.5*5 + 0.4*5 + 0.1.
        assert!((ovrl_oracle(5.0, 5.0) - 4.6).abs() < 1e-12);
        assert!((ovrl_oracle(1.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((bak_oracle(BAK_MID_SNR) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn realised_snr_matches_request() {
        let spec = SynthSpec::default();
        let cond = ConditionParams {
            snr_db: 10.0,
            distortion: 0.0,
            noise: NoiseKind::Pink,
        };
        let mut p = spec.clip_params(&cond, 3);
        p.level_db = -25.0;
        let mix = synthesize_clip(&p, 16000);
        let clean = synthesize_clip(&ClipParams { snr_db: f64::INFINITY, ..p }, 16000);
        let level = rms(&mix.iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert!((20.0 * level.log10() + 25.0).abs() < 1e-3);
        // Rescale the clean render to the speech share of the mix.
        let speech_share = level / (1.0 + 10f64.powf(-p.snr_db / 10.0)).sqrt();
        let clean_level = rms(&clean.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let g = speech_share / clean_level;
        let noise: Vec<f64> = mix.iter().zip(&clean).map(|(&m, &c)| m as f64 - g * c as f64).collect();
        let measured = 20.0 * (speech_share / rms(&noise)).log10();
        // Speech and noise are not exactly orthogonal over one second.
        assert!((measured - p.snr_db).abs() < 0.5, "{measured} vs {}", p.snr_db);
    }

    #[test]
    fn conditions_are_stratified() {
        let spec = SynthSpec::default();
        let conds = spec.conditions();
        let n = conds.len() as f64;
        let mut strata: Vec<usize> = conds
            .iter()
            .map(|c| ((c.snr_db - spec.snr_range.0) / (spec.snr_range.1 - spec.snr_range.0) * n) as usize)
            .collect();
        strata.sort();
        assert_eq!(strata, (0..conds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn fixed_seed_regenerates_identical_bytes() {
        let spec = SynthSpec {
            num_models: 2,
            clips_per_model: 2,
            duration_secs: 0.25,
            seed: 9,
            ..SynthSpec::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_synthetic_corpus(&spec, a.path()).unwrap();
        let mb = generate_synthetic_corpus(&spec, b.path()).unwrap();
        assert_eq!(ma.clips(), mb.clips());
        for c in ma.clips() {
            let x = std::fs::read(a.path().join(&c.clip_path)).unwrap();
            let y = std::fs::read(b.path().join(&c.clip_path)).unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(
            std::fs::read(a.path().join("manifest.csv")).unwrap(),
            std::fs::read(b.path().join("manifest.csv")).unwrap()
        );
        assert!(a.path().join("m01").join("m01_c001.wav").exists());
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            SynthSpec { num_models: 0, ..SynthSpec::default() },
            SynthSpec { snr_range: (10.0, 0.0), ..SynthSpec::default() },
            SynthSpec { distortion_range: (0.0, 1.5), ..SynthSpec::default() },
        ] {
            assert!(matches!(spec.validate(), Err(DatasetError::InvalidSpec(_))));
        }
    }
}
