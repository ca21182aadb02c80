//! The single scoring path shared by the command line and the HTTP service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqa_core::audio::AudioClip;
use sqa_core::model::{Model, ModelError, WeightBundle};

/// A loaded model plus the hashes reported alongside its scores.
#[derive(Debug)]
pub struct Scorer {
    pub model: Model,
    /// Digest of the weight bundle.
    pub weights_hash: String,
    pub feature_config_hash: String,
}

impl Scorer {
    pub fn from_bundle(bundle: &WeightBundle) -> Result<Self, ModelError> {
        let model = Model::from_bundle(bundle)?;
        let feature_config_hash = model.stft_config().hash_hex();
        Ok(Self {
            model,
            weights_hash: bundle.digest(),
            feature_config_hash,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let bundle = sqa_core::model::load_weights(path)
            .map_err(|e| anyhow::anyhow!("cannot load weights {}: {e}", path.display()))?;
        Ok(Self::from_bundle(&bundle)?)
    }

    pub fn variant(&self) -> &'static str {
        self.model.config().variant.name()
    }

    pub fn score(&self, clip: &AudioClip) -> Result<ScoreRecord, ModelError> {
        let s = self.model.score_clip(clip)?;
        Ok(ScoreRecord {
            clip_id: s.clip_id,
            sig: s.scores.sig,
            bak: s.scores.bak,
            ovrl: s.scores.ovrl,
            num_segments: s.num_segments,
            model: self.weights_hash.clone(),
            feature_config: self.feature_config_hash.clone(),
        })
    }
}

/// Scores for one clip, as printed by `sqa score` and returned by `POST /score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub clip_id: String,
    pub sig: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bak: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ovrl: Option<f64>,
    pub num_segments: usize,
    pub model: String,
    pub feature_config: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn format_records(records: &[ScoreRecord], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r).expect("record serializes"));
                out.push('\n');
            }
            out
        }
        OutputFormat::Csv => {
            let mut out = String::from("clip_id,sig,bak,ovrl,num_segments\n");
            for r in records {
                out.push_str(&format!(
                    "{},{:.6},{},{},{}\n",
                    r.clip_id,
                    r.sig,
                    r.bak.map(|v| format!("{v:.6}")).unwrap_or_default(),
                    r.ovrl.map(|v| format!("{v:.6}")).unwrap_or_default(),
                    r.num_segments
                ));
            }
            out
        }
        OutputFormat::Table => {
            let width = records.iter().map(|r| r.clip_id.len()).max().unwrap_or(4).max(4);
            let mut out = format!("{:<width$} {:>7} {:>7} {:>7} {:>8}\n", "clip", "SIG", "BAK", "OVRL", "segments");
            for r in records {
                out.push_str(&format!(
                    "{:<width$} {:>7.4} {:>7} {:>7} {:>8}\n",
                    r.clip_id,
                    r.sig,
                    opt(r.bak),
                    opt(r.ovrl),
                    r.num_segments
                ));
            }
            out
        }
    }
}

/// Expands files, directories (their `*.wav` files) and glob patterns into a
/// sorted, de-duplicated list.
pub fn expand_inputs(inputs: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        let p = Path::new(input);
        if p.is_dir() {
            for entry in std::fs::read_dir(p)? {
                let path = entry?.path();
                let is_wav = path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
                if path.is_file() && is_wav {
                    out.push(path);
                }
            }
        } else if p.exists() {
            out.push(p.to_path_buf());
        } else {
            for entry in glob::glob(input)? {
                out.push(entry?);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
