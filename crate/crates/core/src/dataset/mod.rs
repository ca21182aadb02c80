//! Rated-clip manifests, the synthetic corpus generator and simulated raters.

mod ratings;
mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub use ratings::{mean_rating, simulate_ratings};
pub use synth::{
    bak_oracle, generate_synthetic_corpus, ovrl_oracle, sig_oracle, synthesize_clip, ClipParams, ConditionParams,
    NoiseKind, SynthSpec, OVRL_COEFFS,
};

pub const MANIFEST_HEADER: [&str; 7] = [
    "clip_id",
    "clip_path",
    "model_id",
    "mos_sig",
    "mos_bak",
    "mos_ovrl",
    "num_ratings",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("duplicate clip id {0:?}")]
    DuplicateClipId(String),
    #[error("clip id {0:?} appears in more than one split")]
    SplitOverlap(String),
    #[error("invalid rated clip {clip_id:?}: {message}")]
    InvalidClip { clip_id: String, message: String },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::IoFailure(e.to_string())
    }
}

/// One clip with ground-truth MOS labels.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RatedClip {
    pub clip_id: String,
    pub clip_path: PathBuf,
    /// The processing condition (noise suppressor) that produced the clip.
    pub model_id: String,
    pub mos_sig: f64,
    pub mos_bak: f64,
    pub mos_ovrl: f64,
    pub num_ratings: u32,
}

impl RatedClip {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |message: String| DatasetError::InvalidClip {
            clip_id: self.clip_id.clone(),
            message,
        };
        for (name, v) in [("mos_sig", self.mos_sig), ("mos_bak", self.mos_bak), ("mos_ovrl", self.mos_ovrl)] {
            if !(1.0..=5.0).contains(&v) {
                return Err(bad(format!("{name} = {v} outside [1, 5]")));
            }
        }
        if self.num_ratings == 0 {
            return Err(bad("num_ratings must be at least 1".into()));
        }
        if self.clip_id.is_empty() {
            return Err(bad("empty clip id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    Unspecified,
}

impl Split {
    /// Infers the split from a file stem such as `train`, `val.csv` or `heldout-test`.
    pub fn from_path(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if stem.contains("train") {
            Split::Train
        } else if stem.contains("val") {
            Split::Val
        } else if stem.contains("test") {
            Split::Test
        } else {
            Split::Unspecified
        }
    }
}

/// A list of rated clips with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub split: Split,
    /// Directory relative clip paths are resolved against.
    pub root: PathBuf,
    clips: Vec<RatedClip>,
}

impl Manifest {
    pub fn new(split: Split, root: impl Into<PathBuf>, clips: Vec<RatedClip>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(clips.len());
        for c in &clips {
            c.validate()?;
            if !seen.insert(c.clip_id.as_str()) {
                return Err(DatasetError::DuplicateClipId(c.clip_id.clone()));
            }
        }
        Ok(Self {
            split,
            root: root.into(),
            clips,
        })
    }

    pub fn clips(&self) -> &[RatedClip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn resolve(&self, clip: &RatedClip) -> PathBuf {
        if clip.clip_path.is_absolute() {
            clip.clip_path.clone()
        } else {
            self.root.join(&clip.clip_path)
        }
    }

    /// Distinct model ids in first-appearance order.
    pub fn model_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.clips
            .iter()
            .map(|c| c.model_id.as_str())
            .filter(|m| seen.insert(*m))
            .collect()
    }

    /// Keeps the clips selected by `keep`, under a new split tag.
    pub fn subset(&self, split: Split, keep: impl Fn(usize, &RatedClip) -> bool) -> Self {
        Self {
            split,
            root: self.root.clone(),
            clips: self
                .clips
                .iter()
                .enumerate()
                .filter(|(i, c)| keep(*i, c))
                .map(|(_, c)| c.clone())
                .collect(),
        }
    }

    /// Replaces labels with the given per-clip triples.
    pub fn with_labels(&self, labels: &[(f64, f64, f64)], num_ratings: u32) -> Result<Self, DatasetError> {
        assert_eq!(labels.len(), self.clips.len(), "one label triple per clip");
        let clips = self
            .clips
            .iter()
            .zip(labels)
            .map(|(c, &(s, b, o))| RatedClip {
                mos_sig: s,
                mos_bak: b,
                mos_ovrl: o,
                num_ratings,
                ..c.clone()
            })
            .collect();
        Self::new(self.split, self.root.clone(), clips)
    }
}

/// Errors if any clip id is shared between manifests.
pub fn check_disjoint(manifests: &[&Manifest]) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for m in manifests {
        for c in m.clips() {
            if !seen.insert(c.clip_id.as_str()) {
                return Err(DatasetError::SplitOverlap(c.clip_id.clone()));
            }
        }
    }
    Ok(())
}

/// Reads a manifest CSV. Relative clip paths resolve against the file's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(file, Split::from_path(path), root)
}

pub fn parse_manifest<R: std::io::Read>(reader: R, split: Split, root: PathBuf) -> Result<Manifest, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(&e, 1))?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(DatasetError::ParseError {
            line: 1,
            message: format!("expected header {:?}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut clips = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(&e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let clip: RatedClip = record.deserialize(Some(&headers)).map_err(|e| DatasetError::ParseError {
            line,
            message: e.to_string(),
        })?;
        clip.validate().map_err(|e| DatasetError::ParseError {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(DatasetError::DuplicateClipId(clip.clip_id));
        }
        clips.push(clip);
    }
    Manifest::new(split, root, clips)
}

fn parse_err(e: &csv::Error, fallback: u64) -> DatasetError {
    DatasetError::ParseError {
        line: e.position().map_or(fallback, |p| p.line()),
        message: e.to_string(),
    }
}

/// Writes a manifest CSV with scores at six decimals.
pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    write_manifest_to(manifest, file)
}

pub fn write_manifest_to<W: std::io::Write>(manifest: &Manifest, writer: W) -> Result<(), DatasetError> {
    let io = |e: csv::Error| DatasetError::IoFailure(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for c in &manifest.clips {
        w.write_record([
            c.clip_id.clone(),
            c.clip_path.to_string_lossy().into_owned(),
            c.model_id.clone(),
            format!("{:.6}", c.mos_sig),
            format!("{:.6}", c.mos_bak),
            format!("{:.6}", c.mos_ovrl),
            c.num_ratings.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, model: &str, s: f64) -> RatedClip {
        RatedClip {
            clip_id: id.into(),
            clip_path: format!("{model}/{id}.wav").into(),
            model_id: model.into(),
            mos_sig: s,
            mos_bak: 4.25,
            mos_ovrl: 3.5,
            num_ratings: 5,
        }
    }

    #[test]
    fn header_only_is_empty() {
        let csv = "clip_id,clip_path,model_id,mos_sig,mos_bak,mos_ovrl,num_ratings\n";
        let m = parse_manifest(csv.as_bytes(), Split::Test, PathBuf::new()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "clip_id,clip_path,model_id,mos_sig,mos_bak,mos_ovrl,num_ratings\n\
                   a,a.wav,m,3,3,3,5\n\
                   a,b.wav,m,3,3,3,5\n";
        assert!(matches!(
            parse_manifest(csv.as_bytes(), Split::Test, PathBuf::new()),
            Err(DatasetError::DuplicateClipId(id)) if id == "a"
        ));
        assert!(matches!(
            Manifest::new(Split::Train, "", vec![clip("x", "m", 3.0), clip("x", "m", 2.0)]),
            Err(DatasetError::DuplicateClipId(_))
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let csv = "clip_id,clip_path,model_id,mos_sig,mos_bak,mos_ovrl,num_ratings\n\
                   a,a.wav,m,3,3,3,5\n\
                   b,b.wav,m,three,3,3,5\n";
        match parse_manifest(csv.as_bytes(), Split::Test, PathBuf::new()) {
            Err(DatasetError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let csv = "clip_id,clip_path,model_id,mos_sig,mos_bak,mos_ovrl,num_ratings\n\
                   a,a.wav,m,6,3,3,5\n";
        assert!(matches!(
            parse_manifest(csv.as_bytes(), Split::Test, PathBuf::new()),
            Err(DatasetError::ParseError { line: 2, .. })
        ));
        let csv = "id,path\n";
        assert!(matches!(
            parse_manifest(csv.as_bytes(), Split::Test, PathBuf::new()),
            Err(DatasetError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let m = Manifest::new(
            Split::Train,
            "",
            vec![clip("a", "m1", 1.123456), clip("b", "m2", 4.999999), clip("c", "m1", 2.5)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_manifest(&m, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.split, Split::Train);
        assert_eq!(back.clips(), m.clips());
        assert_eq!(back.model_ids(), vec!["m1", "m2"]);
        assert_eq!(back.resolve(&back.clips()[0]), dir.path().join("m1/a.wav"));
    }

    #[test]
    fn split_overlap_detected() {
        let a = Manifest::new(Split::Train, "", vec![clip("a", "m", 3.0)]).unwrap();
        let b = Manifest::new(Split::Test, "", vec![clip("b", "m", 3.0), clip("a", "m", 3.0)]).unwrap();
        assert!(matches!(check_disjoint(&[&a, &b]), Err(DatasetError::SplitOverlap(_))));
        let c = Manifest::new(Split::Test, "", vec![clip("c", "m", 3.0)]).unwrap();
        check_disjoint(&[&a, &c]).unwrap();
    }
}
