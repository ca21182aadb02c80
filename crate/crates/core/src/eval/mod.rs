//! Correlation-based evaluation of predicted against human (or oracle) MOS.
//!
//! Coefficients are computed per head (SIG, BAK, OVRL) at two levels: per
//! clip, and per model after averaging each model's clips.

mod fit;
mod report;
mod stats;
mod study;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::MosScores;

pub use fit::{fit_ovrl_linear, fit_ovrl_pairs, OvrlFit};
pub use report::{correlation_report, CorrelationCell, CorrelationReport, Level};
pub use stats::{mean_ranks, pcc, srcc, statistic, statistics, Pearson, Spearman, Statistic};
pub use study::{ratings_study, RatingsStudy, StudyRow, Summary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("need at least {needed} clips, found {found}")]
    TooFewClips { needed: usize, found: usize },
    #[error("design matrix is rank deficient (rank {rank} of 3)")]
    RankDeficient { rank: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Sig,
    Bak,
    Ovrl,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Sig, Head::Bak, Head::Ovrl];

    pub fn label(self) -> &'static str {
        match self {
            Head::Sig => "SIG",
            Head::Bak => "BAK",
            Head::Ovrl => "OVRL",
        }
    }

    pub fn get(self, s: &MosScores) -> Option<f64> {
        s.heads()[self as usize]
    }
}

/// Human and predicted scores for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub clip_id: String,
    pub model_id: String,
    pub human: MosScores,
    pub predicted: MosScores,
    /// Ratings behind the human score.
    pub num_ratings: u32,
}

/// Unweighted per-model means of human and predicted scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeans {
    pub model_id: String,
    pub num_clips: usize,
    pub human: MosScores,
    pub predicted: MosScores,
}

fn mean_scores<'a>(scores: impl Iterator<Item = &'a MosScores> + Clone, n: usize) -> MosScores {
    let mean = |h: Head| -> Option<f64> {
        let mut sum = 0.0;
        for s in scores.clone() {
            sum += h.get(s)?;
        }
        Some(sum / n as f64)
    };
    MosScores {
        sig: mean(Head::Sig).expect("sig is always present"),
        bak: mean(Head::Bak),
        ovrl: mean(Head::Ovrl),
    }
}

/// Groups pairs by `model_id` (first-appearance order) and averages each head.
/// A head missing from any clip of a model is missing from its mean.
pub fn aggregate_by_model(pairs: &[ScorePair]) -> Result<Vec<ModelMeans>, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::TooFewGroups { needed: 1, found: 0 });
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&ScorePair>> = HashMap::new();
    for p in pairs {
        groups
            .entry(p.model_id.as_str())
            .or_insert_with(|| {
                order.push(p.model_id.as_str());
                Vec::new()
            })
            .push(p);
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let g = &groups[m];
            ModelMeans {
                model_id: m.to_string(),
                num_clips: g.len(),
                human: mean_scores(g.iter().map(|p| &p.human), g.len()),
                predicted: mean_scores(g.iter().map(|p| &p.predicted), g.len()),
            }
        })
        .collect())
}
