//! Output-head variants, registered by name and selected at runtime.

use crate::dataset::RatedClip;

use super::MosScores;

/// Defines what the final dense layer predicts and how its raw outputs map
/// to MOS scores.
pub trait OutputVariant: Send + Sync {
    /// Registry key, also written into weight bundles.
    fn name(&self) -> &'static str;

    fn output_dim(&self) -> usize;

    /// Training targets for one rated clip, in output order.
    fn targets(&self, clip: &RatedClip) -> Vec<f64>;

    /// Builds (unclamped) scores from raw network outputs.
    fn scores(&self, raw: &[f64]) -> MosScores;
}

/// SIG, BAK and OVRL from one network.
pub struct ThreeOutput;

impl OutputVariant for ThreeOutput {
    fn name(&self) -> &'static str {
        "three_output"
    }

    fn output_dim(&self) -> usize {
        3
    }

    fn targets(&self, clip: &RatedClip) -> Vec<f64> {
        vec![clip.mos_sig, clip.mos_bak, clip.mos_ovrl]
    }

    fn scores(&self, raw: &[f64]) -> MosScores {
        MosScores {
            sig: raw[0],
            bak: Some(raw[1]),
            ovrl: Some(raw[2]),
        }
    }
}

/// Same trunk with a single SIG output.
pub struct SigOnly;

impl OutputVariant for SigOnly {
    fn name(&self) -> &'static str {
        "sig_only"
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn targets(&self, clip: &RatedClip) -> Vec<f64> {
        vec![clip.mos_sig]
    }

    fn scores(&self, raw: &[f64]) -> MosScores {
        MosScores {
            sig: raw[0],
            bak: None,
            ovrl: None,
        }
    }
}

static REGISTRY: &[&dyn OutputVariant] = &[&ThreeOutput, &SigOnly];

/// All registered variants.
pub fn variants() -> &'static [&'static dyn OutputVariant] {
    REGISTRY
}

/// Looks a variant up by its registry name.
pub fn variant(name: &str) -> Option<&'static dyn OutputVariant> {
    REGISTRY.iter().copied().find(|v| v.name() == name)
}

pub fn variant_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|v| v.name()).collect()
}
