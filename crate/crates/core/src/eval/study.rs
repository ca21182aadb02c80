use serde::Serialize;

use super::{pcc, EvalError, Head};
use crate::dataset::{mean_rating, simulate_ratings, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over trials; 0 for a single trial.
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    /// Ratings averaged per clip.
    pub n: usize,
    /// PCC of averaged simulated ratings against the true MOS.
    pub pcc_vs_true: Summary,
    /// PCC between two independent simulated panels of the same size.
    pub run_to_run: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingsStudy {
    pub head: Head,
    pub noise_sd: f64,
    pub trials: usize,
    pub num_clips: usize,
    pub rows: Vec<StudyRow>,
}

/// SplitMix64 finaliser, used to derive independent per-clip seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |acc, &p| mix(acc ^ mix(p)))
}

/// For each N, simulates panels of N raters per clip around the manifest's
/// labels for `head` and summarises correlations over `trials`. Every
/// `(trial, N, panel, clip)` draws from its own derived seed.
pub fn ratings_study(
    manifest: &Manifest,
    head: Head,
    n_list: &[usize],
    noise_sd: f64,
    trials: usize,
    seed: u64,
) -> Result<RatingsStudy, EvalError> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(EvalError::InvalidArgument("n_list must be non-empty with N >= 1".into()));
    }
    if trials == 0 {
        return Err(EvalError::InvalidArgument("trials must be at least 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(EvalError::InvalidArgument(format!("noise_sd {noise_sd}")));
    }
    let truth: Vec<f64> = manifest
        .clips()
        .iter()
        .map(|c| match head {
            Head::Sig => c.mos_sig,
            Head::Bak => c.mos_bak,
            Head::Ovrl => c.mos_ovrl,
        })
        .collect();
    let panel = |trial: usize, n: usize, run: u64| -> Vec<f64> {
        truth
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let s = derive(&[seed, trial as u64, n as u64, run, i as u64]);
                mean_rating(&simulate_ratings(t, n, noise_sd, s))
            })
            .collect()
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut vs_true = Vec::with_capacity(trials);
        let mut r2r = Vec::with_capacity(trials);
        for trial in 0..trials {
            let a = panel(trial, n, 0);
            let b = panel(trial, n, 1);
            vs_true.push(pcc(&a, &truth)?);
            r2r.push(pcc(&a, &b)?);
        }
        rows.push(StudyRow {
            n,
            pcc_vs_true: Summary::of(&vs_true),
            run_to_run: Summary::of(&r2r),
        });
    }
    Ok(RatingsStudy {
        head,
        noise_sd,
        trials,
        num_clips: truth.len(),
        rows,
    })
}

impl RatingsStudy {
    pub fn row(&self, n: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} head, {} clips, noise_sd {}, {} trials\n{:>6} {:>16} {:>16}\n",
            self.head.label(),
            self.num_clips,
            self.noise_sd,
            self.trials,
            "N",
            "PCC vs true",
            "run-to-run PCC"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3}\n",
                r.n, r.pcc_vs_true.mean, r.pcc_vs_true.sd, r.run_to_run.mean, r.run_to_run.sd
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RatedClip, Split};

    fn manifest(n: usize, f: impl Fn(usize) -> f64) -> Manifest {
        let clips = (0..n)
            .map(|i| RatedClip {
                clip_id: format!("c{i}"),
                clip_path: format!("c{i}.wav").into(),
                model_id: format!("m{}", i % 10),
                mos_sig: f(i),
                mos_bak: f(i),
                mos_ovrl: f(i),
                num_ratings: 1,
            })
            .collect();
        Manifest::new(Split::Test, "", clips).unwrap()
    }

    #[test]
    fn noiseless_panels_are_exact() {
        let m = manifest(50, |i| 1.0 + (i % 5) as f64);
        let s = ratings_study(&m, Head::Ovrl, &[1, 5, 30], 0.0, 3, 1).unwrap();
        for r in &s.rows {
            assert_eq!(r.pcc_vs_true.mean, 1.0);
            assert_eq!(r.run_to_run.mean, 1.0);
        }
    }

    #[test]
    fn many_raters_converge() {
        let m = manifest(500, |i| 1.5 + 3.0 * (i as f64 / 499.0));
        let s = ratings_study(&m, Head::Sig, &[1, 10_000], 1.0, 1, 4).unwrap();
        assert!(s.row(10_000).unwrap().pcc_vs_true.mean > 0.99);
        assert!(s.row(1).unwrap().pcc_vs_true.mean < 0.9);
    }

    #[test]
    fn bad_arguments() {
        let m = manifest(5, |i| 1.0 + i as f64);
        assert!(ratings_study(&m, Head::Sig, &[], 1.0, 1, 0).is_err());
        assert!(ratings_study(&m, Head::Sig, &[5], 1.0, 0, 0).is_err());
        assert!(ratings_study(&m, Head::Sig, &[5], -1.0, 1, 0).is_err());
    }
}
