use std::fmt::Write as _;

use serde::Serialize;

use super::{aggregate_by_model, statistics, EvalError, Head, ScorePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Model,
    Clip,
}

impl Level {
    pub fn label(self) -> &'static str {
        match self {
            Level::Model => "Model",
            Level::Clip => "Clip",
        }
    }
}

/// One coefficient. `value` is `None` when undefined, with the reason in `flag`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub head: Head,
    pub level: Level,
    pub statistic: &'static str,
    /// Number of points correlated.
    pub n: usize,
    pub value: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub num_clips: usize,
    pub num_models: usize,
    /// Smallest and largest rating count behind the human scores.
    pub ratings_per_clip: (u32, u32),
    pub cells: Vec<CorrelationCell>,
}

/// All statistics for every head at model and clip level. Undefined
/// coefficients, including model-level cells with fewer than two models,
/// are flagged rather than failing the report.
pub fn correlation_report(pairs: &[ScorePair]) -> Result<CorrelationReport, EvalError> {
    let models = aggregate_by_model(pairs).map_err(|_| EvalError::TooFewClips { needed: 1, found: 0 })?;
    let mut cells = Vec::new();
    for level in [Level::Model, Level::Clip] {
        let points: Vec<(&_, &_)> = match level {
            Level::Model => models.iter().map(|m| (&m.human, &m.predicted)).collect(),
            Level::Clip => pairs.iter().map(|p| (&p.human, &p.predicted)).collect(),
        };
        let too_few = (level == Level::Model && models.len() < 2).then(|| {
            EvalError::TooFewGroups {
                needed: 2,
                found: models.len(),
            }
            .to_string()
        });
        for stat in statistics() {
            for head in Head::ALL {
                let (x, y): (Vec<f64>, Vec<Option<f64>>) =
                    points.iter().map(|(h, p)| (head.get(h).unwrap_or(f64::NAN), head.get(p))).unzip();
                let y: Option<Vec<f64>> = y.into_iter().collect();
                let result = match (&too_few, y) {
                    (Some(msg), _) => Err(msg.clone()),
                    (None, Some(y)) => stat.compute(&x, &y).map_err(|e| e.to_string()),
                    (None, None) => Err("no prediction for this head".to_string()),
                };
                cells.push(CorrelationCell {
                    head,
                    level,
                    statistic: stat.name(),
                    n: points.len(),
                    value: result.as_ref().ok().copied(),
                    flag: result.err(),
                });
            }
        }
    }
    let ratings = pairs.iter().map(|p| p.num_ratings);
    Ok(CorrelationReport {
        num_clips: pairs.len(),
        num_models: models.len(),
        ratings_per_clip: (ratings.clone().min().unwrap_or(0), ratings.max().unwrap_or(0)),
        cells,
    })
}

impl CorrelationReport {
    pub fn cell(&self, head: Head, level: Level, statistic: &str) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.head == head && c.level == level && c.statistic.eq_ignore_ascii_case(statistic))
    }

    /// The coefficient, if defined.
    pub fn value(&self, head: Head, level: Level, statistic: &str) -> Option<f64> {
        self.cell(head, level, statistic).and_then(|c| c.value)
    }

    fn ratings_label(&self) -> String {
        let (lo, hi) = self.ratings_per_clip;
        if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}-{hi}")
        }
    }

    /// Aligned text table with rows Model PCC, Model SRCC, Clip PCC, Clip SRCC.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "clips: {}  models: {}  ratings per clip (N): {}\n",
            self.num_clips,
            self.num_models,
            self.ratings_label()
        );
        let _ = write!(out, "{:<12}", "");
        for h in Head::ALL {
            let _ = write!(out, "{:>8}", h.label());
        }
        out.push('\n');
        for level in [Level::Model, Level::Clip] {
            for stat in statistics() {
                let _ = write!(out, "{:<12}", format!("{} {}", level.label(), stat.name()));
                for h in Head::ALL {
                    match self.value(h, level, stat.name()) {
                        Some(v) => {
                            let _ = write!(out, "{v:>8.3}");
                        }
                        None => {
                            let _ = write!(out, "{:>8}", "undef");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// One row per cell: `level,statistic,head,n,value,flag`. N is repeated per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,statistic,head,n,ratings_per_clip,value,flag\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.level.label().to_ascii_lowercase(),
                c.statistic,
                c.head.label(),
                c.n,
                self.ratings_label(),
                c.value.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.flag.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MosScores;

    fn pairs(f: impl Fn(f64) -> f64) -> Vec<ScorePair> {
        (0..12)
            .map(|i| {
                let s = 1.0 + (i % 5) as f64 * 0.9;
                let b = 1.2 + ((i * 7) % 11) as f64 * 0.3;
                let o = 1.1 + ((i * 3) % 8) as f64 * 0.45;
                ScorePair {
                    clip_id: format!("c{i}"),
                    model_id: format!("m{}", i % 4),
                    human: MosScores::full(s, b, o),
                    predicted: MosScores::full(f(s), f(b), f(o)),
                    num_ratings: 5,
                }
            })
            .collect()
    }

    #[test]
    fn identity_gives_all_ones() {
        let r = correlation_report(&pairs(|v| v)).unwrap();
        assert_eq!(r.cells.len(), 12);
        for c in &r.cells {
            assert!((c.value.unwrap() - 1.0).abs() < 1e-12, "{c:?}");
        }
        assert_eq!(r.num_models, 4);
    }

    #[test]
    fn reversal_gives_minus_ones() {
        let r = correlation_report(&pairs(|v| 6.0 - v)).unwrap();
        for c in &r.cells {
            assert!((c.value.unwrap() + 1.0).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn degenerate_cells_are_flagged() {
        let r = correlation_report(&pairs(|_| 3.0)).unwrap();
        assert_eq!(r.cells.len(), 12);
        assert!(r.cells.iter().all(|c| c.value.is_none() && c.flag.is_some()));
        assert!(r.to_table().contains("undef"));
        assert!(!r.to_json().contains("NaN"));
    }

    #[test]
    fn outputs_report_n() {
        let r = correlation_report(&pairs(|v| v)).unwrap();
        let table = r.to_table();
        assert!(table.contains("Model PCC") && table.contains("Clip SRCC") && table.contains("(N): 5"));
        assert_eq!(r.to_csv().lines().count(), 13);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["ratings_per_clip"][0], 5);
        assert_eq!(v["cells"].as_array().unwrap().len(), 12);
    }

    #[test]
    fn too_few_groups() {
        let mut p = pairs(|v| v);
        for x in &mut p {
            x.model_id = "one".into();
        }
        let r = correlation_report(&p).unwrap();
        for c in &r.cells {
            match c.level {
                Level::Model => assert!(c.value.is_none() && c.flag.as_deref().unwrap().contains("groups")),
                Level::Clip => assert!(c.value.is_some()),
            }
        }
        assert!(matches!(correlation_report(&[]), Err(EvalError::TooFewClips { .. })));
    }
}
