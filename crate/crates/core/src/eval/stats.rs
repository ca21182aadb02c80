//! Correlation statistics, registered by name.

use super::EvalError;

/// A bivariate correlation coefficient.
pub trait Statistic: Send + Sync {
    /// Short name used in reports, e.g. `PCC`.
    fn name(&self) -> &'static str;

    fn compute(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError>;
}

pub struct Pearson;

impl Statistic for Pearson {
    fn name(&self) -> &'static str {
        "PCC"
    }

    fn compute(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        pcc(x, y)
    }
}

pub struct Spearman;

impl Statistic for Spearman {
    fn name(&self) -> &'static str {
        "SRCC"
    }

    fn compute(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        srcc(x, y)
    }
}

static REGISTRY: &[&dyn Statistic] = &[&Pearson, &Spearman];

pub fn statistics() -> &'static [&'static dyn Statistic] {
    REGISTRY
}

pub fn statistic(name: &str) -> Option<&'static dyn Statistic> {
    REGISTRY.iter().copied().find(|s| s.name().eq_ignore_ascii_case(name))
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::DegenerateInput(format!("{} samples", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput("non-finite value".into()));
    }
    Ok(())
}

/// Sample Pearson correlation, centred two-pass in f64.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_inputs(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn mean_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation as the Pearson correlation of mean ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_inputs(x, y)?;
    pcc(&mean_ranks(x), &mean_ranks(y))
}
