use nalgebra::{DMatrix, DVector};

use super::{EvalError, ScorePair};

/// Least-squares fit `ovrl ≈ a·sig + b·bak + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvrlFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Fits over `(sig, bak, ovrl)` rows using an SVD solve with a rank check.
pub fn fit_ovrl_linear(rows: &[(f64, f64, f64)]) -> Result<OvrlFit, EvalError> {
    if rows.len() < 3 {
        return Err(EvalError::TooFewClips {
            needed: 3,
            found: rows.len(),
        });
    }
    let n = rows.len();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => rows[i].0,
        1 => rows[i].1,
        _ => 1.0,
    });
    let target = DVector::from_iterator(n, rows.iter().map(|r| r.2));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * n.max(3) as f64 * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 3 {
        return Err(EvalError::RankDeficient { rank });
    }
    let coef = svd
        .solve(&target, tol)
        .map_err(|e| EvalError::DegenerateInput(e.to_string()))?;
    let resid = &design * &coef - &target;
    let ss_res = resid.norm_squared();
    let mean = target.mean();
    let ss_tot: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(OvrlFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        r_squared,
        rmse: (ss_res / n as f64).sqrt(),
        n,
    })
}

/// Fits on the human side of score pairs.
pub fn fit_ovrl_pairs(pairs: &[ScorePair]) -> Result<OvrlFit, EvalError> {
    let rows: Option<Vec<_>> = pairs
        .iter()
        .map(|p| Some((p.human.sig, p.human.bak?, p.human.ovrl?)))
        .collect();
    let rows = rows.ok_or_else(|| EvalError::InvalidArgument("human scores lack BAK or OVRL".into()))?;
    fit_ovrl_linear(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovery() {
        let rows: Vec<_> = (0..40)
            .map(|i| {
                let s = 1.0 + (i % 9) as f64 * 0.5;
                let b = 1.0 + ((i * 5) % 7) as f64 * 0.6;
                (s, b, 0.5 * s + 0.4 * b + 0.1)
            })
            .collect();
        let f = fit_ovrl_linear(&rows).unwrap();
        assert!((f.a - 0.5).abs() < 1e-9 && (f.b - 0.4).abs() < 1e-9 && (f.c - 0.1).abs() < 1e-9, "{f:?}");
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_are_rank_deficient() {
        let rows = vec![(3.0, 2.0, 2.5); 10];
        assert!(matches!(fit_ovrl_linear(&rows), Err(EvalError::RankDeficient { .. })));
        // sig and bak collinear.
        let rows: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64, 1.0)).collect();
        assert!(matches!(fit_ovrl_linear(&rows), Err(EvalError::RankDeficient { rank: 2 })));
    }
}
