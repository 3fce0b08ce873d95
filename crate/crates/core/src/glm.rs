//! Logistic and linear estimating-equation solvers.
//!
//! The logistic solver is Newton-Raphson on the maximum-likelihood score
//! `sum_i x_i (y_i - expit(x_i' coef)) = 0` with step-halving so the
//! log-likelihood never decreases. Linear fits are ordinary least squares via
//! Householder QR. Both refuse rank-deficient designs, detected with a
//! column-pivoted QR.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;
/// Convergence threshold on `max |score| / n`.
pub const SCORE_TOLERANCE: f64 = 1e-10;
/// Relative pivot threshold for the rank decision.
pub const RANK_TOLERANCE: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const LL_ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the score at `coef` (unscaled).
    pub max_abs_score: f64,
    /// Log-likelihood after each accepted iterate, starting at the initial point.
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub residual_sum_squares: f64,
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Builds an `n x k` design by filling each row through `fill`.
pub fn design(n: usize, k: usize, mut fill: impl FnMut(usize, &mut [f64])) -> DMatrix<f64> {
    let mut row = vec![0.0; k];
    let mut m = DMatrix::zeros(n, k);
    for i in 0..n {
        fill(i, &mut row);
        for (j, &x) in row.iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

/// Numerical rank of `x` from a column-pivoted QR.
pub fn column_rank(x: &DMatrix<f64>) -> usize {
    let k = x.ncols();
    if k == 0 || x.nrows() == 0 {
        return 0;
    }
    let r = x.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(k)).map(|j| r[(j, j)].abs()).collect();
    let lead = diag.first().copied().unwrap_or(0.0);
    if lead == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&d| d > RANK_TOLERANCE * lead).count()
}

fn require_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let rank = column_rank(x);
    if rank < x.ncols() || x.nrows() < x.ncols() {
        return Err(Error::RankDeficientDesign {
            rank,
            columns: x.ncols(),
        });
    }
    Ok(())
}

fn log_likelihood(y: &[f64], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| yi * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum()
}

fn newton_step(design: &DMatrix<f64>, p: &DVector<f64>, score: &DVector<f64>) -> Option<DVector<f64>> {
    let mut weighted = design.clone();
    for (mut row, &pi) in weighted.row_iter_mut().zip(p.iter()) {
        row *= pi * (1.0 - pi);
    }
    Cholesky::new(design.transpose() * weighted).map(|ch| ch.solve(score))
}

pub fn fit_logistic(response: &[f64], design: &DMatrix<f64>) -> Result<LogisticFit> {
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: response.len(),
        });
    }
    if let Some(i) = response.iter().position(|&r| r != 0.0 && r != 1.0) {
        return Err(Error::NonBinaryValue {
            row: i + 1,
            column: "response".into(),
            value: response[i].to_string(),
        });
    }
    require_full_rank(design)?;

    let y = DVector::from_column_slice(response);
    let mut coef = DVector::zeros(k);
    let mut eta = design * &coef;
    let mut ll = log_likelihood(response, &eta);
    let mut trace = vec![ll];
    let scale = n as f64;

    for iteration in 0..=MAX_ITERATIONS {
        let p = eta.map(expit);
        let score = design.transpose() * (&y - &p);
        let sup = score.amax();
        let step = newton_step(design, &p, &score).ok_or(Error::SeparationDetected)?;
        if sup / scale <= SCORE_TOLERANCE {
            if p.iter().any(|&pi| !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pi)) {
                return Err(Error::SeparationDetected);
            }
            // One polishing step: at this distance Newton is quadratic, so
            // the coefficients land at machine precision.
            let mut sup = sup;
            let candidate = &coef + &step;
            let cand_eta = design * &candidate;
            let cand_sup = (design.transpose() * (&y - cand_eta.map(expit))).amax();
            if cand_sup < sup {
                coef = candidate;
                sup = cand_sup;
                trace.push(log_likelihood(response, &cand_eta));
            }
            return Ok(LogisticFit {
                coef: coef.iter().copied().collect(),
                converged: true,
                iterations: iteration,
                max_abs_score: sup,
                log_likelihood: trace,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        // Near the optimum the likelihood gain drops below rounding error;
        // there a step is kept if it shrinks the score.
        let noise = LL_ROUNDOFF * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &coef + &step * t;
            let cand_eta = design * &candidate;
            let cand_ll = log_likelihood(response, &cand_eta);
            let flat = cand_ll >= ll - noise
                && (design.transpose() * (&y - cand_eta.map(expit))).amax() < sup;
            if cand_ll >= ll || flat {
                coef = candidate;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(ll);
    }

    let p = eta.map(expit);
    if p.iter().any(|&pi| !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pi)) {
        return Err(Error::SeparationDetected);
    }
    let sup = (design.transpose() * (&y - &p)).amax();
    Err(Error::MaxIterationsExceeded {
        iterations: trace.len() - 1,
        score: sup,
    })
}

pub fn fit_linear(response: &[f64], design: &DMatrix<f64>) -> Result<LinearFit> {
    let n = design.nrows();
    if response.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: response.len(),
        });
    }
    require_full_rank(design)?;
    let y = DVector::from_column_slice(response);
    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &y;
    let coef = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficientDesign {
            rank: column_rank(design),
            columns: design.ncols(),
        })?;
    let resid = &y - design * &coef;
    Ok(LinearFit {
        coef: coef.iter().copied().collect(),
        residual_sum_squares: resid.norm_squared(),
    })
}

fn dot(coef: &[f64], row: &[f64]) -> Result<f64> {
    if coef.len() != row.len() {
        return Err(Error::DimensionMismatch {
            expected: coef.len(),
            found: row.len(),
        });
    }
    Ok(coef.iter().zip(row).map(|(c, x)| c * x).sum())
}

/// Fitted probability at one design row, clamped away from 0 and 1.
pub fn predict_prob(fit: &LogisticFit, design_row: &[f64]) -> Result<f64> {
    let eta = dot(&fit.coef, design_row)?;
    Ok(expit(eta).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

pub fn predict_linear(fit: &LinearFit, design_row: &[f64]) -> Result<f64> {
    dot(&fit.coef, design_row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_counts(groups: &[(f64, usize, usize)]) -> (Vec<f64>, DMatrix<f64>) {
        // (covariate value, ones, total)
        let mut y = Vec::new();
        let mut xs = Vec::new();
        for &(x, ones, total) in groups {
            for i in 0..total {
                y.push(if i < ones { 1.0 } else { 0.0 });
                xs.push(x);
            }
        }
        let d = design(y.len(), 2, |i, r| {
            r[0] = 1.0;
            r[1] = xs[i];
        });
        (y, d)
    }

    #[test]
    fn intercept_only_is_logit_of_rate() {
        let y: Vec<f64> = (0..201).map(|i| if i < 46 { 1.0 } else { 0.0 }).collect();
        let d = DMatrix::from_element(201, 1, 1.0);
        let fit = fit_logistic(&y, &d).unwrap();
        let oracle = (46.0f64 / 155.0).ln();
        assert!((fit.coef[0] - oracle).abs() < 1e-10);
        assert!((fit.coef[0] - (-1.21478)).abs() < 1e-5);
        assert!(fit.converged);
    }

    #[test]
    fn saturated_binary_design_matches_cell_logits() {
        let (y, d) = binary_counts(&[(0.0, 20, 108), (1.0, 26, 93)]);
        let fit = fit_logistic(&y, &d).unwrap();
        let a = (20.0f64 / 88.0).ln();
        let b = (26.0f64 / 67.0).ln() - a;
        assert!((fit.coef[0] - a).abs() < 1e-12, "{:?}", fit.coef);
        assert!((fit.coef[1] - b).abs() < 1e-12);
        assert!((fit.coef[0] - (-1.4816)).abs() < 1e-4);
        assert!((fit.coef[1] - 0.5350).abs() < 1e-4);
        let p1 = predict_prob(&fit, &[1.0, 1.0]).unwrap();
        assert!((p1 - 26.0 / 93.0).abs() < 1e-12);
        assert!((p1 - 0.2796).abs() < 1e-4);
        let p0 = predict_prob(&fit, &[1.0, 0.0]).unwrap();
        assert!((p0 - 20.0 / 108.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_is_detected() {
        let (y, d) = binary_counts(&[(0.0, 0, 10), (1.0, 10, 10)]);
        assert!(matches!(fit_logistic(&y, &d), Err(Error::SeparationDetected)));
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let d = design(6, 3, |i, r| {
            r[0] = 1.0;
            r[1] = i as f64;
            r[2] = 2.0 * i as f64 + 1.0;
        });
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        assert!(matches!(
            fit_logistic(&y, &d),
            Err(Error::RankDeficientDesign { rank: 2, columns: 3 })
        ));
        assert!(matches!(fit_linear(&y, &d), Err(Error::RankDeficientDesign { .. })));
    }

    #[test]
    fn prediction_symmetry_and_clamp() {
        let fit = LogisticFit {
            coef: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            max_abs_score: 0.0,
            log_likelihood: vec![],
        };
        assert_eq!(predict_prob(&fit, &[1.0, 3.0]).unwrap(), 0.5);
        let big = LogisticFit {
            coef: vec![50.0],
            ..fit.clone()
        };
        assert_eq!(predict_prob(&big, &[1.0]).unwrap(), 1.0 - PROB_CLAMP);
        assert!(matches!(
            predict_prob(&fit, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let xs: Vec<f64> = (0..60).map(|i| (i as f64 - 30.0) / 7.0).collect();
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| if (x * 1.3 + ((i * 37) % 11) as f64 / 5.0 - 1.0) > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let d = design(xs.len(), 2, |i, r| {
            r[0] = 1.0;
            r[1] = xs[i] * 40.0;
        });
        let fit = fit_logistic(&y, &d).unwrap();
        assert!(fit
            .log_likelihood
            .windows(2)
            .all(|w| w[1] >= w[0] - LL_ROUNDOFF * (1.0 + w[0].abs())));
        assert!(fit.max_abs_score / xs.len() as f64 <= SCORE_TOLERANCE);
    }

    #[test]
    fn constant_response_linear_fit() {
        let d = design(8, 3, |i, r| {
            r[0] = 1.0;
            r[1] = (i % 2) as f64;
            r[2] = (i as f64).sqrt();
        });
        let fit = fit_linear(&[5.0; 8], &d).unwrap();
        assert!((fit.coef[0] - 5.0).abs() < 1e-12);
        assert!(fit.coef[1].abs() < 1e-12 && fit.coef[2].abs() < 1e-12);
        assert!(fit.residual_sum_squares < 1e-20);
    }

    #[test]
    fn saturated_linear_reproduces_cell_means() {
        // cells (a, z) with chosen values
        let cells = [
            (0u8, 0u8, vec![200.0, 215.0, 190.0]),
            (1, 0, vec![240.0, 260.0]),
            (0, 1, vec![220.0, 230.0, 235.0, 245.0]),
            (1, 1, vec![250.0, 270.0, 230.0]),
        ];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (a, z, ys) in &cells {
            for &v in ys {
                rows.push((*a as f64, *z as f64));
                y.push(v);
            }
        }
        let d = design(y.len(), 4, |i, r| {
            let (a, z) = rows[i];
            r.copy_from_slice(&[1.0, z, a, a * z]);
        });
        let fit = fit_linear(&y, &d).unwrap();
        for (a, z, ys) in &cells {
            let (a, z) = (*a as f64, *z as f64);
            let pred = predict_linear(&fit, &[1.0, z, a, a * z]).unwrap();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            assert!((pred - mean).abs() < 1e-10);
        }
    }
}
