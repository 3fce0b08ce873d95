//! Principal strata under monotonicity: always-takers `P11`, never-takers
//! `P00` and compliers `P01`. The ATE decomposes as
//!
//! ```text
//! ATE = pi01 * LATE + pi11 * {mu11(1) - mu11(0)} + pi00 * {mu00(1) - mu00(0)}
//! ```
//!
//! where everything except `mu11(0)` and `mu00(1)` is identified. Limits on
//! those two unidentified means turn the identity into bounds on the ATE, and
//! the modified-IPW inversion maps ATE bounds to bounds on `tau`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{AssumptionParams, Interval, IntervalKind, ObservationalDataset};
use crate::error::{Error, Result};
use crate::estimators::{self, TauInversion};
use crate::glm::{self, LinearFit, LogisticFit};

/// Identified stratum proportions, observable stratum means and the IV estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrataEstimates {
    pub pi11: f64,
    pub pi00: f64,
    pub pi01: f64,
    /// Mean outcome of treated records at `Z = 0` (always-takers under treatment).
    pub mu11_1: f64,
    /// Mean outcome of untreated records at `Z = 1` (never-takers untreated).
    pub mu00_0: f64,
    pub beta_iv: f64,
}

impl StrataEstimates {
    /// Plug-in value of the ATE decomposition at the two unidentified means.
    pub fn b_hat(&self, mu11_0: f64, mu00_1: f64) -> f64 {
        self.pi01 * self.beta_iv
            + self.pi11 * (self.mu11_1 - mu11_0)
            + self.pi00 * (mu00_1 - self.mu00_0)
    }
}

pub fn b_hat(strata: &StrataEstimates, mu11_0: f64, mu00_1: f64) -> f64 {
    strata.b_hat(mu11_0, mu00_1)
}

/// Closed-form saturated-model estimates from the four `(A, Z)` cells.
pub fn estimate_strata(ds: &ObservationalDataset) -> Result<StrataEstimates> {
    // [a][z] -> (count, sum y)
    let mut cells = [[(0usize, 0.0f64); 2]; 2];
    for i in 0..ds.n() {
        let c = &mut cells[usize::from(ds.a()[i])][usize::from(ds.z()[i])];
        c.0 += 1;
        c.1 += ds.y()[i];
    }
    for (a, z) in [(1u8, 0u8), (0, 1)] {
        if cells[usize::from(a)][usize::from(z)].0 == 0 {
            return Err(Error::EmptyCell { a, z });
        }
    }
    let arm_n = |z: usize| (cells[0][z].0 + cells[1][z].0) as f64;
    let pi11 = cells[1][0].0 as f64 / arm_n(0);
    let pi00 = cells[0][1].0 as f64 / arm_n(1);
    let pi01 = 1.0 - pi11 - pi00;
    if pi01 <= 0.0 {
        return Err(Error::WeakInstrument { difference: pi01 });
    }
    let beta_iv = estimators::iv_estimate(ds)?.value;
    Ok(StrataEstimates {
        pi11,
        pi00,
        pi01,
        mu11_1: cells[1][0].1 / cells[1][0].0 as f64,
        mu00_0: cells[0][1].1 / cells[0][1].0 as f64,
        beta_iv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assumption {
    /// Known upper limits on the unidentified means.
    A,
    /// Sign and ordering constraints relative to identified means.
    B,
    /// Assumption B conditional on the measured covariates.
    Bprime,
}

impl Assumption {
    pub fn needs_covariate_models(self) -> bool {
        self == Assumption::Bprime
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assumption::A => "A",
            Assumption::B => "B",
            Assumption::Bprime => "Bprime",
        })
    }
}

impl FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Assumption::A),
            "B" => Ok(Assumption::B),
            "Bprime" | "B'" => Ok(Assumption::Bprime),
            other => Err(Error::InvalidParameter(format!(
                "unknown assumption `{other}` (expected A, B or Bprime)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub ate_bound: Interval,
    pub tau_bound: Interval,
    pub assumption: Assumption,
}

fn pair(
    lower: f64,
    upper: f64,
    tau: &TauInversion,
    assumption: Assumption,
) -> Result<BoundPair> {
    let ate_bound = Interval::new(lower, upper, IntervalKind::BoundEstimate)?;
    // tau is decreasing in the ATE: endpoints swap.
    let tau_bound = Interval::new(
        tau.eval(upper).tau,
        tau.eval(lower).tau,
        IntervalKind::BoundEstimate,
    )?;
    Ok(BoundPair {
        ate_bound,
        tau_bound,
        assumption,
    })
}

fn bounds_a_with(strata: &StrataEstimates, tau: &TauInversion, params: &AssumptionParams) -> Result<BoundPair> {
    params.validate()?;
    pair(
        strata.b_hat(params.xi0, 0.0),
        strata.b_hat(0.0, params.xi1),
        tau,
        Assumption::A,
    )
}

fn bounds_b_with(strata: &StrataEstimates, tau: &TauInversion, params: &AssumptionParams) -> Result<BoundPair> {
    params.validate()?;
    let c0 = (strata.mu11_1 - params.delta11).min(strata.mu00_0 + params.delta_y0);
    let c1 = strata.mu11_1 + strata.mu00_0 - params.delta_trt;
    pair(
        strata.b_hat(c0, strata.mu00_0 + params.delta00),
        strata.b_hat(0.0, c1),
        tau,
        Assumption::B,
    )
}

pub fn bounds_a(
    ds: &ObservationalDataset,
    strata: &StrataEstimates,
    propensity: &LogisticFit,
    params: &AssumptionParams,
) -> Result<BoundPair> {
    bounds_a_with(strata, &TauInversion::new(ds, propensity)?, params)
}

pub fn bounds_b(
    ds: &ObservationalDataset,
    strata: &StrataEstimates,
    propensity: &LogisticFit,
    params: &AssumptionParams,
) -> Result<BoundPair> {
    bounds_b_with(strata, &TauInversion::new(ds, propensity)?, params)
}

/// Observed-data models conditional on covariates:
/// `logit P(A=1|Z,V) = t0 + t1 Z + t' V` and
/// `E(Y|Z,A,V) = k0 + k1 Z + k2 A + k3 A Z + k' V`.
///
/// Covariates aliased with the other columns (e.g. constant ones) are dropped
/// and listed in `dropped_covariates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalStrataModel {
    pub outcome_fit: LinearFit,
    pub stratum_fit: LogisticFit,
    /// Indices into the dataset's covariate columns that entered both models.
    pub covariates_used: Vec<usize>,
    pub dropped_covariates: Vec<String>,
}

fn outcome_row(z: f64, a: f64, v: &[f64], used: &[usize], row: &mut [f64]) {
    row[0] = 1.0;
    row[1] = z;
    row[2] = a;
    row[3] = a * z;
    for (k, &j) in used.iter().enumerate() {
        row[4 + k] = v[j];
    }
}

fn stratum_row(z: f64, v: &[f64], used: &[usize], row: &mut [f64]) {
    row[0] = 1.0;
    row[1] = z;
    for (k, &j) in used.iter().enumerate() {
        row[2 + k] = v[j];
    }
}

fn outcome_design(ds: &ObservationalDataset, used: &[usize]) -> DMatrix<f64> {
    glm::design(ds.n(), 4 + used.len(), |i, row| {
        outcome_row(
            f64::from(ds.z()[i]),
            f64::from(ds.a()[i]),
            ds.v_row(i),
            used,
            row,
        )
    })
}

fn stratum_design(ds: &ObservationalDataset, used: &[usize]) -> DMatrix<f64> {
    glm::design(ds.n(), 2 + used.len(), |i, row| {
        stratum_row(f64::from(ds.z()[i]), ds.v_row(i), used, row)
    })
}

pub fn fit_conditional_models(ds: &ObservationalDataset) -> Result<ConditionalStrataModel> {
    if ds.p() == 0 {
        return Err(Error::Precondition(
            "covariate-conditional models need at least one covariate".into(),
        ));
    }
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.p() {
        let mut trial = used.clone();
        trial.push(j);
        let full_outcome = glm::column_rank(&outcome_design(ds, &trial)) == 4 + trial.len();
        let full_stratum = glm::column_rank(&stratum_design(ds, &trial)) == 2 + trial.len();
        if full_outcome && full_stratum {
            used = trial;
        } else {
            dropped.push(ds.column_names()[j].clone());
        }
    }
    let a: Vec<f64> = ds.a().iter().map(|&x| f64::from(x)).collect();
    let stratum_fit = glm::fit_logistic(&a, &stratum_design(ds, &used))?;
    let outcome_fit = glm::fit_linear(ds.y(), &outcome_design(ds, &used))?;
    Ok(ConditionalStrataModel {
        outcome_fit,
        stratum_fit,
        covariates_used: used,
        dropped_covariates: dropped,
    })
}

/// Per-record plug-ins: `E{Y(1)|P11,V_i}`, `E{Y(0)|P00,V_i}`, `P(P11|V_i)`, `P(P00|V_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTerms {
    pub mu11_1: Vec<f64>,
    pub mu00_0: Vec<f64>,
    pub p11: Vec<f64>,
    pub p00: Vec<f64>,
    /// Covariates the fitted models left out.
    pub dropped_covariates: Vec<String>,
}

impl ConditionalTerms {
    pub fn new(ds: &ObservationalDataset, model: &ConditionalStrataModel) -> Result<Self> {
        let used = &model.covariates_used;
        let mut orow = vec![0.0; 4 + used.len()];
        let mut srow = vec![0.0; 2 + used.len()];
        let n = ds.n();
        let mut terms = Self {
            mu11_1: Vec::with_capacity(n),
            mu00_0: Vec::with_capacity(n),
            p11: Vec::with_capacity(n),
            p00: Vec::with_capacity(n),
            dropped_covariates: model.dropped_covariates.clone(),
        };
        for i in 0..n {
            let v = ds.v_row(i);
            outcome_row(0.0, 1.0, v, used, &mut orow);
            terms.mu11_1.push(glm::predict_linear(&model.outcome_fit, &orow)?);
            outcome_row(1.0, 0.0, v, used, &mut orow);
            terms.mu00_0.push(glm::predict_linear(&model.outcome_fit, &orow)?);
            stratum_row(0.0, v, used, &mut srow);
            terms.p11.push(glm::predict_prob(&model.stratum_fit, &srow)?);
            stratum_row(1.0, v, used, &mut srow);
            terms.p00.push(1.0 - glm::predict_prob(&model.stratum_fit, &srow)?);
        }
        Ok(terms)
    }

    /// Empirical averages of `b_V(c0(V), c2(V))` and `b_V(0, c1(V))`, summed in record order.
    pub fn integrated_limits(&self, params: &AssumptionParams) -> (f64, f64) {
        let n = self.mu11_1.len() as f64;
        let (mut lower, mut upper) = (0.0, 0.0);
        for i in 0..self.mu11_1.len() {
            let (m11, m00, p11, p00) = (self.mu11_1[i], self.mu00_0[i], self.p11[i], self.p00[i]);
            let c0 = (m11 - params.delta11).min(m00 + params.delta_y0);
            let c1 = m11 + m00 - params.delta_trt;
            let c2 = m00 + params.delta00;
            lower += (m11 - c0) * p11 + (c2 - m00) * p00;
            upper += m11 * p11 + (c1 - m00) * p00;
        }
        (lower / n, upper / n)
    }
}

fn bounds_bprime_with(
    strata: &StrataEstimates,
    tau: &TauInversion,
    terms: &ConditionalTerms,
    params: &AssumptionParams,
) -> Result<BoundPair> {
    params.validate()?;
    let (lower, upper) = terms.integrated_limits(params);
    let identified = strata.pi01 * strata.beta_iv;
    pair(identified + lower, identified + upper, tau, Assumption::Bprime)
}

pub fn bounds_bprime(
    ds: &ObservationalDataset,
    strata: &StrataEstimates,
    propensity: &LogisticFit,
    model: &ConditionalStrataModel,
    params: &AssumptionParams,
) -> Result<BoundPair> {
    let terms = ConditionalTerms::new(ds, model)?;
    bounds_bprime_with(strata, &TauInversion::new(ds, propensity)?, &terms, params)
}

/// Everything fitted once per dataset so bounds can be evaluated for many
/// parameter values.
#[derive(Debug, Clone)]
pub struct BoundContext {
    pub strata: StrataEstimates,
    pub propensity: LogisticFit,
    pub tau: TauInversion,
    pub conditional: Option<ConditionalTerms>,
}

impl BoundContext {
    pub fn fit(ds: &ObservationalDataset, with_covariate_models: bool) -> Result<Self> {
        let strata = estimate_strata(ds)?;
        let propensity = estimators::fit_propensity(ds)?;
        let tau = TauInversion::new(ds, &propensity)?;
        let conditional = if with_covariate_models {
            let model = fit_conditional_models(ds)?;
            Some(ConditionalTerms::new(ds, &model)?)
        } else {
            None
        };
        Ok(Self {
            strata,
            propensity,
            tau,
            conditional,
        })
    }

    pub fn bounds(&self, assumption: Assumption, params: &AssumptionParams) -> Result<BoundPair> {
        match assumption {
            Assumption::A => bounds_a_with(&self.strata, &self.tau, params),
            Assumption::B => bounds_b_with(&self.strata, &self.tau, params),
            Assumption::Bprime => {
                let terms = self.conditional.as_ref().ok_or_else(|| {
                    Error::Precondition("context was fitted without covariate models".into())
                })?;
                bounds_bprime_with(&self.strata, &self.tau, terms, params)
            }
        }
    }
}

/// Fits what `assumption` needs on `ds` and returns its bound pair.
pub fn compute_bounds(
    ds: &ObservationalDataset,
    assumption: Assumption,
    params: &AssumptionParams,
) -> Result<BoundPair> {
    BoundContext::fit(ds, assumption.needs_covariate_models())?.bounds(assumption, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_one_counts() -> ObservationalDataset {
        let (mut y, mut a, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..108 {
            a.push(u8::from(i < 20));
            z.push(0);
            y.push(200.0 + (i % 7) as f64);
        }
        for i in 0..93 {
            a.push(u8::from(i < 26));
            z.push(1);
            y.push(220.0 + (i % 5) as f64);
        }
        ObservationalDataset::new(y, a, z, vec![], vec![]).unwrap()
    }

    #[test]
    fn table_one_stratum_proportions() {
        let s = estimate_strata(&table_one_counts()).unwrap();
        assert!((s.pi11 - 20.0 / 108.0).abs() < 1e-15);
        assert!((s.pi00 - (1.0 - 26.0 / 93.0)).abs() < 1e-15);
        assert!((s.pi11 - 0.1852).abs() < 1e-4);
        assert!((s.pi00 - 0.7204).abs() < 1e-4);
        assert!((s.pi01 - 0.0944).abs() < 1e-4);
        assert!((s.pi11 + s.pi00 + s.pi01 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_compliance_has_empty_always_taker_cell() {
        let ds = ObservationalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0, 0, 1, 1],
            vec![0, 0, 1, 1],
            vec![],
            vec![],
        )
        .unwrap();
        assert!(matches!(estimate_strata(&ds), Err(Error::EmptyCell { a: 1, z: 0 })));
    }

    #[test]
    fn reversed_instrument_is_weak() {
        // treatment more common at Z=0 than Z=1
        let ds = ObservationalDataset::new(
            vec![1.0; 8],
            vec![1, 1, 1, 0, 1, 0, 0, 0],
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![],
            vec![],
        )
        .unwrap();
        assert!(matches!(estimate_strata(&ds), Err(Error::WeakInstrument { .. })));
    }

    #[test]
    fn b_hat_collapses_to_iv_for_pure_compliers() {
        let s = StrataEstimates {
            pi11: 0.0,
            pi00: 0.0,
            pi01: 1.0,
            mu11_1: 10.0,
            mu00_0: 20.0,
            beta_iv: 42.0,
        };
        assert_eq!(s.b_hat(123.0, -77.0), 42.0);
    }

    #[test]
    fn b_hat_width_identity() {
        let s = estimate_strata(&table_one_counts()).unwrap();
        let width = s.b_hat(0.0, 500.0) - s.b_hat(500.0, 0.0);
        assert!((width - (s.pi11 * 500.0 + s.pi00 * 500.0)).abs() < 1e-10);
        // slopes by finite differencing
        assert!(((s.b_hat(3.0, 0.0) - s.b_hat(1.0, 0.0)) / 2.0 + s.pi11).abs() < 1e-12);
        assert!(((s.b_hat(0.0, 3.0) - s.b_hat(0.0, 1.0)) / 2.0 - s.pi00).abs() < 1e-12);
    }

    #[test]
    fn assumption_b_symmetric_plug_in() {
        let s = StrataEstimates {
            pi11: 0.2,
            pi00: 0.5,
            pi01: 0.3,
            mu11_1: 250.0,
            mu00_0: 250.0,
            beta_iv: 80.0,
        };
        let ds = table_one_counts();
        let tau = TauInversion::from_scores(&ds, &vec![0.23; ds.n()]).unwrap();
        let bp = bounds_b_with(&s, &tau, &AssumptionParams::default()).unwrap();
        assert_eq!(bp.ate_bound.lower, s.b_hat(250.0, 250.0));
        assert_eq!(bp.ate_bound.upper, s.b_hat(0.0, 500.0));
        assert_eq!(bp.tau_bound.lower, tau.eval(bp.ate_bound.upper).tau);
        assert_eq!(bp.tau_bound.upper, tau.eval(bp.ate_bound.lower).tau);
    }

    #[test]
    fn inconsistent_deltas_are_reported() {
        let ds = table_one_counts();
        let params = AssumptionParams {
            delta00: 1e4,
            ..Default::default()
        };
        assert!(matches!(
            compute_bounds(&ds, Assumption::B, &params),
            Err(Error::InvalidBound { .. })
        ));
    }

    #[test]
    fn zero_limits_collapse_assumption_a() {
        let ds = table_one_counts();
        let bp = compute_bounds(&ds, Assumption::A, &AssumptionParams::default()).unwrap();
        assert_eq!(bp.ate_bound.width(), 0.0);
        assert_eq!(bp.tau_bound.width(), 0.0);
    }

    #[test]
    fn conditional_models_need_covariates() {
        assert!(matches!(
            fit_conditional_models(&table_one_counts()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn assumption_round_trips_through_text() {
        for a in [Assumption::A, Assumption::B, Assumption::Bprime] {
            assert_eq!(a.to_string().parse::<Assumption>().unwrap(), a);
        }
        assert!("C".parse::<Assumption>().is_err());
    }
}
