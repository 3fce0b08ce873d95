//! Point estimators of the treatment effect: as-treated contrast, inverse
//! probability weighting, IPW with a sensitivity correction for unmeasured
//! confounding, and the Wald-ratio instrumental-variable estimator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::glm::{self, LogisticFit};

/// Relative threshold below which a ratio denominator counts as zero.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "AT")]
    AsTreated,
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "MIPW")]
    ModifiedIpw,
    #[serde(rename = "IV")]
    InstrumentalVariable,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::AsTreated => "AT",
            Method::Ipw => "IPW",
            Method::ModifiedIpw => "MIPW",
            Method::InstrumentalVariable => "IV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    /// Companion intercept: the untreated mean for AT/IPW/MIPW, the `Z = 0`
    /// outcome mean minus `value` times the `Z = 0` treatment rate for IV.
    pub intercept: f64,
    pub se: Option<f64>,
    pub method: Method,
}

/// Sensitivity parameter: how much higher the treated's potential outcomes
/// are than the untreated's, given the measured covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityValue {
    pub tau: f64,
}

/// `W1_i = A_i / e_i + (1 - A_i) / (1 - e_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IpwWeights {
    pub w1: Vec<f64>,
}

impl IpwWeights {
    pub fn new(a: &[u8], scores: &[f64]) -> Self {
        let w1 = a
            .iter()
            .zip(scores)
            .map(|(&ai, &e)| if ai == 1 { 1.0 / e } else { 1.0 / (1.0 - e) })
            .collect();
        Self { w1 }
    }
}

/// Design `(1, V)` for the propensity model.
pub fn propensity_design(ds: &ObservationalDataset) -> DMatrix<f64> {
    glm::design(ds.n(), ds.p() + 1, |i, row| {
        row[0] = 1.0;
        row[1..].copy_from_slice(ds.v_row(i));
    })
}

/// Logistic regression of `A` on `(1, V)`. A covariate aliased with the
/// columns before it (a constant one, say) is left out of the fit and gets a
/// zero coefficient.
pub fn fit_propensity(ds: &ObservationalDataset) -> Result<LogisticFit> {
    let a: Vec<f64> = ds.a().iter().map(|&x| f64::from(x)).collect();
    let full = propensity_design(ds);
    let mut keep = vec![0];
    for j in 1..=ds.p() {
        let mut trial = keep.clone();
        trial.push(j);
        if glm::column_rank(&full.select_columns(&trial)) == trial.len() {
            keep = trial;
        }
    }
    if keep.len() == full.ncols() {
        return glm::fit_logistic(&a, &full);
    }
    let mut fit = glm::fit_logistic(&a, &full.select_columns(&keep))?;
    let mut coef = vec![0.0; full.ncols()];
    for (&c, &j) in fit.coef.iter().zip(&keep) {
        coef[j] = c;
    }
    fit.coef = coef;
    Ok(fit)
}

/// Clamped fitted propensity `e(V_i)` for every record.
pub fn propensity_scores(ds: &ObservationalDataset, propensity: &LogisticFit) -> Result<Vec<f64>> {
    let mut row = vec![1.0; ds.p() + 1];
    (0..ds.n())
        .map(|i| {
            row[1..].copy_from_slice(ds.v_row(i));
            glm::predict_prob(propensity, &row)
        })
        .collect()
}

fn arm_mean(ds: &ObservationalDataset, arm: u8) -> Result<(f64, usize)> {
    let (sum, n) = ds
        .y()
        .iter()
        .zip(ds.a())
        .filter(|(_, &a)| a == arm)
        .fold((0.0, 0usize), |(s, n), (&y, _)| (s + y, n + 1));
    if n == 0 {
        return Err(Error::EmptyArm { arm });
    }
    Ok((sum / n as f64, n))
}

pub fn at_estimate(ds: &ObservationalDataset) -> Result<PointEstimate> {
    let (m1, n1) = arm_mean(ds, 1)?;
    let (m0, n0) = arm_mean(ds, 0)?;
    let var = |arm: u8, m: f64, n: usize| -> Option<f64> {
        (n > 1).then(|| {
            ds.y()
                .iter()
                .zip(ds.a())
                .filter(|(_, &a)| a == arm)
                .map(|(&y, _)| (y - m) * (y - m))
                .sum::<f64>()
                / (n - 1) as f64
        })
    };
    let se = match (var(1, m1, n1), var(0, m0, n0)) {
        (Some(v1), Some(v0)) => Some((v1 / n1 as f64 + v0 / n0 as f64).sqrt()),
        _ => None,
    };
    Ok(PointEstimate {
        value: m1 - m0,
        intercept: m0,
        se,
        method: Method::AsTreated,
    })
}

/// Solves the weighted estimating equations `sum (1, A_i)' W1_i (y_i - b - A_i beta) = 0`
/// in closed form: weighted arm means of `y`.
fn weighted_contrast(a: &[u8], weights: &IpwWeights, y: impl Fn(usize) -> f64) -> Result<(f64, f64)> {
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [0usize; 2];
    for (i, (&ai, &w)) in a.iter().zip(&weights.w1).enumerate() {
        let arm = usize::from(ai);
        sums[arm][0] += w * y(i);
        sums[arm][1] += w;
        counts[arm] += 1;
    }
    for arm in [0u8, 1] {
        let k = usize::from(arm);
        if counts[k] == 0 {
            return Err(Error::EmptyArm { arm });
        }
        if sums[k][1] <= 0.0 || !sums[k][1].is_finite() {
            return Err(Error::DegenerateWeights { arm });
        }
    }
    let m0 = sums[0][0] / sums[0][1];
    let m1 = sums[1][0] / sums[1][1];
    Ok((m0, m1 - m0))
}

pub fn ipw_from_scores(ds: &ObservationalDataset, scores: &[f64]) -> Result<PointEstimate> {
    let weights = IpwWeights::new(ds.a(), scores);
    let (intercept, value) = weighted_contrast(ds.a(), &weights, |i| ds.y()[i])?;
    Ok(PointEstimate {
        value,
        intercept,
        se: None,
        method: Method::Ipw,
    })
}

pub fn ipw_estimate(ds: &ObservationalDataset, propensity: &LogisticFit) -> Result<PointEstimate> {
    ipw_from_scores(ds, &propensity_scores(ds, propensity)?)
}

/// IPW applied to the corrected outcome `Y* = Y - tau (A - e(V))`.
pub fn mipw_from_scores(
    ds: &ObservationalDataset,
    scores: &[f64],
    tau: SensitivityValue,
) -> Result<PointEstimate> {
    let weights = IpwWeights::new(ds.a(), scores);
    let (y, a) = (ds.y(), ds.a());
    let (intercept, value) = weighted_contrast(a, &weights, |i| {
        y[i] - tau.tau * (f64::from(a[i]) - scores[i])
    })?;
    Ok(PointEstimate {
        value,
        intercept,
        se: None,
        method: Method::ModifiedIpw,
    })
}

pub fn mipw_estimate(
    ds: &ObservationalDataset,
    propensity: &LogisticFit,
    tau: SensitivityValue,
) -> Result<PointEstimate> {
    mipw_from_scores(ds, &propensity_scores(ds, propensity)?, tau)
}

/// Sample averages needed to invert the modified IPW equations for `tau`
/// at any candidate ATE. With `D = A - e(V)`:
///
/// ```text
/// tau(beta) = [ mean(W A) mean(W (Y - beta A)) - mean(W) mean(W A (Y - beta A)) ]
///           / [ mean(W A) mean(W D)            - mean(W) mean(W A D) ]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauInversion {
    mean_w: f64,
    mean_wa: f64,
    mean_wy: f64,
    mean_way: f64,
    denominator: f64,
}

impl TauInversion {
    // One pass reads five parallel columns by record index.
    #[allow(clippy::needless_range_loop)]
    pub fn from_scores(ds: &ObservationalDataset, scores: &[f64]) -> Result<Self> {
        let weights = IpwWeights::new(ds.a(), scores);
        let n = ds.n() as f64;
        let (mut w, mut wa, mut wy, mut way, mut wd, mut wad) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut abs_wd, mut abs_wad) = (0.0, 0.0);
        for i in 0..ds.n() {
            let wi = weights.w1[i];
            let ai = f64::from(ds.a()[i]);
            let yi = ds.y()[i];
            let di = ai - scores[i];
            w += wi;
            wa += wi * ai;
            wy += wi * yi;
            way += wi * ai * yi;
            wd += wi * di;
            wad += wi * ai * di;
            abs_wd += (wi * di).abs();
            abs_wad += (wi * ai * di).abs();
        }
        let (w, wa, wy, way, wd, wad) = (w / n, wa / n, wy / n, way / n, wd / n, wad / n);
        let denominator = wa * wd - w * wad;
        let scale = (wa * abs_wd / n).abs() + (w * abs_wad / n).abs();
        // Written as a negated `>=` so a NaN denominator is also rejected.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let singular = !(denominator.abs() >= SINGULAR_TOLERANCE * scale) || scale == 0.0;
        if singular {
            return Err(Error::SingularDenominator { denominator });
        }
        Ok(Self {
            mean_w: w,
            mean_wa: wa,
            mean_wy: wy,
            mean_way: way,
            denominator,
        })
    }

    pub fn new(ds: &ObservationalDataset, propensity: &LogisticFit) -> Result<Self> {
        Self::from_scores(ds, &propensity_scores(ds, propensity)?)
    }

    pub fn eval(&self, beta_ate: f64) -> SensitivityValue {
        // A is binary, so W A (Y - beta A) = W A Y - beta W A.
        let numerator = self.mean_wa * (self.mean_wy - beta_ate * self.mean_wa)
            - self.mean_w * (self.mean_way - beta_ate * self.mean_wa);
        SensitivityValue {
            tau: numerator / self.denominator,
        }
    }

    /// `d tau / d beta`; strictly negative when both treatment arms are present.
    pub fn slope(&self) -> f64 {
        self.mean_wa * (self.mean_w - self.mean_wa) / self.denominator
    }
}

pub fn tau_hat(
    ds: &ObservationalDataset,
    propensity: &LogisticFit,
    beta_ate: f64,
) -> Result<SensitivityValue> {
    Ok(TauInversion::new(ds, propensity)?.eval(beta_ate))
}

/// Wald ratio `{mean(Y|Z=1) - mean(Y|Z=0)} / {mean(A|Z=1) - mean(A|Z=0)}` with a
/// delta-method standard error (arms independent, within-arm covariance kept).
pub fn iv_estimate(ds: &ObservationalDataset) -> Result<PointEstimate> {
    let mut stats = [(0.0f64, 0.0f64, 0usize); 2];
    for i in 0..ds.n() {
        let s = &mut stats[usize::from(ds.z()[i])];
        s.0 += ds.y()[i];
        s.1 += f64::from(ds.a()[i]);
        s.2 += 1;
    }
    for arm in [0u8, 1] {
        if stats[usize::from(arm)].2 == 0 {
            return Err(Error::EmptyInstrumentCell { arm });
        }
    }
    let means = stats.map(|(sy, sa, n)| (sy / n as f64, sa / n as f64, n));
    let numerator = means[1].0 - means[0].0;
    let denominator = means[1].1 - means[0].1;
    if denominator.abs() < SINGULAR_TOLERANCE {
        return Err(Error::WeakInstrument {
            difference: denominator,
        });
    }
    let value = numerator / denominator;

    // Var(beta) ~ sum_z Var_z(Y - beta A) / n_z / D^2
    let mut var = 0.0;
    let mut se_defined = true;
    for (arm, &(my, ma, n)) in means.iter().enumerate() {
        if n < 2 {
            se_defined = false;
            break;
        }
        let centre = my - value * ma;
        let ss: f64 = (0..ds.n())
            .filter(|&i| usize::from(ds.z()[i]) == arm)
            .map(|i| {
                let r = ds.y()[i] - value * f64::from(ds.a()[i]) - centre;
                r * r
            })
            .sum();
        var += ss / (n - 1) as f64 / n as f64;
    }
    Ok(PointEstimate {
        value,
        intercept: means[0].0 - value * means[0].1,
        se: se_defined.then(|| var.sqrt() / denominator.abs()),
        method: Method::InstrumentalVariable,
    })
}
