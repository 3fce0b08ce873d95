//! Synthetic data with known ground truth.
//!
//! [`generate_strata`] draws compliance classes whose probabilities depend on
//! the covariates through a cumulative logit, with offsets tuned so the
//! marginal class shares equal `pi`. The instrument is independent of
//! everything, and the outcome depends only on class and treatment.
//!
//! [`generate_confounded`] has no working instrument. A hidden binary shift
//! couples treatment to the outcome so that, given `V`, treated and untreated
//! records differ in their potential outcomes by a fixed `tau`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{AssumptionParams, ObservationalDataset};
use crate::error::{Error, Result};
use crate::glm::{expit, logit};

const OFFSET_TOLERANCE: f64 = 1e-10;
const SIMPSON_INTERVALS: usize = 4000;

/// Mean potential outcomes `[Y(0), Y(1)]` per compliance class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumMeans {
    pub never_taker: [f64; 2],
    pub complier: [f64; 2],
    pub always_taker: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataDGP {
    /// `P(Z = 1)`.
    pub pz: f64,
    /// Class shares `(never-takers, compliers, always-takers)`.
    pub pi: [f64; 3],
    pub stratum_means: StratumMeans,
    /// Effect of `V` on the class log-odds; its length sets the covariate count.
    pub covariate_effect: Vec<f64>,
    pub sigma_y: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for StrataDGP {
    fn default() -> Self {
        Self {
            pz: 0.5,
            pi: [0.5, 0.3, 0.2],
            stratum_means: StratumMeans {
                never_taker: [230.0, 280.0],
                complier: [200.0, 300.0],
                always_taker: [150.0, 260.0],
            },
            covariate_effect: vec![0.8, -0.5],
            sigma_y: 60.0,
            n: 300,
            seed: 20240101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub true_ate: f64,
    pub true_late: f64,
    /// `None` when the contrast is not constant in `V`.
    pub true_tau: Option<f64>,
    /// `(never-takers, compliers, always-takers)`; `None` without classes.
    pub true_pi: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum_means: Option<StratumMeans>,
}

impl StrataDGP {
    pub fn p(&self) -> usize {
        self.covariate_effect.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.pz > 0.0 && self.pz < 1.0) {
            return bad(format!("pz must lie in (0, 1), got {}", self.pz));
        }
        if self.pi.iter().any(|p| !(0.0..=1.0).contains(p)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("pi must be probabilities summing to 1, got {:?}", self.pi));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return bad(format!("sigma_y must be positive, got {}", self.sigma_y));
        }
        let m = &self.stratum_means;
        if [m.never_taker, m.complier, m.always_taker].iter().flatten().any(|x| !x.is_finite())
            || self.covariate_effect.iter().any(|x| !x.is_finite())
        {
            return bad("stratum means and covariate effects must be finite".into());
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        Ok(())
    }

    pub fn truth(&self) -> TruthManifest {
        let m = &self.stratum_means;
        let [p00, p01, p11] = self.pi;
        TruthManifest {
            true_ate: p00 * (m.never_taker[1] - m.never_taker[0])
                + p01 * (m.complier[1] - m.complier[0])
                + p11 * (m.always_taker[1] - m.always_taker[0]),
            true_late: m.complier[1] - m.complier[0],
            true_tau: None,
            true_pi: Some(self.pi),
            stratum_means: Some(*m),
        }
    }

    /// Population value of the assumption-B bound on the ATE.
    pub fn true_bound_b(&self, params: &AssumptionParams) -> (f64, f64) {
        let m = &self.stratum_means;
        let [p00, p01, p11] = self.pi;
        let late = m.complier[1] - m.complier[0];
        let (mu11_1, mu00_0) = (m.always_taker[1], m.never_taker[0]);
        let b = |mu11_0: f64, mu00_1: f64| p01 * late + p11 * (mu11_1 - mu11_0) + p00 * (mu00_1 - mu00_0);
        let c0 = (mu11_1 - params.delta11).min(mu00_0 + params.delta_y0);
        let c1 = mu11_1 + mu00_0 - params.delta_trt;
        (b(c0, mu00_0 + params.delta00), b(0.0, c1))
    }

    /// Offsets `(a1, a2)` of the cumulative logit: `P(not never-taker | s) =
    /// expit(a1 + s)` and `P(always-taker | s) = expit(a2 + s)`, with `s` the
    /// covariate index.
    pub fn class_offsets(&self) -> (f64, f64) {
        let sd = self.covariate_effect.iter().map(|b| b * b).sum::<f64>().sqrt();
        (
            solve_offset(1.0 - self.pi[0], sd),
            solve_offset(self.pi[2], sd),
        )
    }
}

/// `E[expit(a + s)]` for `s ~ N(0, sd^2)` by Simpson's rule over +-10 sd.
pub fn mean_expit(a: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return expit(a);
    }
    let h = 20.0 / SIMPSON_INTERVALS as f64;
    let f = |u: f64| expit(a + sd * u) * (-0.5 * u * u).exp();
    let mut s = f(-10.0) + f(10.0);
    for i in 1..SIMPSON_INTERVALS {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(-10.0 + i as f64 * h);
    }
    s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

fn solve_offset(target: f64, sd: f64) -> f64 {
    if target <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if target >= 1.0 {
        return f64::INFINITY;
    }
    if sd == 0.0 {
        return logit(target);
    }
    let (mut lo, mut hi) = (-10.0, 10.0);
    while mean_expit(lo, sd) > target {
        lo *= 2.0;
    }
    while mean_expit(hi, sd) < target {
        hi *= 2.0;
    }
    while hi - lo > OFFSET_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mean_expit(mid, sd) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("v{j}")).collect()
}

/// Draws `dgp.n` records. Per record the stream order is: `V`, class uniform,
/// `Z` uniform, outcome noise.
pub fn generate_strata(dgp: &StrataDGP) -> Result<(ObservationalDataset, TruthManifest)> {
    dgp.validate()?;
    let p = dgp.p();
    let (a1, a2) = dgp.class_offsets();
    let m = &dgp.stratum_means;
    let mut rng = ChaCha20Rng::seed_from_u64(dgp.seed);
    let (mut y, mut a, mut z, mut v) = (
        Vec::with_capacity(dgp.n),
        Vec::with_capacity(dgp.n),
        Vec::with_capacity(dgp.n),
        Vec::with_capacity(dgp.n * p),
    );
    for _ in 0..dgp.n {
        let mut s = 0.0;
        for b in &dgp.covariate_effect {
            let x: f64 = rng.sample(StandardNormal);
            s += b * x;
            v.push(x);
        }
        let u: f64 = rng.random();
        let zi = u8::from(rng.random::<f64>() < dgp.pz);
        let (means, ai) = if u < expit(a2 + s) {
            (m.always_taker, 1)
        } else if u < expit(a1 + s) {
            (m.complier, zi)
        } else {
            (m.never_taker, 0)
        };
        let noise: f64 = rng.sample(StandardNormal);
        y.push(means[usize::from(ai)] + dgp.sigma_y * noise);
        a.push(ai);
        z.push(zi);
    }
    let ds = ObservationalDataset::new(y, a, z, v, covariate_names(p))?;
    Ok((ds, dgp.truth()))
}

/// Hidden-shift magnitude and baseline prevalence of the confounded design.
pub const CONFOUNDED_SHIFT: f64 = 200.0;
pub const CONFOUNDED_PREVALENCE: f64 = 0.23;
const CONFOUNDED_SLOPE: f64 = 0.4;
const CONFOUNDED_INTERCEPT: f64 = 200.0;
const CONFOUNDED_COVARIATE_EFFECT: f64 = 30.0;
const CONFOUNDED_NOISE: f64 = 50.0;

fn confounded_propensity(sum_v: f64) -> f64 {
    expit(logit(CONFOUNDED_PREVALENCE) + CONFOUNDED_SLOPE * sum_v)
}

/// Largest `|tau|` the hidden-shift construction supports with `p` covariates.
pub fn confounded_tau_limit(p: usize) -> f64 {
    let worst = [-(p as f64), p as f64]
        .iter()
        .map(|&s| {
            let e = confounded_propensity(s);
            e.max(1.0 - e)
        })
        .fold(0.0, f64::max);
    CONFOUNDED_SHIFT / (2.0 * worst)
}

/// `V ~ U(-1, 1)^p`, `e(V) = expit(logit(0.23) + 0.4 sum V)`, hidden
/// `U ~ Bernoulli(1/2)` with `P(A = 1 | U, V) = e(V) + (U - 1/2) d(V)`, and
/// `Y(a) = 200 + beta_ate a + 30 sum V + 200 (U - 1/2) + N(0, 50^2)`.
/// `d(V) = 4 tau e (1 - e) / 200` makes the treated/untreated contrast equal
/// `tau` at every `V`. `Z ~ Bernoulli(1/2)` is unrelated to the rest.
pub fn generate_confounded(
    n: usize,
    seed: u64,
    tau_target: f64,
    beta_ate: f64,
    covariate_dim: usize,
) -> Result<(ObservationalDataset, TruthManifest)> {
    if covariate_dim == 0 {
        return Err(Error::InvalidParameter("covariate_dim must be >= 1".into()));
    }
    if n == 0 || !tau_target.is_finite() || !beta_ate.is_finite() {
        return Err(Error::InvalidParameter("need n > 0 and finite tau_target, beta_ate".into()));
    }
    let limit = confounded_tau_limit(covariate_dim);
    if tau_target.abs() > limit {
        return Err(Error::InfeasibleTau {
            requested: tau_target,
            bound: limit,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut y, mut a, mut z, mut v) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n * covariate_dim),
    );
    for _ in 0..n {
        let mut sum_v = 0.0;
        for _ in 0..covariate_dim {
            let x = rng.random_range(-1.0..1.0);
            sum_v += x;
            v.push(x);
        }
        let e = confounded_propensity(sum_v);
        let d = 4.0 * tau_target * e * (1.0 - e) / CONFOUNDED_SHIFT;
        let u = if rng.random::<bool>() { 0.5 } else { -0.5 };
        let ai = u8::from(rng.random::<f64>() < e + u * d);
        let zi = u8::from(rng.random::<bool>());
        let noise: f64 = rng.sample(StandardNormal);
        y.push(
            CONFOUNDED_INTERCEPT
                + beta_ate * f64::from(ai)
                + CONFOUNDED_COVARIATE_EFFECT * sum_v
                + CONFOUNDED_SHIFT * u
                + CONFOUNDED_NOISE * noise,
        );
        a.push(ai);
        z.push(zi);
    }
    let ds = ObservationalDataset::new(y, a, z, v, covariate_names(covariate_dim))?;
    Ok((
        ds,
        TruthManifest {
            true_ate: beta_ate,
            true_late: beta_ate,
            true_tau: Some(tau_target),
            true_pi: None,
            stratum_means: None,
        },
    ))
}

pub fn load_dgp(path: impl AsRef<Path>) -> Result<StrataDGP> {
    let dgp: StrataDGP = serde_json::from_reader(std::fs::File::open(path)?)?;
    dgp.validate()?;
    Ok(dgp)
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<TruthManifest> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}
