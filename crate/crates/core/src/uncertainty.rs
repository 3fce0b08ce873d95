//! Uncertainty regions for estimated bounds.
//!
//! Standard errors of the bound endpoints come from a bootstrap that resamples
//! within each instrument arm, so every replicate keeps the original arm
//! sizes. Replicate `k` draws from its own ChaCha20 stream (`seed`, stream
//! `k`), which makes an ensemble independent of scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{AssumptionParams, Interval, IntervalKind, ObservationalDataset};
use crate::error::{Error, Result};
use crate::strata::{self, Assumption};

/// Identifier recorded in reports next to the seed.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+stream=replicate";
/// Largest tolerated fraction of failed replicates.
pub const FAILURE_CEILING: f64 = 0.05;

pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Row indices for one stratified resample: `Z = 0` draws first, then `Z = 1`.
pub fn stratified_indices(arms: &[Vec<usize>; 2], rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(arms[0].len() + arms[1].len());
    for arm in arms {
        for _ in 0..arm.len() {
            out.push(arm[rng.random_range(0..arm.len())]);
        }
    }
    out
}

/// Evaluates `statistic` on `k` stratified resamples, in parallel, returning
/// results ordered by replicate index.
pub fn run_replicates<T, F>(ds: &ObservationalDataset, k: usize, seed: u64, statistic: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(&ObservationalDataset) -> Result<T> + Sync,
{
    let arms = [ds.instrument_arm(0), ds.instrument_arm(1)];
    (0..k)
        .into_par_iter()
        .map(|r| {
            let idx = stratified_indices(&arms, &mut replicate_rng(seed, r));
            statistic(&ds.select(&idx)?)
        })
        .collect()
}

pub fn check_failures(failures: usize, replicates: usize) -> Result<()> {
    if failures as f64 > FAILURE_CEILING * replicates as f64 {
        return Err(Error::TooManyFailures {
            failures,
            replicates,
        });
    }
    Ok(())
}

/// `(L*, U*)` pairs from successful replicates, tagged with the replicate index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointEnsemble {
    pub replicate: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EndpointEnsemble {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Sample standard deviations (denominator `K - 1`) of the two endpoints.
    pub fn standard_errors(&self) -> Result<(f64, f64)> {
        if self.len() < 2 {
            return Err(Error::InsufficientReplicates {
                available: self.len(),
                required: 2,
            });
        }
        Ok((sample_sd(&self.lower), sample_sd(&self.upper)))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["replicate", "L_star", "U_star"])?;
        for i in 0..self.len() {
            wtr.write_record([
                self.replicate[i].to_string(),
                self.lower[i].to_string(),
                self.upper[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateBounds {
    pub replicate: usize,
    pub ate_lower: f64,
    pub ate_upper: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub seed: u64,
    pub k: usize,
    pub failures: usize,
    pub rng: String,
    pub replicates: Vec<ReplicateBounds>,
}

impl BootstrapEnsemble {
    pub fn ate(&self) -> EndpointEnsemble {
        EndpointEnsemble {
            replicate: self.replicates.iter().map(|r| r.replicate).collect(),
            lower: self.replicates.iter().map(|r| r.ate_lower).collect(),
            upper: self.replicates.iter().map(|r| r.ate_upper).collect(),
        }
    }

    pub fn tau(&self) -> EndpointEnsemble {
        EndpointEnsemble {
            replicate: self.replicates.iter().map(|r| r.replicate).collect(),
            lower: self.replicates.iter().map(|r| r.tau_lower).collect(),
            upper: self.replicates.iter().map(|r| r.tau_upper).collect(),
        }
    }
}

/// Collects per-replicate bound pairs, dropping and counting failures.
pub fn ensemble_from_results(
    results: Vec<Result<strata::BoundPair>>,
    seed: u64,
) -> Result<BootstrapEnsemble> {
    let k = results.len();
    let mut replicates = Vec::with_capacity(k);
    let mut failures = 0;
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(bp) => replicates.push(ReplicateBounds {
                replicate: r,
                ate_lower: bp.ate_bound.lower,
                ate_upper: bp.ate_bound.upper,
                tau_lower: bp.tau_bound.lower,
                tau_upper: bp.tau_bound.upper,
            }),
            Err(_) => failures += 1,
        }
    }
    check_failures(failures, k)?;
    Ok(BootstrapEnsemble {
        seed,
        k,
        failures,
        rng: RNG_ALGORITHM.to_string(),
        replicates,
    })
}

/// Re-estimates the bounds under `assumption` on `k` stratified resamples.
/// Propensity, strata and covariate models are refitted per replicate.
pub fn bootstrap_bounds(
    ds: &ObservationalDataset,
    assumption: Assumption,
    params: &AssumptionParams,
    k: usize,
    seed: u64,
) -> Result<BootstrapEnsemble> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2 replicates, got {k}")));
    }
    params.validate()?;
    let results = run_replicates(ds, k, seed, |rep| strata::compute_bounds(rep, assumption, params));
    ensemble_from_results(results, seed)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct URResult {
    pub interval: Interval,
    /// Coverage `1 - theta`.
    pub level: f64,
    pub kind: IntervalKind,
    pub se_lower: Option<f64>,
    pub se_upper: Option<f64>,
    /// Set when the bound is narrow relative to its standard errors, where
    /// the normal critical value is only a rough stand-in.
    pub approximate: bool,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn widen(
    bound: &Interval,
    se_lower: f64,
    se_upper: f64,
    level: f64,
    critical: f64,
    kind: IntervalKind,
) -> Result<URResult> {
    check_level(level)?;
    if !(se_lower >= 0.0 && se_upper >= 0.0) || !se_lower.is_finite() || !se_upper.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "standard errors must be finite and >= 0, got ({se_lower}, {se_upper})"
        )));
    }
    Ok(URResult {
        interval: Interval::new(
            bound.lower - critical * se_lower,
            bound.upper + critical * se_upper,
            kind,
        )?,
        level,
        kind,
        se_lower: Some(se_lower),
        se_upper: Some(se_upper),
        approximate: bound.width() < 2.0 * se_lower.max(se_upper),
    })
}

/// Covers each point of the true bound with probability `level`:
/// endpoints move out by `Phi^-1(level)` standard errors.
pub fn ur_pointwise_can(bound: &Interval, se_lower: f64, se_upper: f64, level: f64) -> Result<URResult> {
    check_level(level)?;
    widen(bound, se_lower, se_upper, level, normal_quantile(level), IntervalKind::UrPointwiseCan)
}

/// Covers the whole true bound with probability `level`: endpoints move out by
/// `Phi^-1(1 - theta/2)` standard errors.
pub fn ur_strong_can(bound: &Interval, se_lower: f64, se_upper: f64, level: f64) -> Result<URResult> {
    check_level(level)?;
    let critical = normal_quantile(1.0 - (1.0 - level) / 2.0);
    widen(bound, se_lower, se_upper, level, critical, IntervalKind::UrStrongCan)
}

/// Number of replicates a bootstrap region must cover jointly.
pub fn required_coverage(k: usize, level: f64) -> usize {
    ((level * k as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Smallest ensemble size for which a `level` region is meaningful.
pub fn minimum_replicates(level: f64) -> usize {
    (1.0 / (1.0 - level) - 1e-9).ceil() as usize
}

/// Shortest `(L*, U*)` over replicate endpoint values covering at least
/// `level * K` replicates jointly (`L* <= L_k` and `U_k <= U*`). Width ties go
/// to the best balance between the counts `#(L* <= L_k)` and `#(U_k <= U*)`,
/// then to the smaller `L*`.
pub fn ur_strong_bootstrap(ensemble: &EndpointEnsemble, level: f64) -> Result<URResult> {
    check_level(level)?;
    let k = ensemble.len();
    let needed = minimum_replicates(level);
    if k < needed {
        return Err(Error::InsufficientReplicates {
            available: k,
            required: needed,
        });
    }
    let required = required_coverage(k, level);

    let mut sorted_lower = ensemble.lower.clone();
    sorted_lower.sort_by(f64::total_cmp);
    let mut sorted_upper = ensemble.upper.clone();
    sorted_upper.sort_by(f64::total_cmp);
    let count_lower_at_least = |l: f64| k - sorted_lower.partition_point(|&x| x < l);
    let count_upper_at_most = |u: f64| sorted_upper.partition_point(|&x| x <= u);

    // Sweep L* downward; `active` holds upper endpoints of replicates with L_k >= L*.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| ensemble.lower[j].total_cmp(&ensemble.lower[i]));
    let mut active: Vec<f64> = Vec::with_capacity(k);
    let mut best: Option<(f64, usize, f64, f64)> = None; // (width, imbalance, L*, U*)
    let mut pos = 0;
    while pos < k {
        let l_star = ensemble.lower[order[pos]];
        while pos < k && ensemble.lower[order[pos]] == l_star {
            let u = ensemble.upper[order[pos]];
            let at = active.partition_point(|&x| x <= u);
            active.insert(at, u);
            pos += 1;
        }
        if active.len() < required {
            continue;
        }
        let u_star = active[required - 1];
        let width = u_star - l_star;
        let imbalance = count_lower_at_least(l_star).abs_diff(count_upper_at_most(u_star));
        let better = match best {
            None => true,
            Some((bw, bi, bl, _)) => {
                width < bw || (width == bw && (imbalance < bi || (imbalance == bi && l_star < bl)))
            }
        };
        if better {
            best = Some((width, imbalance, l_star, u_star));
        }
    }
    let (_, _, l_star, u_star) = best.ok_or(Error::InsufficientReplicates {
        available: k,
        required,
    })?;
    Ok(URResult {
        interval: Interval::new(l_star, u_star, IntervalKind::UrStrongBootstrap)?,
        level,
        kind: IntervalKind::UrStrongBootstrap,
        se_lower: None,
        se_upper: None,
        approximate: false,
    })
}
