//! Sweeps of a single assumption constant: a common `xi` under assumption A,
//! or `delta00` under B / B'.
//!
//! Every grid value is evaluated on the same bootstrap resamples, so the
//! regions differ across the grid only through the swept constant.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{AssumptionParams, ObservationalDataset};
use crate::error::{Error, Result};
use crate::strata::{Assumption, BoundContext, BoundPair};
use crate::uncertainty::{self, EndpointEnsemble, URResult};

/// Default `xi` grid: 300, 320, ..., 500.
pub fn default_xi_grid() -> Vec<f64> {
    (0..=10).map(|i| 300.0 + 20.0 * f64::from(i)).collect()
}

/// Default `delta00` grid: -60, -52, ..., 20.
pub fn default_delta00_grid() -> Vec<f64> {
    (0..=10).map(|i| -60.0 + 8.0 * f64::from(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    XiCommon,
    Delta00,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::XiCommon => "xi_common",
            Self::Delta00 => "delta00",
        })
    }
}

/// Bootstrap settings shared by every grid point. `k = 0` skips the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub k: usize,
    pub seed: u64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// `None` when the bound crossed at this value.
    pub bounds: Option<BoundPair>,
    pub ur_ate: Option<URResult>,
    pub ur_tau: Option<URResult>,
}

impl SweepRow {
    pub fn invalid(&self) -> bool {
        self.bounds.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub parameter: SweepParameter,
    pub assumption: Assumption,
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

fn check_grid(grid: &[f64], nonnegative: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    if let Some(x) = grid.iter().find(|x| !x.is_finite() || (nonnegative && **x < 0.0)) {
        return Err(Error::InvalidParameter(format!("invalid grid value {x}")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("sweep grid must be strictly increasing".into()));
    }
    Ok(())
}

fn sweep(
    ds: &ObservationalDataset,
    parameter: SweepParameter,
    assumption: Assumption,
    base: &AssumptionParams,
    grid: &[f64],
    settings: &SweepSettings,
) -> Result<SweepGrid> {
    let params_at = |value: f64| {
        let mut p = *base;
        match parameter {
            SweepParameter::XiCommon => {
                p.xi0 = value;
                p.xi1 = value;
            }
            SweepParameter::Delta00 => p.delta00 = value,
        }
        p
    };
    let all_params: Vec<AssumptionParams> = grid.iter().map(|&v| params_at(v)).collect();
    for p in &all_params {
        p.validate()?;
    }
    let evaluate = |ctx: &BoundContext| -> Result<Vec<Option<BoundPair>>> {
        all_params
            .iter()
            .map(|p| match ctx.bounds(assumption, p) {
                Ok(bp) => Ok(Some(bp)),
                Err(Error::InvalidBound { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    };

    let with_cov = assumption.needs_covariate_models();
    let full = evaluate(&BoundContext::fit(ds, with_cov)?)?;

    let per_replicate = if settings.k > 0 {
        let results = uncertainty::run_replicates(ds, settings.k, settings.seed, |rep| {
            evaluate(&BoundContext::fit(rep, with_cov)?)
        });
        let failures = results.iter().filter(|r| r.is_err()).count();
        uncertainty::check_failures(failures, settings.k)?;
        results
            .into_iter()
            .enumerate()
            .filter_map(|(r, res)| res.ok().map(|rows| (r, rows)))
            .collect::<Vec<_>>()
    } else {
        Vec::new()
    };

    let rows = full
        .into_iter()
        .enumerate()
        .map(|(g, bounds)| {
            let (mut ur_ate, mut ur_tau) = (None, None);
            if bounds.is_some() && settings.k > 0 {
                let mut ate = EndpointEnsemble { replicate: vec![], lower: vec![], upper: vec![] };
                let mut tau = ate.clone();
                for (r, rows) in &per_replicate {
                    if let Some(bp) = rows[g] {
                        for (ens, iv) in [(&mut ate, bp.ate_bound), (&mut tau, bp.tau_bound)] {
                            ens.replicate.push(*r);
                            ens.lower.push(iv.lower);
                            ens.upper.push(iv.upper);
                        }
                    }
                }
                ur_ate = uncertainty::ur_strong_bootstrap(&ate, settings.level).ok();
                ur_tau = uncertainty::ur_strong_bootstrap(&tau, settings.level).ok();
            }
            SweepRow {
                value: grid[g],
                bounds,
                ur_ate,
                ur_tau,
            }
        })
        .collect();

    Ok(SweepGrid {
        parameter,
        assumption,
        values: grid.to_vec(),
        rows,
    })
}

/// Bounds under assumption A with `xi0 = xi1 = xi` for each grid value.
pub fn sweep_xi(ds: &ObservationalDataset, grid: &[f64], settings: &SweepSettings) -> Result<SweepGrid> {
    check_grid(grid, true)?;
    sweep(
        ds,
        SweepParameter::XiCommon,
        Assumption::A,
        &AssumptionParams::default(),
        grid,
        settings,
    )
}

/// Bounds under B or B' with only `delta00` varying over the grid; the other
/// constants come from `base`.
pub fn sweep_delta00(
    ds: &ObservationalDataset,
    grid: &[f64],
    assumption: Assumption,
    base: &AssumptionParams,
    settings: &SweepSettings,
) -> Result<SweepGrid> {
    if assumption == Assumption::A {
        return Err(Error::InvalidParameter("delta00 sweeps need assumption B or Bprime".into()));
    }
    check_grid(grid, false)?;
    sweep(ds, SweepParameter::Delta00, assumption, base, grid, settings)
}

/// Long-format CSV, one line per grid value. Crossed bounds get
/// `invalid_flag = 1` and empty estimate fields.
pub fn write_csv<W: Write>(grid: &SweepGrid, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "parameter", "value", "ate_lo", "ate_hi", "tau_lo", "tau_hi", "ur_ate_lo", "ur_ate_hi",
        "ur_tau_lo", "ur_tau_hi", "invalid_flag",
    ])?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in &grid.rows {
        let b = row.bounds;
        wtr.write_record([
            grid.parameter.to_string(),
            row.value.to_string(),
            fmt(b.map(|b| b.ate_bound.lower)),
            fmt(b.map(|b| b.ate_bound.upper)),
            fmt(b.map(|b| b.tau_bound.lower)),
            fmt(b.map(|b| b.tau_bound.upper)),
            fmt(row.ur_ate.map(|u| u.interval.lower)),
            fmt(row.ur_ate.map(|u| u.interval.upper)),
            fmt(row.ur_tau.map(|u| u.interval.lower)),
            fmt(row.ur_tau.map(|u| u.interval.upper)),
            u8::from(row.invalid()).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
