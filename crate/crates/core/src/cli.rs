//! Command-line front end. Every command is a pure function of its input
//! files, flags and seed; reports carry the resolved configuration in a
//! `provenance` block and no timestamps.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, AssumptionParams, ColumnMap, Interval, ObservationalDataset};
use crate::error::Error;
use crate::estimators::{self, Method};
use crate::sensitivity::{self, SweepGrid, SweepSettings};
use crate::simgen::{self, StrataDGP, TruthManifest};
use crate::strata::{Assumption, BoundContext, StrataEstimates};
use crate::uncertainty::{self, URResult};

pub const DEFAULT_SEED: u64 = 20240101;
pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Parser)]
#[command(name = "ivbounds", version, about = "IV and IPW estimates and bounds on the average treatment effect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// As-treated, IPW and IV point estimates with confidence intervals
    Estimate(EstimateArgs),
    /// Bounds on the ATE and tau with uncertainty regions
    Bounds(BoundsArgs),
    /// Bounds and bootstrap regions over a grid of one assumption constant
    Sensitivity(SensitivityArgs),
    /// Draw a synthetic dataset with its truth manifest
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// JSON file with default settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub instrument: Option<String>,
    /// Comma-separated covariate columns
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Bootstrap replicates
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Output directory for reports
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AssumptionArgs {
    /// A, B or Bprime
    #[arg(long)]
    pub assumption: Option<String>,
    #[arg(long)]
    pub xi0: Option<f64>,
    #[arg(long)]
    pub xi1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta11: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta00: Option<f64>,
    #[arg(long = "delta-y0", allow_hyphen_values = true)]
    pub delta_y0: Option<f64>,
    #[arg(long = "delta-trt", allow_hyphen_values = true)]
    pub delta_trt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub assumption: AssumptionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Xi,
    Delta00,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub assumption: AssumptionArgs,
    /// Swept constant; defaults to xi under A and delta00 under B / Bprime
    #[arg(long, value_enum)]
    pub parameter: Option<SweepKind>,
    /// Comma-separated, strictly increasing grid values
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationKind {
    Strata,
    Confounded,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<SimulationKind>,
    /// Strata design as JSON; the built-in default is used otherwise
    #[arg(long)]
    pub dgp: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treated/untreated contrast for the confounded design
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long = "beta-ate", allow_hyphen_values = true)]
    pub beta_ate: Option<f64>,
    #[arg(long = "covariate-dim")]
    pub covariate_dim: Option<usize>,
    /// Output CSV path; manifests are written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings read from `--config`. Field names match the long flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<PathBuf>,
    pub outcome: Option<String>,
    pub treatment: Option<String>,
    pub instrument: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub assumption: Option<String>,
    pub xi0: Option<f64>,
    pub xi1: Option<f64>,
    pub delta11: Option<f64>,
    pub delta00: Option<f64>,
    pub delta_y0: Option<f64>,
    pub delta_trt: Option<f64>,
    #[serde(alias = "K")]
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
    pub out: Option<PathBuf>,
    pub parameter: Option<SweepKind>,
    pub grid: Option<Vec<f64>>,
    pub kind: Option<SimulationKind>,
    pub dgp: Option<PathBuf>,
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub beta_ate: Option<f64>,
    pub covariate_dim: Option<usize>,
}

/// Fully resolved settings for the data-driven commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub data: PathBuf,
    pub columns: ColumnMap,
    pub assumption: Option<Assumption>,
    pub params: AssumptionParams,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub level: f64,
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<SweepKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub kind: SimulationKind,
    pub dgp: Option<StrataDGP>,
    pub n: usize,
    pub seed: u64,
    pub tau: f64,
    pub beta_ate: f64,
    pub covariate_dim: usize,
    pub out: PathBuf,
}

/// Error surfaced to the user together with the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "Usage".into(),
            message: message.into(),
            code: 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::MissingColumn(_) | Error::Json(_) => 1,
            Error::Io(_)
            | Error::Csv(_)
            | Error::NonBinaryValue { .. }
            | Error::NonFiniteValue { .. }
            | Error::MissingCell { .. }
            | Error::InvalidDataset(_) => 3,
            _ => 2,
        };
        // A constant instrument is the degenerate weak-instrument case.
        if let Error::EmptyInstrumentCell { arm } = e {
            return Self {
                kind: "WeakInstrument".into(),
                message: format!("instrument is constant: arm Z={arm} has no records"),
                code: 2,
            };
        }
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            code,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

fn resolve_params(args: &AssumptionArgs, file: &ConfigFile) -> AssumptionParams {
    AssumptionParams {
        xi0: args.xi0.or(file.xi0).unwrap_or(0.0),
        xi1: args.xi1.or(file.xi1).unwrap_or(0.0),
        delta11: args.delta11.or(file.delta11).unwrap_or(0.0),
        delta00: args.delta00.or(file.delta00).unwrap_or(0.0),
        delta_y0: args.delta_y0.or(file.delta_y0).unwrap_or(0.0),
        delta_trt: args.delta_trt.or(file.delta_trt).unwrap_or(0.0),
    }
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let grid = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::usage(format!("bad grid value `{s}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(CliError::usage("sensitivity grid is empty"));
    }
    Ok(grid)
}

/// Merges flags over the config file and applies defaults.
pub fn resolve_run_config(
    command: &str,
    data: &DataArgs,
    assumption: Option<&AssumptionArgs>,
) -> CliResult<(RunConfig, ConfigFile)> {
    let file = read_config(data.config.as_deref())?;
    let path = data
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::usage("missing --data"))?;
    let defaults = ColumnMap::default();
    let columns = ColumnMap {
        outcome: data.outcome.clone().or_else(|| file.outcome.clone()).unwrap_or(defaults.outcome),
        treatment: data.treatment.clone().or_else(|| file.treatment.clone()).unwrap_or(defaults.treatment),
        instrument: data.instrument.clone().or_else(|| file.instrument.clone()).unwrap_or(defaults.instrument),
        covariates: data.covariates.clone().or_else(|| file.covariates.clone()).unwrap_or_default(),
    };
    let empty = AssumptionArgs::default();
    let assumption_args = assumption.unwrap_or(&empty);
    let parsed_assumption = match assumption_args.assumption.clone().or_else(|| file.assumption.clone()) {
        Some(text) if assumption.is_some() => Some(text.parse::<Assumption>().map_err(CliError::from)?),
        _ => None,
    };
    let params = resolve_params(assumption_args, &file);
    params.validate()?;
    let cfg = RunConfig {
        command: command.into(),
        data: path,
        columns,
        assumption: parsed_assumption,
        params,
        k: data.k.or(file.k).unwrap_or(DEFAULT_REPLICATES),
        seed: data.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        level: data.level.or(file.level).unwrap_or(DEFAULT_LEVEL),
        out: data.out.clone().or_else(|| file.out.clone()),
        parameter: None,
        grid: None,
    };
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", cfg.level)));
    }
    if cfg.k < 1 {
        return Err(CliError::usage("--K must be >= 1"));
    }
    Ok((cfg, file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub data_sha256: String,
    pub rng: String,
    pub config: RunConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load(cfg: &RunConfig) -> CliResult<(ObservationalDataset, Provenance)> {
    let bytes = std::fs::read(&cfg.data).map_err(|e| CliError {
        kind: "Io".into(),
        message: format!("{}: {e}", cfg.data.display()),
        code: 3,
    })?;
    let ds = data::read_dataset(bytes.as_slice(), &cfg.columns)?;
    let provenance = Provenance {
        tool: "ivbounds".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        data_sha256: sha256_hex(&bytes),
        rng: uncertainty::RNG_ALGORITHM.into(),
        config: cfg.clone(),
    };
    Ok((ds, provenance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: Method,
    pub estimand: String,
    pub value: f64,
    pub se: f64,
    pub se_source: String,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub command: String,
    pub provenance: Provenance,
    pub n: usize,
    pub level: f64,
    pub propensity_coef: Vec<f64>,
    pub estimates: Vec<EstimateRow>,
    pub bootstrap_failures: usize,
}

/// AT and IPW with bootstrap standard errors, IV with its delta-method
/// standard error, each with a normal-theory interval at `cfg.level`.
pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<EstimateReport> {
    let (ds, provenance) = load(cfg)?;
    let at = estimators::at_estimate(&ds)?;
    let propensity = estimators::fit_propensity(&ds)?;
    let ipw = estimators::ipw_estimate(&ds, &propensity)?;
    let iv = estimators::iv_estimate(&ds)?;

    let results = uncertainty::run_replicates(&ds, cfg.k, cfg.seed, |rep| {
        let at = estimators::at_estimate(rep)?.value;
        let ipw = estimators::ipw_estimate(rep, &estimators::fit_propensity(rep)?)?.value;
        Ok((at, ipw))
    });
    let failures = results.iter().filter(|r| r.is_err()).count();
    uncertainty::check_failures(failures, cfg.k)?;
    let draws: Vec<(f64, f64)> = results.into_iter().filter_map(|r| r.ok()).collect();
    if draws.len() < 2 {
        return Err(Error::InsufficientReplicates {
            available: draws.len(),
            required: 2,
        }
        .into());
    }
    let at_se = uncertainty::sample_sd(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let ipw_se = uncertainty::sample_sd(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    let iv_se = iv.se.unwrap_or(f64::NAN);

    let crit = uncertainty::normal_quantile(0.5 + cfg.level / 2.0);
    let row = |method, estimand: &str, value: f64, se: f64, source: &str| EstimateRow {
        method,
        estimand: estimand.into(),
        value,
        se,
        se_source: source.into(),
        ci_lower: value - crit * se,
        ci_upper: value + crit * se,
    };
    Ok(EstimateReport {
        command: "estimate".into(),
        provenance,
        n: ds.n(),
        level: cfg.level,
        propensity_coef: propensity.coef.clone(),
        estimates: vec![
            row(Method::AsTreated, "ATE", at.value, at_se, "bootstrap"),
            row(Method::Ipw, "ATE", ipw.value, ipw_se, "bootstrap"),
            row(Method::InstrumentalVariable, "LATE", iv.value, iv_se, "delta"),
        ],
        bootstrap_failures: failures,
    })
}

pub fn render_estimate(report: &EstimateReport) -> String {
    let pct = report.level * 100.0;
    let mut s = format!("{:<8}{:<10}{:>12}{:>10}   {pct:.0}% CI\n", "method", "estimand", "estimate", "se");
    for r in &report.estimates {
        let _ = writeln!(
            s,
            "{:<8}{:<10}{:>12.1}{:>10.1}   ({:.1}, {:.1})",
            r.method.to_string(),
            r.estimand,
            r.value,
            r.se,
            r.ci_lower,
            r.ci_upper
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub bound: Interval,
    pub se_lower: f64,
    pub se_upper: f64,
    pub ur_p_can: URResult,
    pub ur_s_can: URResult,
    /// `None` when there are too few successful replicates for the level.
    pub ur_s_bts: Option<URResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    #[serde(rename = "K")]
    pub k: usize,
    pub failures: usize,
    pub seed: u64,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub command: String,
    pub provenance: Provenance,
    pub assumption: Assumption,
    pub params: AssumptionParams,
    pub level: f64,
    pub strata: StrataEstimates,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dropped_covariates: Vec<String>,
    pub ate: TargetReport,
    pub tau: TargetReport,
    pub bootstrap: BootstrapInfo,
    #[serde(skip)]
    pub ensemble: Option<uncertainty::BootstrapEnsemble>,
}

fn target_report(bound: Interval, ens: &uncertainty::EndpointEnsemble, level: f64) -> CliResult<TargetReport> {
    let (se_lower, se_upper) = ens.standard_errors()?;
    Ok(TargetReport {
        bound,
        se_lower,
        se_upper,
        ur_p_can: uncertainty::ur_pointwise_can(&bound, se_lower, se_upper, level)?,
        ur_s_can: uncertainty::ur_strong_can(&bound, se_lower, se_upper, level)?,
        ur_s_bts: uncertainty::ur_strong_bootstrap(ens, level).ok(),
    })
}

pub fn cmd_bounds(cfg: &RunConfig) -> CliResult<BoundsReport> {
    let assumption = cfg.assumption.ok_or_else(|| CliError::usage("missing --assumption"))?;
    if cfg.k < 2 {
        return Err(CliError::usage("bounds need --K >= 2"));
    }
    let (ds, provenance) = load(cfg)?;
    let ctx = BoundContext::fit(&ds, assumption.needs_covariate_models())?;
    let bp = ctx.bounds(assumption, &cfg.params)?;
    let dropped_covariates = ctx
        .conditional
        .as_ref()
        .map(|c| c.dropped_covariates.clone())
        .unwrap_or_default();
    let ens = uncertainty::bootstrap_bounds(&ds, assumption, &cfg.params, cfg.k, cfg.seed)?;
    Ok(BoundsReport {
        command: "bounds".into(),
        provenance,
        assumption,
        params: cfg.params,
        level: cfg.level,
        strata: ctx.strata,
        dropped_covariates,
        ate: target_report(bp.ate_bound, &ens.ate(), cfg.level)?,
        tau: target_report(bp.tau_bound, &ens.tau(), cfg.level)?,
        bootstrap: BootstrapInfo {
            k: ens.k,
            failures: ens.failures,
            seed: ens.seed,
            rng: ens.rng.clone(),
        },
        ensemble: Some(ens),
    })
}

pub fn render_bounds(report: &BoundsReport) -> String {
    let pct = format!("{:.0}%", report.level * 100.0);
    let cell = |iv: &Interval| format!("({:.0}, {:.0})", iv.lower, iv.upper);
    let opt = |ur: &Option<URResult>| ur.as_ref().map_or("n/a".to_string(), |u| cell(&u.interval));
    let mut s = format!("Assumption {}\n{:<20}{:<22}{}\n", report.assumption, "", "ATE", "tau");
    let rows = [
        ("Bound estimate".to_string(), cell(&report.ate.bound), cell(&report.tau.bound)),
        (
            format!("{pct} UR_P_CAN"),
            cell(&report.ate.ur_p_can.interval),
            cell(&report.tau.ur_p_can.interval),
        ),
        (
            format!("{pct} UR_S_CAN"),
            cell(&report.ate.ur_s_can.interval),
            cell(&report.tau.ur_s_can.interval),
        ),
        (format!("{pct} UR_S_BTS"), opt(&report.ate.ur_s_bts), opt(&report.tau.ur_s_bts)),
    ];
    for (label, ate, tau) in rows {
        let _ = writeln!(s, "{label:<20}{ate:<22}{tau}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub command: String,
    pub provenance: Provenance,
    pub sweep: SweepGrid,
}

pub fn cmd_sensitivity(cfg: &RunConfig) -> CliResult<SensitivityReport> {
    let parameter = cfg.parameter.unwrap_or(match cfg.assumption {
        Some(Assumption::B) | Some(Assumption::Bprime) => SweepKind::Delta00,
        _ => SweepKind::Xi,
    });
    let (ds, provenance) = load(cfg)?;
    let settings = SweepSettings {
        k: cfg.k,
        seed: cfg.seed,
        level: cfg.level,
    };
    let sweep = match parameter {
        SweepKind::Xi => {
            if matches!(cfg.assumption, Some(a) if a != Assumption::A) {
                return Err(CliError::usage("xi sweeps use assumption A"));
            }
            let grid = cfg.grid.clone().unwrap_or_else(sensitivity::default_xi_grid);
            sensitivity::sweep_xi(&ds, &grid, &settings)?
        }
        SweepKind::Delta00 => {
            let grid = cfg.grid.clone().unwrap_or_else(sensitivity::default_delta00_grid);
            let assumption = cfg.assumption.unwrap_or(Assumption::B);
            sensitivity::sweep_delta00(&ds, &grid, assumption, &cfg.params, &settings)?
        }
    };
    let mut provenance = provenance;
    provenance.config.parameter = Some(parameter);
    provenance.config.grid = Some(sweep.values.clone());
    Ok(SensitivityReport {
        command: "sensitivity".into(),
        provenance,
        sweep,
    })
}

pub fn resolve_simulate_config(args: &SimulateArgs) -> CliResult<SimulateConfig> {
    let file = read_config(args.config.as_deref())?;
    let kind = args.kind.or(file.kind).unwrap_or(SimulationKind::Strata);
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::usage("missing --out"))?;
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let dgp = match kind {
        SimulationKind::Strata => {
            let mut dgp = match args.dgp.clone().or_else(|| file.dgp.clone()) {
                Some(path) => simgen::load_dgp(path)?,
                None => StrataDGP::default(),
            };
            dgp.seed = seed;
            if let Some(n) = args.n.or(file.n) {
                dgp.n = n;
            }
            Some(dgp)
        }
        SimulationKind::Confounded => None,
    };
    Ok(SimulateConfig {
        kind,
        n: dgp.as_ref().map_or(args.n.or(file.n).unwrap_or(5000), |d| d.n),
        dgp,
        seed,
        tau: args.tau.or(file.tau).unwrap_or(0.0),
        beta_ate: args.beta_ate.or(file.beta_ate).unwrap_or(100.0),
        covariate_dim: args.covariate_dim.or(file.covariate_dim).unwrap_or(2),
        out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub command: String,
    pub provenance: SimulateConfig,
    pub files: Vec<PathBuf>,
    pub data_sha256: String,
    pub truth: TruthManifest,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes the dataset CSV and, next to it, `.truth.json`, `.summary.json`,
/// `.sha256` and (for the strata design) `.dgp.json`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> CliResult<SimulateReport> {
    let (ds, truth) = match (&cfg.kind, &cfg.dgp) {
        (SimulationKind::Strata, Some(dgp)) => simgen::generate_strata(dgp)?,
        _ => simgen::generate_confounded(cfg.n, cfg.seed, cfg.tau, cfg.beta_ate, cfg.covariate_dim)?,
    };
    let mut csv_bytes = Vec::new();
    data::write_dataset(&ds, &mut csv_bytes)?;
    let hash = sha256_hex(&csv_bytes);
    if let Some(dir) = cfg.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    std::fs::write(&cfg.out, &csv_bytes).map_err(Error::from)?;
    let file_name = cfg.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut files = vec![cfg.out.clone()];

    let truth_path = sibling(&cfg.out, ".truth.json");
    simgen::save_json(&truth, &truth_path)?;
    files.push(truth_path);
    let summary_path = sibling(&cfg.out, ".summary.json");
    simgen::save_json(&data::summarize(&ds).manifest(), &summary_path)?;
    files.push(summary_path);
    if let Some(dgp) = &cfg.dgp {
        let dgp_path = sibling(&cfg.out, ".dgp.json");
        simgen::save_json(dgp, &dgp_path)?;
        files.push(dgp_path);
    }
    let hash_path = sibling(&cfg.out, ".sha256");
    std::fs::write(&hash_path, format!("{hash}  {file_name}\n")).map_err(Error::from)?;
    files.push(hash_path);

    Ok(SimulateReport {
        command: "simulate".into(),
        provenance: cfg.clone(),
        files,
        data_sha256: hash,
        truth,
    })
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    std::fs::write(dir.join(name), bytes).map_err(Error::from)?;
    Ok(())
}

fn io_err(e: std::io::Error) -> CliError {
    Error::from(e).into()
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Estimate(args) => {
            let (cfg, _) = resolve_run_config("estimate", &args.data, None)?;
            let report = cmd_estimate(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => {
                    write_file(dir, "estimate.json", json.as_bytes())?;
                    stdout.write_all(render_estimate(&report).as_bytes()).map_err(io_err)?;
                }
                None => stdout.write_all(json.as_bytes()).map_err(io_err)?,
            }
        }
        Command::Bounds(args) => {
            let (cfg, _) = resolve_run_config("bounds", &args.data, Some(&args.assumption))?;
            let report = cmd_bounds(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => {
                    write_file(dir, "bounds.json", json.as_bytes())?;
                    if let Some(ens) = &report.ensemble {
                        for (name, e) in [("ensemble_ate.csv", ens.ate()), ("ensemble_tau.csv", ens.tau())] {
                            let mut buf = Vec::new();
                            e.write_csv(&mut buf)?;
                            write_file(dir, name, &buf)?;
                        }
                    }
                    stdout.write_all(render_bounds(&report).as_bytes()).map_err(io_err)?;
                }
                None => stdout.write_all(json.as_bytes()).map_err(io_err)?,
            }
        }
        Command::Sensitivity(args) => {
            let (mut cfg, file) = resolve_run_config("sensitivity", &args.data, Some(&args.assumption))?;
            cfg.parameter = args.parameter.or(file.parameter);
            cfg.grid = match (&args.grid, &file.grid) {
                (Some(text), _) => Some(parse_grid(text)?),
                (None, Some(g)) if g.is_empty() => return Err(CliError::usage("sensitivity grid is empty")),
                (None, g) => g.clone(),
            };
            let report = cmd_sensitivity(&cfg)?;
            let mut csv_buf = Vec::new();
            sensitivity::write_csv(&report.sweep, &mut csv_buf)?;
            match &cfg.out {
                Some(dir) => {
                    let name = format!("sensitivity_{}.csv", report.sweep.parameter);
                    write_file(dir, &name, &csv_buf)?;
                    write_file(dir, "sensitivity.json", to_json(&report)?.as_bytes())?;
                }
                None => stdout.write_all(&csv_buf).map_err(io_err)?,
            }
        }
        Command::Simulate(args) => {
            let cfg = resolve_simulate_config(&args)?;
            let report = cmd_simulate(&cfg)?;
            stdout.write_all(to_json(&report)?.as_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to `stderr` as `{"error": {"kind", "message"}}`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            let _ = writeln!(stderr, "{}", err.to_json());
            return err.code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.to_json());
            err.code
        }
    }
}
