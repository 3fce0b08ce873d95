//! Observational records `(Y, A, Z, V)`, analyst assumption constants, and
//! CSV ingestion.
//!
//! Every dataset handed to the estimators has passed [`ObservationalDataset::new`]:
//! equal-length columns, binary treatment and instrument, finite values, and at
//! least one record in each instrument arm.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` records of a continuous outcome, a binary treatment, a binary
/// instrument and `p` measured covariates (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    y: Vec<f64>,
    a: Vec<u8>,
    z: Vec<u8>,
    v: Vec<f64>,
    p: usize,
    column_names: Vec<String>,
}

impl ObservationalDataset {
    /// Validates and assembles a dataset. `v` is row-major with `column_names.len()`
    /// entries per record.
    pub fn new(
        y: Vec<f64>,
        a: Vec<u8>,
        z: Vec<u8>,
        v: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let p = column_names.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no records".into()));
        }
        if a.len() != n || z.len() != n {
            return Err(Error::InvalidDataset(format!(
                "column lengths differ: y={n}, a={}, z={}",
                a.len(),
                z.len()
            )));
        }
        if v.len() != n * p {
            return Err(Error::InvalidDataset(format!(
                "covariate block has {} values, expected {n} x {p}",
                v.len()
            )));
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i + 1,
                    column: "y".into(),
                    value: yi.to_string(),
                });
            }
        }
        for (i, vi) in v.iter().enumerate() {
            if !vi.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i / p + 1,
                    column: column_names[i % p].clone(),
                    value: vi.to_string(),
                });
            }
        }
        for (name, col) in [("a", &a), ("z", &z)] {
            if let Some(i) = col.iter().position(|&x| x > 1) {
                return Err(Error::NonBinaryValue {
                    row: i + 1,
                    column: name.into(),
                    value: col[i].to_string(),
                });
            }
        }
        for arm in [0u8, 1] {
            if !z.contains(&arm) {
                return Err(Error::EmptyInstrumentCell { arm });
            }
        }
        Ok(Self {
            y,
            a,
            z,
            v,
            p,
            column_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Covariates of record `i`.
    pub fn v_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.p..(i + 1) * self.p]
    }

    /// Row-major covariate block.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Dataset made of the records at `indices` (repeats allowed). The caller
    /// must keep both instrument arms represented.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut y = Vec::with_capacity(indices.len());
        let mut a = Vec::with_capacity(indices.len());
        let mut z = Vec::with_capacity(indices.len());
        let mut v = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            y.push(self.y[i]);
            a.push(self.a[i]);
            z.push(self.z[i]);
            v.extend_from_slice(self.v_row(i));
        }
        Self::new(y, a, z, v, self.column_names.clone())
    }

    /// Indices of the records with `Z = arm`, in file order.
    pub fn instrument_arm(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i] == arm).collect()
    }
}

/// Analyst-supplied constants for the bound assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AssumptionParams {
    pub xi0: f64,
    pub xi1: f64,
    pub delta11: f64,
    pub delta00: f64,
    pub delta_y0: f64,
    pub delta_trt: f64,
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("xi0", self.xi0), ("xi1", self.xi1)] {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {x}"
                )));
            }
        }
        for (name, x) in [
            ("delta11", self.delta11),
            ("delta00", self.delta00),
            ("delta_y0", self.delta_y0),
            ("delta_trt", self.delta_trt),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")));
            }
        }
        Ok(())
    }
}

/// What an [`Interval`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalKind {
    BoundEstimate,
    #[serde(rename = "UR_P_CAN")]
    UrPointwiseCan,
    #[serde(rename = "UR_S_CAN")]
    UrStrongCan,
    #[serde(rename = "UR_S_BTS")]
    UrStrongBootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub kind: IntervalKind,
}

impl Interval {
    /// Rejects crossed or non-finite endpoints.
    pub fn new(lower: f64, upper: f64, kind: IntervalKind) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(Error::InvalidBound { lower, upper });
        }
        Ok(Self { lower, upper, kind })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Column mapping used when reading a delimited file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub outcome: String,
    pub treatment: String,
    pub instrument: String,
    pub covariates: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            treatment: "a".into(),
            instrument: "z".into(),
            covariates: Vec::new(),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<ObservationalDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, columns)
}

/// Parses comma-separated text with a header row.
pub fn read_dataset<R: Read>(reader: R, columns: &ColumnMap) -> Result<ObservationalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let yi = find(&columns.outcome)?;
    let ai = find(&columns.treatment)?;
    let zi = find(&columns.instrument)?;
    let vi = columns
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let (mut y, mut a, mut z, mut v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let cell = |idx: usize, name: &str| -> Result<&str> {
            match record.get(idx) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::MissingCell {
                    row,
                    column: name.to_string(),
                }),
            }
        };
        y.push(parse_real(cell(yi, &columns.outcome)?, row, &columns.outcome)?);
        a.push(parse_binary(cell(ai, &columns.treatment)?, row, &columns.treatment)?);
        z.push(parse_binary(cell(zi, &columns.instrument)?, row, &columns.instrument)?);
        for (&idx, name) in vi.iter().zip(&columns.covariates) {
            v.push(parse_real(cell(idx, name)?, row, name)?);
        }
    }
    ObservationalDataset::new(y, a, z, v, columns.covariates.clone())
}

fn parse_real(s: &str, row: usize, column: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::NonFiniteValue {
            row,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

fn parse_binary(s: &str, row: usize, column: &str) -> Result<u8> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::NonBinaryValue {
            row,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

/// Writes `y,a,z,<covariates>` with shortest round-trip float formatting.
pub fn write_dataset<W: Write>(ds: &ObservationalDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "a".to_string(), "z".to_string()];
    header.extend(ds.column_names.iter().cloned());
    wtr.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        fields.clear();
        fields.push(ds.y[i].to_string());
        fields.push(ds.a[i].to_string());
        fields.push(ds.z[i].to_string());
        fields.extend(ds.v_row(i).iter().map(|x| x.to_string()));
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &ObservationalDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(ds, std::io::BufWriter::new(file))
}

/// Mean and standard error (`sd / sqrt(n)`) of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

impl GroupStats {
    pub fn of(values: impl Iterator<Item = f64>) -> Self {
        let xs: Vec<f64> = values.collect();
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                se: None,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        });
        Self {
            n,
            mean: Some(mean),
            se,
        }
    }
}

/// Two-sample z statistic for a difference of means. A zero pooled standard
/// error gives `0` when the means agree and `None` otherwise.
pub fn two_sample_z(one: &GroupStats, zero: &GroupStats) -> Option<f64> {
    let (m1, m0) = (one.mean?, zero.mean?);
    let se = (one.se.unwrap_or(0.0).powi(2) + zero.se.unwrap_or(0.0).powi(2)).sqrt();
    if se == 0.0 {
        (m1 == m0).then_some(0.0)
    } else {
        Some((m1 - m0) / se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentArmSummary {
    pub n: usize,
    pub treated: usize,
    pub treatment_rate: GroupStats,
    pub outcome: GroupStats,
}

/// Per-arm counts and means of the outcome and treatment for each instrument arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub p: usize,
    /// Outcome by treatment arm, index = A.
    pub outcome_by_treatment: [GroupStats; 2],
    pub z_outcome_by_treatment: Option<f64>,
    /// Index = Z.
    pub by_instrument: [InstrumentArmSummary; 2],
    pub z_rate_by_instrument: Option<f64>,
    pub z_outcome_by_instrument: Option<f64>,
}

/// Fixture format for committed summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryManifest {
    pub n: usize,
    pub p: usize,
    pub rate_z0: f64,
    pub rate_z1: f64,
    pub mean_y_z0: f64,
    pub mean_y_z1: f64,
}

impl Summary {
    pub fn manifest(&self) -> SummaryManifest {
        let [z0, z1] = &self.by_instrument;
        SummaryManifest {
            n: self.n,
            p: self.p,
            rate_z0: z0.treatment_rate.mean.unwrap_or(f64::NAN),
            rate_z1: z1.treatment_rate.mean.unwrap_or(f64::NAN),
            mean_y_z0: z0.outcome.mean.unwrap_or(f64::NAN),
            mean_y_z1: z1.outcome.mean.unwrap_or(f64::NAN),
        }
    }
}

pub fn summarize(ds: &ObservationalDataset) -> Summary {
    let outcome_by_treatment = [0u8, 1].map(|arm| {
        GroupStats::of((0..ds.n()).filter(|&i| ds.a[i] == arm).map(|i| ds.y[i]))
    });
    let by_instrument = [0u8, 1].map(|arm| {
        let rows = ds.instrument_arm(arm);
        InstrumentArmSummary {
            n: rows.len(),
            treated: rows.iter().filter(|&&i| ds.a[i] == 1).count(),
            treatment_rate: GroupStats::of(rows.iter().map(|&i| f64::from(ds.a[i]))),
            outcome: GroupStats::of(rows.iter().map(|&i| ds.y[i])),
        }
    });
    Summary {
        n: ds.n(),
        p: ds.p(),
        z_outcome_by_treatment: two_sample_z(&outcome_by_treatment[1], &outcome_by_treatment[0]),
        z_rate_by_instrument: two_sample_z(
            &by_instrument[1].treatment_rate,
            &by_instrument[0].treatment_rate,
        ),
        z_outcome_by_instrument: two_sample_z(&by_instrument[1].outcome, &by_instrument[0].outcome),
        outcome_by_treatment,
        by_instrument,
    }
}
