//! Treatment-effect estimation with a binary instrument: as-treated, inverse
//! probability weighting, a confounding-adjusted IPW, and the Wald IV
//! estimator, together with bounds on the ATE under analyst-supplied
//! assumptions and bootstrap uncertainty regions for those bounds.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod sensitivity;
pub mod simgen;
pub mod strata;
pub mod uncertainty;

pub use data::{AssumptionParams, ColumnMap, Interval, IntervalKind, ObservationalDataset};
pub use error::{Error, Result};
pub use estimators::{Method, PointEstimate};
pub use strata::{Assumption, BoundPair};
pub use uncertainty::{BootstrapEnsemble, URResult};
