//! Doubly robust estimation of individualized treatment rules for count and
//! binary outcomes, with penalized selection of tailoring variables.

pub mod alearn;
pub mod data;
pub mod drglm;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod nuisance;
pub mod pdr;
pub mod pipeline;
pub mod sim;
pub mod tuning;

pub use data::{Dataset, Family, Link, ModelSpec, ThetaEstimate};
pub use error::{Error, Result};
pub use nuisance::{NuisanceModel, NuisanceSpec, Nuisances, PluginFit};
pub use pdr::{PenaltyConfig, PenaltyKind, RegPath};
pub use pipeline::{fit_itr, FitOptions, FitOutput, Method, Tuning};
pub use sim::{MetricsReport, Scenario, SimConfig};
pub use tuning::TuningReport;
