//! Monte Carlo benchmark: data-generating processes, metrics and the replicate runner.

pub mod calibrate;
pub mod dgp;
pub mod metrics;
pub mod runner;

use serde::{Deserialize, Serialize};

use crate::data::Family;
use crate::error::{Error, Result};
use crate::pipeline::{Method, RidgeSetting, Tuning};

pub use dgp::{
    gen_binary_data, gen_count_data, gen_highdim_data, gen_test_set, generate, solve_propensity_from_joint, Dgp,
    DgpParams, TestSet, Truth,
};
pub use metrics::{evaluate, MetricsReport};
pub use runner::{run_replicate, run_scenario, AggregateRow, RepOutcome, ScenarioRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Baseline model misspecified, treatment model correct.
    #[serde(rename = "s1")]
    S1BaselineMisspec,
    /// Treatment model misspecified, baseline correct.
    #[serde(rename = "s2")]
    S2TreatmentMisspec,
    #[serde(rename = "s3")]
    S3BothCorrect,
    /// Many candidate tailoring variables; baseline misspecified, treatment correct.
    #[serde(rename = "highdim")]
    Highdim,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::S1BaselineMisspec => "s1",
            Scenario::S2TreatmentMisspec => "s2",
            Scenario::S3BothCorrect => "s3",
            Scenario::Highdim => "highdim",
        }
    }

    pub fn baseline_correct(self) -> bool {
        matches!(self, Scenario::S2TreatmentMisspec | Scenario::S3BothCorrect)
    }

    pub fn treatment_correct(self) -> bool {
        !matches!(self, Scenario::S2TreatmentMisspec)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" | "1" | "s1_baseline_misspec" => Ok(Scenario::S1BaselineMisspec),
            "s2" | "2" | "s2_treatment_misspec" => Ok(Scenario::S2TreatmentMisspec),
            "s3" | "3" | "s3_both_correct" => Ok(Scenario::S3BothCorrect),
            "highdim" | "high" | "hd" => Ok(Scenario::Highdim),
            _ => Err(Error::Config(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub scenario: Scenario,
    pub n_reps: usize,
    pub test_size: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    pub tuning: Tuning,
    pub ridge: RidgeSetting,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(family: Family, scenario: Scenario, n: usize, p: usize) -> Self {
        SimConfig {
            family,
            n,
            p,
            scenario,
            n_reps: 100,
            test_size: 10_000,
            seed: 1,
            estimators: vec![Method::Ue, Method::Pdr1, Method::Pdr2],
            tuning: Tuning::Qic,
            ridge: RidgeSetting::default(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n), ("p", self.p), ("n_reps", self.n_reps), ("test_size", self.test_size)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.p < 4 {
            return Err(Error::Config(format!("the generator uses x1..x4; p = {} is too small", self.p)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators configured".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}
