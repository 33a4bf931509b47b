use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{gen_test_set, generate, models_for, rng_for, STREAM_ALGO};
use super::metrics::{evaluate, MetricsReport};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::pipeline::{fit_itr, FitOptions, Method};

/// Largest tolerated fraction of failed replicates per estimator.
pub const FAILURE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub rep: usize,
    /// One entry per configured estimator, in configuration order.
    pub results: Vec<(Method, std::result::Result<MetricsReport, String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "ER")]
    pub er: f64,
    pub value: f64,
    #[serde(rename = "FN")]
    pub fn_rate: f64,
    #[serde(rename = "FP")]
    pub fp_rate: f64,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "MSE")]
    pub mse: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: SimConfig,
    pub rows: Vec<AggregateRow>,
    pub reps: Vec<RepOutcome>,
}

impl ScenarioRun {
    pub fn row(&self, m: Method) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.estimator == m.as_str())
    }

    /// Successful per-replicate reports for one estimator.
    pub fn reports(&self, m: Method) -> Vec<&MetricsReport> {
        self.reps
            .iter()
            .flat_map(|r| r.results.iter())
            .filter(|(mm, _)| *mm == m)
            .filter_map(|(_, r)| r.as_ref().ok())
            .collect()
    }

    pub fn failure_exceeded(&self) -> bool {
        let reps = self.config.n_reps as f64;
        self.rows.iter().any(|r| r.n_failed as f64 > FAILURE_THRESHOLD * reps)
    }

    pub fn check_failures(&self) -> Result<()> {
        let bad: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.n_failed as f64 > FAILURE_THRESHOLD * self.config.n_reps as f64)
            .map(|r| format!("{} failed {}/{} replicates", r.estimator, r.n_failed, self.config.n_reps))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Estimation(bad.join("; ")))
        }
    }
}

/// Generates replicate `rep`, fits every configured estimator on it and
/// evaluates each on a fresh test set. Estimators see identical data.
pub fn run_replicate(cfg: &SimConfig, rep: usize) -> RepOutcome {
    let prepared = (|| -> Result<_> {
        let (data, truth) = generate(cfg, rep)?;
        let test = gen_test_set(cfg, rep)?;
        let (spec, nspec) = models_for(cfg)?;
        Ok((data, truth, test, spec, nspec))
    })();
    let (data, truth, test, spec, nspec) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return RepOutcome {
                rep,
                results: cfg.estimators.iter().map(|&m| (m, Err(msg.clone()))).collect(),
            };
        }
    };
    let algo_seed: u64 = rng_for(cfg.seed, rep, STREAM_ALGO).random();
    let results = cfg
        .estimators
        .iter()
        .map(|&m| {
            let mut opts = FitOptions::new(m, cfg.tuning, nspec.clone());
            opts.ridge = cfg.ridge.clone();
            opts.seed = algo_seed;
            let r = fit_itr(&data, &spec, &opts)
                .and_then(|out| evaluate(&out.estimate, &truth, &test, &spec))
                .map_err(|e| e.to_string());
            (m, r)
        })
        .collect();
    RepOutcome { rep, results }
}

fn aggregate(cfg: &SimConfig, reps: &[RepOutcome]) -> Vec<AggregateRow> {
    cfg.estimators
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let ok: Vec<&MetricsReport> = reps.iter().filter_map(|r| r.results[k].1.as_ref().ok()).collect();
            let mean = |f: fn(&MetricsReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            AggregateRow {
                estimator: m.as_str().to_string(),
                scenario: cfg.scenario.as_str().to_string(),
                n: cfg.n,
                p: cfg.p,
                er: mean(|r| r.er),
                value: mean(|r| r.value),
                fn_rate: mean(|r| r.fn_rate),
                fp_rate: mean(|r| r.fp_rate),
                mae: mean(|r| r.mae),
                mse: mean(|r| r.mse),
                n_failed: reps.len() - ok.len(),
            }
        })
        .collect()
}

/// Runs all replicates (in parallel) and averages each metric over the
/// successful replicates of each estimator.
pub fn run_scenario(cfg: &SimConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let work = || -> Vec<RepOutcome> { (0..cfg.n_reps).into_par_iter().map(|rep| run_replicate(cfg, rep)).collect() };
    let reps = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(ScenarioRun {
        rows: aggregate(cfg, &reps),
        config: cfg.clone(),
        reps,
    })
}
