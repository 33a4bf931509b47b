//! Subcommand implementations. Each returns the exit status to report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use itr_core::sim::calibrate::{anchor_values, calibrate_highdim, Anchors, BINARY_HIGHDIM_TARGET, COUNT_HIGHDIM_TARGET};
use itr_core::sim::{generate, run_scenario, AggregateRow, Dgp, DgpParams, ScenarioRun};
use itr_core::{fit_itr, Dataset, Family, FitOptions, FitOutput, Method, ModelSpec, NuisanceSpec, Tuning};

use crate::config;
use crate::csvio::{self, Table};
use crate::report::{render_rule, Coefficients, Diagnostics, ModelReport, Named, TuningEntry, INTERCEPT_TERM, SCHEMA_VERSION, TREATMENT_TERM};
use crate::{CliError, CliResult, Exit};

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TableJson<'a> {
    schema_version: u32,
    family: &'a str,
    scenario: &'a str,
    n: usize,
    p: usize,
    n_reps: usize,
    test_size: usize,
    seed: u64,
    rows: &'a [AggregateRow],
}

/// Runs a configured simulation and writes `table.csv` and `table.json`.
pub fn simulate(config_path: &Path, out_override: Option<&Path>) -> CliResult<(Exit, ScenarioRun)> {
    let cfg = config::load(config_path)?;
    let out: PathBuf = out_override
        .map(Path::to_path_buf)
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from("."));
    let run = run_scenario(&cfg.sim)?;
    fs::create_dir_all(&out).map_err(|e| CliError::input(format!("cannot create {}: {e}", out.display())))?;

    let mut w = csv::Writer::from_path(out.join("table.csv")).map_err(|e| CliError::input(e.to_string()))?;
    for row in &run.rows {
        w.serialize(row).map_err(|e| CliError::input(e.to_string()))?;
    }
    w.flush()?;
    let sim = &run.config;
    let json = TableJson {
        schema_version: SCHEMA_VERSION,
        family: sim.family.as_str(),
        scenario: sim.scenario.as_str(),
        n: sim.n,
        p: sim.p,
        n_reps: sim.n_reps,
        test_size: sim.test_size,
        seed: sim.seed,
        rows: &run.rows,
    };
    write_or_print(Some(&out.join("table.json")), &to_json(&json))?;

    let exit = match run.check_failures() {
        Ok(()) => Exit::Ok,
        Err(e) => {
            eprintln!("warning: {e}");
            Exit::PartialFailure
        }
    };
    Ok((exit, run))
}

#[derive(Debug, Clone)]
pub struct FitRequest {
    pub data_path: PathBuf,
    pub outcome: String,
    pub treatment: String,
    pub baseline: Vec<String>,
    pub blip: Vec<String>,
    /// Treatment-model covariates; empty means the baseline covariates.
    pub propensity: Vec<String>,
    pub family: Family,
    pub method: Method,
    pub tuning: Tuning,
    pub minimize: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub report: ModelReport,
    pub output: FitOutput,
    pub data: Dataset,
    pub spec: ModelSpec,
}

fn dedup(names: &[String]) -> CliResult<()> {
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::input(format!("column '{n}' listed twice")));
        }
    }
    Ok(())
}

/// Fits one estimator to a CSV file.
pub fn fit(req: &FitRequest) -> CliResult<Fitted> {
    if req.baseline.is_empty() {
        return Err(CliError::input("at least one baseline column is required"));
    }
    dedup(&req.baseline)?;
    dedup(&req.blip)?;
    dedup(&req.propensity)?;
    let outside: Vec<&str> = req
        .blip
        .iter()
        .filter(|b| !req.baseline.contains(b))
        .map(String::as_str)
        .collect();
    if !outside.is_empty() {
        return Err(CliError::input(format!(
            "tailoring columns must also be baseline columns (strong heredity): {}",
            outside.join(", ")
        )));
    }
    let propensity = if req.propensity.is_empty() { &req.baseline } else { &req.propensity };
    let mut covariates: Vec<String> = req.baseline.clone();
    covariates.extend(propensity.iter().filter(|c| !covariates.contains(c)).cloned().collect::<Vec<_>>());
    for special in [&req.outcome, &req.treatment] {
        if covariates.contains(special) {
            return Err(CliError::input(format!("column '{special}' cannot be both a covariate and the outcome or treatment")));
        }
    }
    let mut wanted = covariates.clone();
    wanted.push(req.treatment.clone());
    wanted.push(req.outcome.clone());
    let table = csvio::read_file(&req.data_path, &wanted)?;
    let a = table.values(&req.treatment);
    csvio::check_binary(&a, &req.treatment)?;
    let n = table.rows.len();
    let p = covariates.len();
    let x = DMatrix::from_fn(n, p, |i, j| table.rows[i][j]);
    let data = Dataset::new(x, DVector::from_vec(a), DVector::from_vec(table.values(&req.outcome)), req.family)?;
    let col = |name: &String| covariates.iter().position(|c| c == name).unwrap();
    let spec = ModelSpec::new(
        req.baseline.iter().map(col).collect(),
        req.blip.iter().map(col).collect(),
        req.family.link(),
    )?;
    let mut opts = FitOptions::new(
        req.method,
        req.tuning,
        NuisanceSpec {
            treatment_cols: propensity.iter().map(col).collect(),
        },
    );
    opts.seed = req.seed;
    let output = fit_itr(&data, &spec, &opts)?;
    let report = build_report(req, &output);
    Ok(Fitted {
        report,
        output,
        data,
        spec,
    })
}

fn build_report(req: &FitRequest, out: &FitOutput) -> ModelReport {
    let named = |first: &str, names: &[String], values: &[f64]| -> Vec<Named> {
        std::iter::once(first)
            .chain(names.iter().map(String::as_str))
            .zip(values)
            .map(|(n, &v)| Named {
                name: n.to_string(),
                value: v,
            })
            .collect()
    };
    let est = &out.estimate;
    let psi = named(TREATMENT_TERM, &req.blip, &est.psi);
    let tuning_table = out.tuning.as_ref().map(|t| {
        t.per_lambda
            .iter()
            .map(|r| TuningEntry {
                lambda: r.lambda,
                criterion: r.criterion.is_finite().then_some(r.criterion),
                support_size: r.support_size,
            })
            .collect()
    });
    ModelReport {
        schema_version: SCHEMA_VERSION,
        family: req.family.as_str().to_string(),
        method: out.method.as_str().to_string(),
        outcome: req.outcome.clone(),
        treatment: req.treatment.clone(),
        minimize: req.minimize,
        tailoring_variables: psi[1..].iter().filter(|t| t.value != 0.0).map(|t| t.name.clone()).collect(),
        rule: render_rule(&psi, req.minimize),
        coefficients: Coefficients {
            beta: named(INTERCEPT_TERM, &req.baseline, &est.beta),
            psi,
        },
        selected_lambda: out.selected_lambda,
        tuning_table,
        diagnostics: Diagnostics {
            iterations: est.iterations,
            residual_norm: est.final_residual_norm,
            converged: est.converged,
        },
    }
}

pub fn write_report(report: &ModelReport, path: Option<&Path>) -> CliResult<()> {
    write_or_print(path, &to_json(report))
}

pub fn load_report(path: &Path) -> CliResult<ModelReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: not JSON: {e}", path.display())))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(CliError::input(format!(
                "{}: schema version {v}, this build reads version {SCHEMA_VERSION}",
                path.display()
            )))
        }
        None => return Err(CliError::input(format!("{}: no schema_version field", path.display()))),
    }
    let report: ModelReport =
        serde_json::from_value(value).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if report.coefficients.psi.is_empty() {
        return Err(CliError::input(format!("{}: empty blip coefficients", path.display())));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub row: usize,
    pub gamma: f64,
    pub recommend: u8,
}

/// Blip and recommendation for every row of a CSV file.
pub fn predict(report: &ModelReport, data_path: &Path) -> CliResult<Vec<Prediction>> {
    let bytes = fs::read(data_path).map_err(|e| CliError::input(format!("cannot read {}: {e}", data_path.display())))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let names: Vec<String> = report.blip_terms().iter().map(|t| t.name.clone()).collect();
    let table: Table = csvio::read_columns(bytes.as_slice(), &names, &data_path.display().to_string())?;
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let gamma = report.blip(x);
            Prediction {
                row: i + 1,
                gamma,
                recommend: report.recommend(gamma),
            }
        })
        .collect())
}

pub fn write_predictions(preds: &[Prediction], path: Option<&Path>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::input(e.to_string());
    if !preds.is_empty() {
        w.write_record(["row", "gamma", "recommend"]).map_err(err)?;
    }
    for p in preds {
        w.write_record([p.row.to_string(), p.gamma.to_string(), p.recommend.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    write_or_print(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct Calibration {
    family: &'static str,
    p: usize,
    target: Anchors,
    params: DgpParams,
    achieved: Anchors,
}

/// Calibrates the high-dimensional generator to its target anchors.
pub fn calibrate(family: Family, p: usize, size: usize, seed: u64) -> CliResult<String> {
    let target = match family {
        Family::Count => COUNT_HIGHDIM_TARGET,
        Family::Binary => BINARY_HIGHDIM_TARGET,
    };
    let params = calibrate_highdim(family, p, target, size, seed)?;
    let achieved = anchor_values(&Dgp::new(family, p, params)?, size, seed.wrapping_add(1));
    Ok(to_json(&Calibration {
        family: family.as_str(),
        p,
        target,
        params,
        achieved,
    }))
}

/// Writes the training data of one replicate as CSV with columns x1..xp, h, a, y.
pub fn export(config_path: &Path, rep: usize, out: Option<&Path>) -> CliResult<()> {
    let cfg = config::load(config_path)?;
    let (data, _) = generate(&cfg.sim, rep)?;
    let mut names: Vec<String> = (1..=cfg.sim.p).map(|j| format!("x{j}")).collect();
    names.push("h".into());
    let mut buf = Vec::new();
    csvio::write_dataset(&mut buf, &data, &names)?;
    write_or_print(out, &String::from_utf8(buf).expect("csv output is UTF-8"))
}
