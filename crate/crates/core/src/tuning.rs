//! Choosing λ along a path: quasi-deviance information criterion, IPW value,
//! or K-fold cross-validation.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{blip_at_treatment, Dataset, ModelSpec, ThetaEstimate};
use crate::error::{Error, Result};
use crate::glm::{assemble_design, deviance_from_eta, weighted_deviance_from_eta};
use crate::nuisance::{NuisanceSpec, Nuisances, PluginFit};
use crate::pdr::{solve_path, FrozenProblem, PenalizedOptions, PenaltyConfig, RegPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Qic,
    IpwValue,
    Cv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningRow {
    pub lambda: f64,
    /// Criterion value; +∞ (QIC, CV) or −∞ (value) for failed path points.
    pub criterion: f64,
    pub support_size: usize,
    /// Quasi-deviance D_λ (QIC), mean held-out deviance (CV), unused (value).
    pub deviance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningReport {
    pub criterion: Criterion,
    /// Rows ordered by decreasing λ.
    pub per_lambda: Vec<TuningRow>,
    pub selected_lambda: f64,
    pub kappa_n: f64,
}

impl TuningReport {
    pub fn selected_row(&self) -> &TuningRow {
        self.per_lambda
            .iter()
            .find(|r| r.lambda == self.selected_lambda)
            .expect("selected λ is one of the rows")
    }
}

/// κ_n = log(log n)·log p.
pub fn kappa(n: usize, p: usize) -> Result<f64> {
    if n < 3 || p < 2 {
        return Err(Error::Config(format!("κ_n needs n ≥ 3 and p ≥ 2 (n = {n}, p = {p})")));
    }
    Ok((n as f64).ln().ln() * (p as f64).ln())
}

/// Nonzero penalized coefficients: β_j and ψ_j for j ≥ 1.
pub fn penalized_support_size(est: &ThetaEstimate) -> usize {
    est.beta_support().len() + est.psi_support().len()
}

/// Recommended treatment 𝟙{γ(x,1;ψ) > 0}; with `minimize`, 𝟙{γ < 0}. A zero blip recommends 0.
pub fn recommend(x: &nalgebra::DMatrix<f64>, spec: &ModelSpec, psi: &[f64], minimize: bool) -> Vec<u8> {
    blip_at_treatment(x, spec, psi)
        .iter()
        .map(|&g| if minimize { (g < 0.0) as u8 } else { (g > 0.0) as u8 })
        .collect()
}

/// Picks the best row after sorting by decreasing λ; ties go to the larger λ.
fn select(mut rows: Vec<TuningRow>, maximize: bool) -> Result<(Vec<TuningRow>, f64)> {
    rows.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let mut best: Option<(f64, f64)> = None;
    for r in &rows {
        let c = if maximize { -r.criterion } else { r.criterion };
        if !c.is_finite() {
            continue;
        }
        if best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, r.lambda));
        }
    }
    match best {
        Some((_, l)) => Ok((rows, l)),
        None => Err(Error::Estimation("every path point failed; nothing to select".into())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QicOptions<'a> {
    /// Replaces κ_n = log(log n)·log p.
    pub kappa: Option<f64>,
    /// Weighted quasi-deviance with these observation weights (not the published criterion).
    pub weights: Option<&'a DVector<f64>>,
}

/// Minimizes n⁻¹[D_λ + κ_n s_λ] with the unweighted quasi-deviance D_λ and
/// p = number of candidate tailoring variables.
pub fn qic_select(path: &RegPath, data: &Dataset, spec: &ModelSpec) -> Result<TuningReport> {
    qic_select_with(path, data, spec, &QicOptions::default())
}

pub fn qic_select_with(path: &RegPath, data: &Dataset, spec: &ModelSpec, opts: &QicOptions) -> Result<TuningReport> {
    if path.points.is_empty() {
        return Err(Error::Config("empty path".into()));
    }
    let k = match opts.kappa {
        Some(k) => k,
        None => kappa(data.n(), spec.blip_cols.len())?,
    };
    let design = assemble_design(data, spec)?;
    let n = data.n() as f64;
    let mut rows = Vec::with_capacity(path.points.len());
    for p in &path.points {
        let row = match &p.fit {
            Ok(est) => {
                est.check_dims(spec)?;
                let eta = &design * est.theta();
                let dev = weighted_deviance_from_eta(data.y(), &eta, opts.weights, spec.link)?;
                let s = penalized_support_size(est);
                TuningRow {
                    lambda: p.lambda,
                    criterion: (dev + k * s as f64) / n,
                    support_size: s,
                    deviance: dev,
                }
            }
            Err(_) => TuningRow {
                lambda: p.lambda,
                criterion: f64::INFINITY,
                support_size: 0,
                deviance: f64::NAN,
            },
        };
        rows.push(row);
    }
    let (per_lambda, selected_lambda) = select(rows, false)?;
    Ok(TuningReport {
        criterion: Criterion::Qic,
        per_lambda,
        selected_lambda,
        kappa_n: k,
    })
}

/// n⁻¹ Σ yᵢ 𝟙(aᵢ = ruleᵢ) / (aᵢπ̂ᵢ + (1−aᵢ)(1−π̂ᵢ)).
pub fn ipw_value(data: &Dataset, rule: &[u8], pi_hat: &DVector<f64>) -> f64 {
    let (a, y) = (data.a(), data.y());
    let total: f64 = (0..data.n())
        .filter(|&i| a[i] == rule[i] as f64)
        .map(|i| y[i] / (a[i] * pi_hat[i] + (1.0 - a[i]) * (1.0 - pi_hat[i])))
        .sum();
    total / data.n() as f64
}

/// Maximizes the IPW value of the rule implied by each path point.
pub fn ipw_select(path: &RegPath, data: &Dataset, spec: &ModelSpec, pi_hat: &DVector<f64>) -> Result<TuningReport> {
    if path.points.is_empty() {
        return Err(Error::Config("empty path".into()));
    }
    if pi_hat.len() != data.n() {
        return Err(Error::Config("π̂ length differs from n".into()));
    }
    let rows = path
        .points
        .iter()
        .map(|p| match &p.fit {
            Ok(est) => TuningRow {
                lambda: p.lambda,
                criterion: ipw_value(data, &recommend(data.x(), spec, &est.psi, false), pi_hat),
                support_size: penalized_support_size(est),
                deviance: f64::NAN,
            },
            Err(_) => TuningRow {
                lambda: p.lambda,
                criterion: f64::NEG_INFINITY,
                support_size: 0,
                deviance: f64::NAN,
            },
        })
        .collect();
    let (per_lambda, selected_lambda) = select(rows, true)?;
    Ok(TuningReport {
        criterion: Criterion::IpwValue,
        per_lambda,
        selected_lambda,
        kappa_n: 0.0,
    })
}

/// Balanced random fold labels in 0..folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Config(format!("{folds} folds for {n} observations")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (k, &i) in idx.iter().enumerate() {
        labels[i] = k % folds;
    }
    Ok(labels)
}

/// What a cross-validation fold refits: nuisances from training rows, then the
/// frozen-weight path at a fixed initial blip.
#[derive(Debug, Clone)]
pub struct CvSetup<'a> {
    pub nuisance: &'a NuisanceSpec,
    pub plugin: PluginFit,
    pub psi_ini: &'a [f64],
    /// Penalty kind and weights; λ is taken from `lambdas`.
    pub base: &'a PenaltyConfig,
    pub lambdas: &'a [f64],
    pub opts: PenalizedOptions,
    /// Use unit weights instead of the frozen doubly robust weights.
    pub unweighted: bool,
}

/// Held-out unweighted quasi-deviance per λ after fitting on `train`.
/// Failed path points score +∞.
pub fn cv_losses(train: &Dataset, test: &Dataset, spec: &ModelSpec, setup: &CvSetup) -> Result<Vec<f64>> {
    let problem = if setup.unweighted {
        FrozenProblem::unweighted(train, spec)?
    } else {
        let nuis = Nuisances::fit(train, spec, setup.nuisance, setup.plugin)?;
        FrozenProblem::new(train, spec, &nuis, setup.psi_ini)?
    };
    let path = solve_path(&problem, spec, setup.base, setup.lambdas, &setup.opts)?;
    let design = assemble_design(test, spec)?;
    path.points
        .iter()
        .map(|p| match &p.fit {
            Ok(est) => deviance_from_eta(test.y(), &(&design * est.theta()), spec.link),
            Err(_) => Ok(f64::INFINITY),
        })
        .collect()
}

/// K-fold CV: refits nuisances and the path per fold and minimizes the
/// average held-out quasi-deviance.
pub fn cv_select(data: &Dataset, spec: &ModelSpec, setup: &CvSetup, folds: usize, seed: u64) -> Result<TuningReport> {
    if setup.lambdas.is_empty() {
        return Err(Error::Config("empty lambda sequence".into()));
    }
    let labels = fold_assignment(data.n(), folds, seed)?;
    let mut total = vec![0.0; setup.lambdas.len()];
    for k in 0..folds {
        let train_rows: Vec<usize> = (0..data.n()).filter(|&i| labels[i] != k).collect();
        let test_rows: Vec<usize> = (0..data.n()).filter(|&i| labels[i] == k).collect();
        let train = data.subset(&train_rows);
        let treated = train.n_treated();
        if treated == 0 || treated == train.n() {
            return Err(Error::Estimation(format!("fold {k}: training rows contain a single treatment arm")));
        }
        let losses = cv_losses(&train, &data.subset(&test_rows), spec, setup)
            .map_err(|e| Error::Estimation(format!("fold {k}: {e}")))?;
        for (t, l) in total.iter_mut().zip(losses) {
            *t += l;
        }
    }
    let n = data.n() as f64;
    let rows = setup
        .lambdas
        .iter()
        .zip(&total)
        .map(|(&lambda, &t)| TuningRow {
            lambda,
            criterion: t / n,
            support_size: 0,
            deviance: t / folds as f64,
        })
        .collect();
    let (per_lambda, selected_lambda) = select(rows, false)?;
    Ok(TuningReport {
        criterion: Criterion::Cv,
        per_lambda,
        selected_lambda,
        kappa_n: 0.0,
    })
}
