//! End-to-end estimators: nuisance fits, initial estimate, penalized path and tuning.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::alearn::{solve_u1, solve_u2, NewtonOptions};
use crate::data::{Dataset, Family, ModelSpec, ThetaEstimate};
use crate::drglm::{irglm_fit, sandwich_variance, IrglmConfig};
use crate::error::{Error, Result};
use crate::glm::{assemble_design, deviance_from_eta};
use crate::nuisance::{fit_propensity, NuisanceSpec, Nuisances, PluginFit};
use crate::pdr::{
    lambda_grid, one_step_pdr, ridge_initial, solve_path, FrozenProblem, OneStepMode, PenalizedOptions, PenaltyConfig,
    RegPath,
};
use crate::tuning::{cv_select, fold_assignment, ipw_select, qic_select, CvSetup, TuningReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Unpenalized A-learning.
    #[serde(rename = "UE")]
    Ue,
    /// Unpenalized iteratively reweighted GLM.
    #[serde(rename = "IRGLM")]
    Irglm,
    /// Penalized, initialized by A-learning.
    #[serde(rename = "PDR1")]
    Pdr1,
    /// Penalized, initialized by the reweighted GLM.
    #[serde(rename = "PDR2")]
    Pdr2,
    /// Penalized, ridge-initialized.
    #[serde(rename = "PDR_ridge")]
    PdrRidge,
    /// PDR1 when the model has fewer than n/2 coefficients, PDR_ridge otherwise.
    #[serde(rename = "PDR")]
    Pdr,
    /// Plain lasso outcome regression.
    #[serde(rename = "LASSO_OR")]
    LassoOr,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ue,
        Method::Irglm,
        Method::Pdr1,
        Method::Pdr2,
        Method::PdrRidge,
        Method::Pdr,
        Method::LassoOr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ue => "UE",
            Method::Irglm => "IRGLM",
            Method::Pdr1 => "PDR1",
            Method::Pdr2 => "PDR2",
            Method::PdrRidge => "PDR_ridge",
            Method::Pdr => "PDR",
            Method::LassoOr => "LASSO_OR",
        }
    }

    pub fn is_penalized(self) -> bool {
        !matches!(self, Method::Ue | Method::Irglm)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(t))
            .or(match t.to_ascii_lowercase().as_str() {
                "lasso" => Some(Method::LassoOr),
                "pdr-ridge" | "pdrridge" => Some(Method::PdrRidge),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    Qic,
    Cv { folds: usize },
    IpwValue,
    Fixed(f64),
    /// λ = n^exponent.
    Rate(f64),
}

impl std::str::FromStr for Tuning {
    type Err = Error;

    /// `qic`, `ipw_value`, `cv`, `cv:<folds>`, `fixed:<λ>`, `rate:<exponent>`, or a bare number (fixed λ).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("unknown tuning '{s}'"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        match t.split_once(':') {
            None => match t.as_str() {
                "qic" => Ok(Tuning::Qic),
                "ipw" | "ipw_value" | "value" => Ok(Tuning::IpwValue),
                "cv" => Ok(Tuning::Cv { folds: 5 }),
                other => other.parse::<f64>().map(Tuning::Fixed).map_err(|_| bad()),
            },
            Some(("cv", k)) => k.trim().parse().map(|folds| Tuning::Cv { folds }).map_err(|_| bad()),
            Some(("fixed", v)) => num(v).map(Tuning::Fixed),
            Some(("rate", v)) => num(v).map(Tuning::Rate),
            _ => Err(bad()),
        }
    }
}

/// Ridge strength for the ridge initializer: fixed, or chosen by K-fold CV over `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSetting {
    pub lambda: Option<f64>,
    pub grid: Vec<f64>,
    pub folds: usize,
}

impl Default for RidgeSetting {
    fn default() -> Self {
        RidgeSetting {
            lambda: None,
            grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub method: Method,
    pub tuning: Tuning,
    pub nuisance: NuisanceSpec,
    pub ridge: RidgeSetting,
    pub path_len: usize,
    pub path_ratio: f64,
    /// Seeds fold assignment for cross-validation.
    pub seed: u64,
    pub irglm: IrglmConfig,
    pub newton: NewtonOptions,
    pub penalized: PenalizedOptions,
    pub one_step: OneStepMode,
    /// Attach the sandwich covariance to unpenalized reweighted-GLM fits.
    pub sandwich: bool,
}

impl FitOptions {
    pub fn new(method: Method, tuning: Tuning, nuisance: NuisanceSpec) -> Self {
        FitOptions {
            method,
            tuning,
            nuisance,
            ridge: RidgeSetting::default(),
            path_len: crate::pdr::DEFAULT_PATH_LEN,
            path_ratio: crate::pdr::DEFAULT_PATH_RATIO,
            seed: 0,
            irglm: IrglmConfig::default(),
            newton: NewtonOptions::default(),
            penalized: PenalizedOptions::default(),
            one_step: OneStepMode::Single,
            sandwich: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub method: Method,
    pub estimate: ThetaEstimate,
    pub selected_lambda: Option<f64>,
    pub tuning: Option<TuningReport>,
    pub ridge_lambda: Option<f64>,
    /// Initial estimate behind the penalized fit.
    pub initial: Option<ThetaEstimate>,
}

/// Unpenalized A-learning ψ̂ with the plug-in β̂ as its baseline block.
pub fn a_learning(data: &Dataset, spec: &ModelSpec, nuis: &Nuisances, newton: &NewtonOptions) -> Result<ThetaEstimate> {
    let beta = nuis.beta_plugin(spec);
    let psi = match data.family() {
        Family::Count => solve_u1(data, spec, &nuis.pi_hat(), &beta, newton)?,
        Family::Binary => solve_u2(data, spec, &nuis.treatment, &beta, newton)?,
    };
    Ok(ThetaEstimate {
        beta,
        psi,
        converged: true,
        iterations: 0,
        final_residual_norm: 0.0,
        sandwich_cov: None,
    })
}

/// K-fold CV over the ridge grid: refit nuisances and the ridge-initialized
/// reweighting loop per fold, score held-out quasi-deviance.
pub fn cv_ridge_lambda(data: &Dataset, spec: &ModelSpec, nspec: &NuisanceSpec, setting: &RidgeSetting, seed: u64, cfg: &IrglmConfig) -> Result<f64> {
    if setting.grid.is_empty() {
        return Err(Error::Config("empty ridge grid".into()));
    }
    let labels = fold_assignment(data.n(), setting.folds, seed)?;
    let mut loss = vec![0.0; setting.grid.len()];
    for k in 0..setting.folds {
        let train = data.subset(&(0..data.n()).filter(|&i| labels[i] != k).collect::<Vec<_>>());
        let test = data.subset(&(0..data.n()).filter(|&i| labels[i] == k).collect::<Vec<_>>());
        let design = assemble_design(&test, spec)?;
        for (l, &lam) in loss.iter_mut().zip(&setting.grid) {
            let fold = Nuisances::fit(&train, spec, nspec, PluginFit::Ridge(lam))
                .and_then(|nu| ridge_initial(&train, spec, &nu, lam, cfg))
                .and_then(|est| deviance_from_eta(test.y(), &(&design * est.theta()), spec.link));
            *l += fold.unwrap_or(f64::INFINITY);
        }
    }
    let mut best = (f64::INFINITY, None);
    // larger λ wins ties
    let mut order: Vec<usize> = (0..setting.grid.len()).collect();
    order.sort_by(|&a, &b| setting.grid[b].total_cmp(&setting.grid[a]));
    for i in order {
        if loss[i] < best.0 {
            best = (loss[i], Some(setting.grid[i]));
        }
    }
    best.1
        .ok_or_else(|| Error::Estimation("ridge initializer failed for every grid value in every fold".into()))
}

fn propensity_for_value(data: &Dataset, nuis: &Nuisances, nspec: &NuisanceSpec) -> Result<DVector<f64>> {
    match data.family() {
        Family::Count => Ok(nuis.pi_hat()),
        Family::Binary => Ok(fit_propensity(data, &nspec.treatment_cols)?.predict(data.x())),
    }
}

fn pick(path: &RegPath, lambda: f64) -> Result<ThetaEstimate> {
    path.points
        .iter()
        .find(|p| p.lambda == lambda)
        .and_then(|p| p.fit.as_ref().ok().cloned())
        .ok_or_else(|| Error::Estimation(format!("no fit at selected λ = {lambda}")))
}

/// Penalized stage shared by the PDR variants and the lasso outcome regression.
#[allow(clippy::too_many_arguments)]
fn penalized_stage(
    data: &Dataset,
    spec: &ModelSpec,
    nuis: Option<&Nuisances>,
    plugin: PluginFit,
    base: &PenaltyConfig,
    psi_ini: &[f64],
    opts: &FitOptions,
) -> Result<(ThetaEstimate, Option<f64>, Option<TuningReport>)> {
    let problem = match nuis {
        Some(nu) => FrozenProblem::new(data, spec, nu, psi_ini)?,
        None => FrozenProblem::unweighted(data, spec)?,
    };
    let fixed = match opts.tuning {
        Tuning::Fixed(l) => Some(l),
        Tuning::Rate(e) => Some((data.n() as f64).powf(e)),
        _ => None,
    };
    if let Some(lambda) = fixed {
        let pen = base.with_lambda(lambda);
        let est = match (nuis, opts.one_step) {
            (Some(nu), OneStepMode::Iterated { .. }) => one_step_pdr(data, spec, nu, psi_ini, &pen, &opts.penalized, opts.one_step)?,
            _ => {
                let fit = problem.solve(&pen, &opts.penalized, None)?;
                let mut e = ThetaEstimate::from_theta(spec, &fit.coef);
                e.iterations = fit.iterations;
                e.final_residual_norm = fit.kkt_residual;
                e
            }
        };
        return Ok((est, Some(lambda), None));
    }
    let lmax = problem.lambda_max(base)?;
    if !(lmax > 0.0) {
        return Err(Error::Estimation("λ_max is zero; no penalized coefficient can enter".into()));
    }
    let lambdas = lambda_grid(lmax, opts.path_len, opts.path_ratio);
    let path = solve_path(&problem, spec, base, &lambdas, &opts.penalized)?;
    let report = match opts.tuning {
        Tuning::Qic => qic_select(&path, data, spec)?,
        Tuning::IpwValue => {
            let nu_owned;
            let nu = match nuis {
                Some(n) => n,
                None => {
                    nu_owned = Nuisances::fit(data, spec, &opts.nuisance, plugin)?;
                    &nu_owned
                }
            };
            ipw_select(&path, data, spec, &propensity_for_value(data, nu, &opts.nuisance)?)?
        }
        Tuning::Cv { folds } => {
            let setup = CvSetup {
                nuisance: &opts.nuisance,
                plugin,
                psi_ini,
                base,
                lambdas: &lambdas,
                opts: opts.penalized,
                unweighted: nuis.is_none(),
            };
            cv_select(data, spec, &setup, folds, opts.seed)?
        }
        Tuning::Fixed(_) | Tuning::Rate(_) => unreachable!(),
    };
    let lambda = report.selected_lambda;
    let est = match (nuis, opts.one_step) {
        (Some(nu), OneStepMode::Iterated { .. }) => {
            one_step_pdr(data, spec, nu, psi_ini, &base.with_lambda(lambda), &opts.penalized, opts.one_step)?
        }
        _ => pick(&path, lambda)?,
    };
    Ok((est, Some(lambda), Some(report)))
}

/// Fits one estimator on `data`.
pub fn fit_itr(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitOutput> {
    spec.validate_for(data)?;
    let method = match opts.method {
        Method::Pdr if 2 * spec.dim() < data.n() => Method::Pdr1,
        Method::Pdr => Method::PdrRidge,
        m => m,
    };
    let out = |estimate, selected_lambda, tuning, ridge_lambda, initial| FitOutput {
        method,
        estimate,
        selected_lambda,
        tuning,
        ridge_lambda,
        initial,
    };
    match method {
        Method::Ue => {
            let nu = Nuisances::fit(data, spec, &opts.nuisance, PluginFit::Unpenalized)?;
            Ok(out(a_learning(data, spec, &nu, &opts.newton)?, None, None, None, None))
        }
        Method::Irglm => {
            let nu = Nuisances::fit(data, spec, &opts.nuisance, PluginFit::Unpenalized)?;
            let mut est = irglm_fit(data, spec, &nu, &vec![0.0; spec.dim_psi()], &opts.irglm)?;
            if opts.sandwich {
                est.sandwich_cov = Some(sandwich_variance(data, spec, &est, &nu)?);
            }
            Ok(out(est, None, None, None, None))
        }
        Method::Pdr1 | Method::Pdr2 => {
            let nu = Nuisances::fit(data, spec, &opts.nuisance, PluginFit::Unpenalized)?;
            let ini = if method == Method::Pdr1 {
                a_learning(data, spec, &nu, &opts.newton)?
            } else {
                irglm_fit(data, spec, &nu, &vec![0.0; spec.dim_psi()], &opts.irglm)?
            };
            let base = PenaltyConfig::modified_adaptive(spec, &ini, 0.0)?;
            let (est, l, rep) = penalized_stage(data, spec, Some(&nu), PluginFit::Unpenalized, &base, &ini.psi, opts)?;
            Ok(out(est, l, rep, None, Some(ini)))
        }
        Method::PdrRidge => {
            let lr = match opts.ridge.lambda {
                Some(l) => l,
                None => cv_ridge_lambda(data, spec, &opts.nuisance, &opts.ridge, opts.seed, &opts.irglm)?,
            };
            let plugin = PluginFit::Ridge(lr);
            let nu = Nuisances::fit(data, spec, &opts.nuisance, plugin)?;
            let ini = ridge_initial(data, spec, &nu, lr, &opts.irglm)?;
            let base = PenaltyConfig::modified_adaptive(spec, &ini, 0.0)?;
            let (est, l, rep) = penalized_stage(data, spec, Some(&nu), plugin, &base, &ini.psi, opts)?;
            Ok(out(est, l, rep, Some(lr), Some(ini)))
        }
        Method::LassoOr => {
            let base = PenaltyConfig::lasso(spec, 0.0);
            let psi0 = vec![0.0; spec.dim_psi()];
            let (est, l, rep) = penalized_stage(data, spec, None, PluginFit::Unpenalized, &base, &psi0, opts)?;
            Ok(out(est, l, rep, None, None))
        }
        Method::Pdr => unreachable!(),
    }
}
