//! Treatment-side nuisance models: the propensity score P(A=1|X) for count
//! outcomes and E(A|Y=0,X) for binary outcomes, plus the pseudo-propensity π*.

use nalgebra::{DMatrix, DVector};

use crate::data::{baseline_predictor, blip_at_treatment, Dataset, Family, Link, ModelSpec};
use crate::error::{Error, Result};
use crate::glm::{design_for, expit, weighted_glm_fit, IrlsOptions};
use crate::pdr::{penalized_weighted_glm, PenalizedOptions, PenaltyConfig};

/// Clamp applied to every expit inside π*.
pub const PI_STAR_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuisanceKind {
    Propensity,
    TreatmentGivenY0,
}

/// Logistic model for the treatment: logit = coef[0] + Σ coef[k+1]·x[columns[k]].
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceModel {
    pub kind: NuisanceKind,
    pub coef: Vec<f64>,
    pub columns: Vec<usize>,
}

impl NuisanceModel {
    pub fn linear_predictor_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        self.columns
            .iter()
            .zip(&self.coef[1..])
            .fold(self.coef[0], |acc, (&c, &b)| acc + b * x[(i, c)])
    }

    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |i, _| self.linear_predictor_row(x, i))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.linear_predictor(x).map(expit)
    }
}

fn treatment_design(x: &DMatrix<f64>, rows: &[usize], columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), columns.len() + 1, |r, j| {
        if j == 0 {
            1.0
        } else {
            x[(rows[r], columns[j - 1])]
        }
    })
}

fn fit_treatment_logit(
    data: &Dataset,
    rows: &[usize],
    columns: &[usize],
    kind: NuisanceKind,
) -> Result<NuisanceModel> {
    if let Some(&c) = columns.iter().find(|&&c| c >= data.p()) {
        return Err(Error::Config(format!("treatment-model column {c} out of range")));
    }
    let treated = rows.iter().filter(|&&i| data.a()[i] == 1.0).count();
    if treated == 0 || treated == rows.len() {
        return Err(Error::Estimation(format!(
            "{kind:?} model needs both treatment arms; {treated} of {} rows treated",
            rows.len()
        )));
    }
    let design = treatment_design(data.x(), rows, columns);
    let a = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.a()[i]));
    let w = DVector::from_element(rows.len(), 1.0);
    let fit = weighted_glm_fit(&design, &a, &w, Link::Logit, &IrlsOptions::default())?;
    Ok(NuisanceModel {
        kind,
        coef: fit.coef.iter().copied().collect(),
        columns: columns.to_vec(),
    })
}

/// Logistic regression of A on the selected columns plus an intercept.
pub fn fit_propensity(data: &Dataset, columns: &[usize]) -> Result<NuisanceModel> {
    let rows: Vec<usize> = (0..data.n()).collect();
    fit_treatment_logit(data, &rows, columns, NuisanceKind::Propensity)
}

/// Logistic regression of A on the selected columns among rows with Y = 0.
pub fn fit_treatment_given_y0(data: &Dataset, columns: &[usize]) -> Result<NuisanceModel> {
    if data.family() != Family::Binary {
        return Err(Error::Config("E(A|Y=0,X) is only used for binary outcomes".into()));
    }
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.y()[i] == 0.0).collect();
    if rows.is_empty() {
        return Err(Error::Estimation("no rows with y = 0".into()));
    }
    fit_treatment_logit(data, &rows, columns, NuisanceKind::TreatmentGivenY0)
}

/// π* from the treatment-model linear predictor `u`, the baseline `f` and the
/// blip at treatment `gamma1`, using the odds-ratio symmetry.
pub fn pi_star_value(u: f64, f: f64, gamma1: f64) -> f64 {
    let c = |p: f64| p.clamp(PI_STAR_CLAMP, 1.0 - PI_STAR_CLAMP);
    let eu = c(expit(u));
    let ef = c(expit(f));
    let efg = c(expit(f + gamma1));
    1.0 / (1.0 + ((1.0 - eu) / eu) * (ef / efg))
}

/// dπ*/dγ(x,1) = π*(1−π*)(1 − expit(f+γ)) away from the clamps.
pub fn pi_star_dgamma(u: f64, f: f64, gamma1: f64) -> f64 {
    let ps = pi_star_value(u, f, gamma1);
    ps * (1.0 - ps) * (1.0 - expit(f + gamma1))
}

/// π* for a single covariate row given the treatment model, baseline β and blip ψ.
pub fn pi_star(
    u_hat: &NuisanceModel,
    beta: &[f64],
    psi: &[f64],
    x_row: &[f64],
    spec: &ModelSpec,
) -> f64 {
    let x = DMatrix::from_row_slice(1, x_row.len(), x_row);
    let u = u_hat.linear_predictor_row(&x, 0);
    let f = baseline_predictor(&x, spec, beta)[0];
    let g = blip_at_treatment(&x, spec, psi)[0];
    pi_star_value(u, f, g)
}

/// Columns for the treatment nuisance model (π for count, E(A|Y=0,X) for binary).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NuisanceSpec {
    pub treatment_cols: Vec<usize>,
}

/// How the unweighted outcome regression supplying β̂ / β̂* is fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PluginFit {
    Unpenalized,
    Ridge(f64),
}

/// Fitted nuisances shared by the A-learning, IRGLM and penalized estimators.
#[derive(Debug, Clone)]
pub struct Nuisances {
    pub family: Family,
    pub treatment: NuisanceModel,
    /// Per-row linear predictor of the treatment model.
    pub treatment_lp: DVector<f64>,
    /// Unweighted outcome regression on the stacked design; its β block is the
    /// plug-in β̂ (A-learning) and β̂* (π*).
    pub outcome_theta: DVector<f64>,
}

impl Nuisances {
    pub fn fit(data: &Dataset, spec: &ModelSpec, nspec: &NuisanceSpec, plugin: PluginFit) -> Result<Self> {
        let treatment = match data.family() {
            Family::Count => fit_propensity(data, &nspec.treatment_cols)?,
            Family::Binary => fit_treatment_given_y0(data, &nspec.treatment_cols)?,
        };
        let outcome_theta = outcome_regression(data, spec, plugin)?;
        let treatment_lp = treatment.linear_predictor(data.x());
        Ok(Nuisances {
            family: data.family(),
            treatment,
            treatment_lp,
            outcome_theta,
        })
    }

    /// Re-evaluates the fitted models on another dataset with the same columns.
    pub fn evaluated_on(&self, data: &Dataset) -> Nuisances {
        Nuisances {
            family: self.family,
            treatment: self.treatment.clone(),
            treatment_lp: self.treatment.linear_predictor(data.x()),
            outcome_theta: self.outcome_theta.clone(),
        }
    }

    pub fn beta_plugin(&self, spec: &ModelSpec) -> Vec<f64> {
        self.outcome_theta.rows(0, spec.dim_beta()).iter().copied().collect()
    }

    /// π̂ (count family).
    pub fn pi_hat(&self) -> DVector<f64> {
        self.treatment_lp.map(expit)
    }

    /// π̂*(ψ) per row with the fixed β̂* (binary family).
    pub fn pi_star_vec(&self, data: &Dataset, spec: &ModelSpec, psi: &[f64]) -> DVector<f64> {
        let beta = self.beta_plugin(spec);
        self.pi_star_vec_with_beta(data, spec, &beta, psi)
    }

    pub fn pi_star_vec_with_beta(
        &self,
        data: &Dataset,
        spec: &ModelSpec,
        beta: &[f64],
        psi: &[f64],
    ) -> DVector<f64> {
        let f = baseline_predictor(data.x(), spec, beta);
        let g = blip_at_treatment(data.x(), spec, psi);
        DVector::from_fn(data.n(), |i, _| pi_star_value(self.treatment_lp[i], f[i], g[i]))
    }
}

/// Unweighted outcome regression of y on [1, x^β, a, a·x^ψ].
pub fn outcome_regression(data: &Dataset, spec: &ModelSpec, plugin: PluginFit) -> Result<DVector<f64>> {
    spec.validate_for(data)?;
    let design = design_for(data.x(), data.a(), spec);
    let w = DVector::from_element(data.n(), 1.0);
    match plugin {
        PluginFit::Unpenalized => Ok(weighted_glm_fit(&design, data.y(), &w, spec.link, &IrlsOptions::default())?.coef),
        PluginFit::Ridge(lambda) => {
            let pen = PenaltyConfig::ridge(spec, lambda);
            Ok(penalized_weighted_glm(&design, data.y(), &w, &pen, spec.link, &PenalizedOptions::default(), None)?.coef)
        }
    }
}
