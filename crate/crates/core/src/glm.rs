//! Weighted GLM machinery for the log and logit links.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Link, ModelSpec, ThetaEstimate};
use crate::error::{Error, Result};
use crate::linalg::{weighted_least_squares, PivotedQr};

/// Linear predictors are clamped to ±ETA_CLAMP before mapping to the mean.
pub const ETA_CLAMP: f64 = 30.0;

/// Fitted linear predictors beyond this magnitude (or below −SATURATION for the
/// log link) count as saturated when checking for separation.
const SATURATION: f64 = 20.0;
/// Rows with |η| below this carry curvature for the identifiability check.
const INFORMATIVE: f64 = 10.0;

/// Numerically stable logistic function. Never rounds to exactly 0 for
/// moderate negative inputs.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
        match self {
            Link::Log => eta.exp(),
            Link::Logit => expit(eta),
        }
    }

    /// Variance function evaluated at the mean.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Link::Log => mu,
            Link::Logit => mu * (1.0 - mu),
        }
    }

    /// Quasi-log-likelihood contribution of one observation (clamped predictor).
    pub fn loglik(self, y: f64, eta: f64) -> f64 {
        let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
        match self {
            Link::Log => y * eta - eta.exp(),
            Link::Logit => y * eta - softplus(eta),
        }
    }
}

/// Stacked design with columns `[1, x^β, a, a·x^ψ]`, so that
/// `design · θ = f(x^β; β) + γ(x^ψ, a; ψ)`.
pub fn assemble_design(data: &Dataset, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    spec.validate_for(data)?;
    Ok(design_for(data.x(), data.a(), spec))
}

pub(crate) fn design_for(x: &DMatrix<f64>, a: &DVector<f64>, spec: &ModelSpec) -> DMatrix<f64> {
    let n = x.nrows();
    let nb = spec.dim_beta();
    let mut design = DMatrix::zeros(n, spec.dim());
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (k, &c) in spec.baseline_cols.iter().enumerate() {
            design[(i, k + 1)] = x[(i, c)];
        }
        let ai = a[i];
        design[(i, nb)] = ai;
        if ai != 0.0 {
            for (k, &c) in spec.blip_cols.iter().enumerate() {
                design[(i, nb + 1 + k)] = ai * x[(i, c)];
            }
        }
    }
    design
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsOptions {
    /// Tolerance on the sup-norm of the weighted score, relative to the
    /// largest column sum of |xᵢⱼ| wᵢ (|yᵢ| + μᵢ) (floored at 1).
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coef: DVector<f64>,
    pub iterations: usize,
    /// Sup-norm of Σ xᵢ wᵢ (yᵢ − μᵢ) at `coef`.
    pub score_norm: f64,
}

/// Weighted score Σᵢ xᵢ wᵢ (yᵢ − μᵢ(θ)).
pub fn weighted_score(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    link: Link,
    coef: &DVector<f64>,
) -> DVector<f64> {
    let eta = design * coef;
    let resid = DVector::from_fn(y.len(), |i, _| weights[i] * (y[i] - link.inverse(eta[i])));
    design.tr_mul(&resid)
}

/// Weighted quasi-log-likelihood Σᵢ wᵢ ℓ(yᵢ; ηᵢ).
pub fn weighted_loglik(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    link: Link,
    coef: &DVector<f64>,
) -> f64 {
    let eta = design * coef;
    (0..y.len())
        .filter(|&i| weights[i] > 0.0)
        .map(|i| weights[i] * link.loglik(y[i], eta[i]))
        .sum()
}

/// Solves Σᵢ xᵢ wᵢ (yᵢ − g⁻¹(xᵢᵀθ)) = 0 by IRLS with step-halving.
pub fn weighted_glm_fit(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    link: Link,
    opts: &IrlsOptions,
) -> Result<GlmFit> {
    weighted_glm_fit_offset(design, y, weights, None, link, opts)
}

pub(crate) fn weighted_glm_fit_offset(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    offset: Option<&DVector<f64>>,
    link: Link,
    opts: &IrlsOptions,
) -> Result<GlmFit> {
    let (n, d) = design.shape();
    if y.len() != n || weights.len() != n {
        return Err(Error::Config(format!(
            "design has {n} rows but y/weights have {}/{}",
            y.len(),
            weights.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(weights[i] >= 0.0) || !weights[i].is_finite()) {
        return Err(Error::Config(format!("observation weight {i} is {}", weights[i])));
    }
    let n_pos = weights.iter().filter(|&&w| w > 0.0).count();
    if n_pos < d {
        return Err(Error::Singular {
            columns: (n_pos..d).collect(),
        });
    }
    let zero = DVector::zeros(n);
    let offset = offset.unwrap_or(&zero);

    let ll_at = |coef: &DVector<f64>| -> f64 {
        let eta = design * coef + offset;
        (0..n)
            .filter(|&i| weights[i] > 0.0)
            .map(|i| weights[i] * link.loglik(y[i], eta[i]))
            .sum()
    };

    // Starting means as in standard GLM practice.
    let mut mu = DVector::from_fn(n, |i, _| match link {
        Link::Log => y[i] + 0.1,
        Link::Logit => (y[i] + 0.5) / 2.0,
    });
    let mut eta = DVector::from_fn(n, |i, _| match link {
        Link::Log => mu[i].ln(),
        Link::Logit => (mu[i] / (1.0 - mu[i])).ln(),
    });
    let mut coef: Option<DVector<f64>> = None;
    let mut ll_old = f64::NEG_INFINITY;

    for iter in 1..=opts.max_iter {
        let v = DVector::from_fn(n, |i, _| weights[i] * link.variance(mu[i]));
        let z = DVector::from_fn(n, |i, _| {
            let var = link.variance(mu[i]);
            if var > 0.0 {
                eta[i] - offset[i] + (y[i] - mu[i]) / var
            } else {
                eta[i] - offset[i]
            }
        });
        let mut cand = weighted_least_squares(design, &z, &v)?;
        let mut ll_new = ll_at(&cand);
        if let Some(prev) = &coef {
            let mut halvings = 0;
            while !(ll_new >= ll_old - 1e-12 * ll_old.abs()) && halvings < opts.max_halvings {
                cand = (&cand + prev) * 0.5;
                ll_new = ll_at(&cand);
                halvings += 1;
            }
        }
        eta = design * &cand + offset;
        mu = eta.map(|e| link.inverse(e));
        ll_old = ll_new;

        let resid = DVector::from_fn(n, |i, _| weights[i] * (y[i] - mu[i]));
        let score = design.tr_mul(&resid);
        let score_norm = score.amax();
        // Magnitude of the summands, so the tolerance survives large weights.
        let mass = DVector::from_fn(n, |i, _| weights[i] * (y[i].abs() + mu[i]));
        let scale = design.abs().tr_mul(&mass).amax().max(1.0);
        if !score_norm.is_finite() || cand.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: iter,
                reason: "non-finite iterate".into(),
                last: cand.iter().copied().collect(),
            });
        }
        coef = Some(cand);
        if score_norm < opts.tol * scale {
            let (coef, eta, score_norm) = refine(design, y, weights, offset, link, coef.unwrap(), eta, mu, score_norm);
            check_divergence(design, weights, &eta, link, iter, &coef)?;
            return Ok(GlmFit {
                coef,
                iterations: iter,
                score_norm,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        reason: "score tolerance not reached".into(),
        last: coef.map(|c| c.iter().copied().collect()).unwrap_or_default(),
    })
}

/// One more Newton step from a converged iterate, kept only if the score shrinks.
#[allow(clippy::too_many_arguments)]
fn refine(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    offset: &DVector<f64>,
    link: Link,
    coef: DVector<f64>,
    eta: DVector<f64>,
    mu: DVector<f64>,
    score_norm: f64,
) -> (DVector<f64>, DVector<f64>, f64) {
    let n = y.len();
    let v = DVector::from_fn(n, |i, _| weights[i] * link.variance(mu[i]));
    let z = DVector::from_fn(n, |i, _| {
        let var = link.variance(mu[i]);
        if var > 0.0 {
            eta[i] - offset[i] + (y[i] - mu[i]) / var
        } else {
            eta[i] - offset[i]
        }
    });
    let Ok(cand) = weighted_least_squares(design, &z, &v) else {
        return (coef, eta, score_norm);
    };
    let eta2 = design * &cand + offset;
    let resid = DVector::from_fn(n, |i, _| weights[i] * (y[i] - link.inverse(eta2[i])));
    let s2 = design.tr_mul(&resid).amax();
    if s2 < score_norm {
        (cand, eta2, s2)
    } else {
        (coef, eta, score_norm)
    }
}

/// A converged fit whose non-saturated rows do not identify every coefficient
/// is a separated (divergent) fit rather than a genuine solution.
fn check_divergence(
    design: &DMatrix<f64>,
    weights: &DVector<f64>,
    eta: &DVector<f64>,
    link: Link,
    iterations: usize,
    coef: &DVector<f64>,
) -> Result<()> {
    let n = design.nrows();
    if link == Link::Log {
        if let Some(i) = (0..n).find(|&i| weights[i] > 0.0 && eta[i] > ETA_CLAMP) {
            return Err(Error::NonConvergence {
                iterations,
                reason: format!("log mean diverged at row {i} (eta = {:.1})", eta[i]),
                last: coef.iter().copied().collect(),
            });
        }
    }
    let beyond = |e: f64, t: f64| match link {
        Link::Log => e < -t,
        Link::Logit => e.abs() > t,
    };
    if !(0..n).any(|i| weights[i] > 0.0 && beyond(eta[i], SATURATION)) {
        return Ok(());
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0 && !beyond(eta[i], INFORMATIVE)).collect();
    let sub = DMatrix::from_fn(rows.len(), design.ncols(), |r, j| design[(rows[r], j)]);
    let qr = PivotedQr::new(sub);
    if qr.is_full_rank() {
        Ok(())
    } else {
        Err(Error::NonConvergence {
            iterations,
            reason: format!(
                "fitted probabilities numerically 0 or 1; separation in columns {:?}",
                qr.dependent_columns()
            ),
            last: coef.iter().copied().collect(),
        })
    }
}

/// Quasi-deviance 2[L_sat − L(θ)] of the unweighted mean model at `theta`.
pub fn quasi_deviance(theta: &ThetaEstimate, data: &Dataset, spec: &ModelSpec) -> Result<f64> {
    theta.check_dims(spec)?;
    let design = assemble_design(data, spec)?;
    let eta = &design * theta.theta();
    deviance_from_eta(data.y(), &eta, spec.link)
}

/// Quasi-deviance from linear predictors; means are computed on the clamped scale.
pub fn deviance_from_eta(y: &DVector<f64>, eta: &DVector<f64>, link: Link) -> Result<f64> {
    weighted_deviance_from_eta(y, eta, None, link)
}

/// Σᵢ wᵢ dᵢ over per-observation deviance contributions; `None` means unit weights.
pub fn weighted_deviance_from_eta(
    y: &DVector<f64>,
    eta: &DVector<f64>,
    weights: Option<&DVector<f64>>,
    link: Link,
) -> Result<f64> {
    let mut dev = 0.0;
    for i in 0..y.len() {
        let wi = weights.map_or(1.0, |w| w[i]);
        let e = eta[i];
        if !e.is_finite() {
            return Err(Error::Domain(format!("linear predictor {i} is {e}")));
        }
        let e = e.clamp(-ETA_CLAMP, ETA_CLAMP);
        let yi = y[i];
        dev += wi * match link {
            Link::Log => {
                let mu = e.exp();
                let ylog = if yi > 0.0 { yi * (yi.ln() - e) } else { 0.0 };
                ylog - (yi - mu)
            }
            // y log(y/μ) + (1−y) log((1−y)/(1−μ)) with y ∈ {0,1}
            Link::Logit => yi * softplus(-e) + (1.0 - yi) * softplus(e),
        };
    }
    Ok(2.0 * dev.max(0.0))
}

/// Quasi-deviance from fitted means, with the 0·log 0 = 0 convention.
pub fn deviance_from_means(y: &DVector<f64>, mu: &DVector<f64>, link: Link) -> Result<f64> {
    let xlogx = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
    let mut dev = 0.0;
    for i in 0..y.len() {
        let (yi, mi) = (y[i], mu[i]);
        dev += match link {
            Link::Log => {
                if !(mi > 0.0 && mi.is_finite()) {
                    return Err(Error::Domain(format!("mean {i} = {mi} outside (0, inf)")));
                }
                xlogx(yi, mi) - (yi - mi)
            }
            Link::Logit => {
                if !(mi > 0.0 && mi < 1.0) {
                    return Err(Error::Domain(format!("mean {i} = {mi} outside (0, 1)")));
                }
                xlogx(yi, mi) + xlogx(1.0 - yi, 1.0 - mi)
            }
        };
    }
    Ok(2.0 * dev)
}
