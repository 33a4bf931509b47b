//! Doubly robust estimation by iteratively reweighted GLM.
//!
//! Count outcomes use weights |a − π̂|·exp{−γ(x,a;ψ̃)}; binary outcomes use
//! |a − π̂*(ψ̃)| with π* built from E(A|Y=0,X) and a fixed plug-in β̂*.
//! Each outer iteration freezes the weights and fits a weighted GLM on the
//! stacked design.

use nalgebra::{DMatrix, DVector};

use crate::alearn::{damped_newton, NewtonOptions};
use crate::data::{blip_at_treatment, Dataset, Family, ModelSpec, ThetaEstimate};
use crate::error::{Error, Result};
use crate::glm::{assemble_design, weighted_glm_fit, IrlsOptions, ETA_CLAMP};
use crate::linalg::inverse;
use crate::nuisance::{pi_star_dgamma, Nuisances};

#[derive(Debug, Clone, Copy)]
pub struct IrglmConfig {
    /// Tolerance on ‖ψ_t − ψ_{t−1}‖₂.
    pub eps: f64,
    pub max_outer: usize,
    pub inner: IrlsOptions,
    /// Recompute π* with the current β instead of the fixed β̂*. Off by default;
    /// not part of the published algorithm.
    pub pi_star_tracks_beta: bool,
    /// Newton steps on the estimating function after the outer loop stops,
    /// kept only while they reduce its sup-norm.
    pub polish_steps: usize,
    /// Anderson acceleration of the ψ̃ sequence. Same fixed point, far fewer
    /// outer iterations when the plain map contracts slowly or oscillates.
    pub accelerate: bool,
}

impl Default for IrglmConfig {
    fn default() -> Self {
        IrglmConfig {
            eps: 1e-6,
            max_outer: 50,
            inner: IrlsOptions::default(),
            pi_star_tracks_beta: false,
            polish_steps: 5,
            accelerate: true,
        }
    }
}

impl IrglmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// wᵢ = |aᵢ − π̂ᵢ| · exp{−γ(xᵢ, aᵢ; ψ̃)}.
pub fn weights_count(
    a: &DVector<f64>,
    pi_hat: &DVector<f64>,
    psi_tilde: &[f64],
    data: &Dataset,
    spec: &ModelSpec,
) -> DVector<f64> {
    let g1 = blip_at_treatment(data.x(), spec, psi_tilde);
    DVector::from_fn(a.len(), |i, _| {
        let g = (a[i] * g1[i]).clamp(-ETA_CLAMP, ETA_CLAMP);
        (a[i] - pi_hat[i]).abs() * (-g).exp()
    })
}

/// wᵢ = |aᵢ − π̂*ᵢ|.
pub fn weights_binary(a: &DVector<f64>, pi_star_vec: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(a.len(), |i, _| (a[i] - pi_star_vec[i]).abs())
}

/// Frozen observation weights at blip ψ. `beta` overrides the plug-in β̂* inside π*.
pub(crate) fn frozen_weights(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    beta: Option<&[f64]>,
    psi: &[f64],
) -> DVector<f64> {
    match data.family() {
        Family::Count => weights_count(data.a(), &nuisances.pi_hat(), psi, data, spec),
        Family::Binary => {
            let ps = match beta {
                Some(b) => nuisances.pi_star_vec_with_beta(data, spec, b, psi),
                None => nuisances.pi_star_vec(data, spec, psi),
            };
            weights_binary(data.a(), &ps)
        }
    }
}

/// Outer fixed-point loop shared by the unpenalized and ridge-penalized
/// estimators. `inner(weights, warm)` returns the stacked θ.
pub(crate) fn reweighting_loop<F>(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    psi_init: &[f64],
    cfg: &IrglmConfig,
    mut inner: F,
) -> Result<(DVector<f64>, usize)>
where
    F: FnMut(&DVector<f64>, Option<&DVector<f64>>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    if psi_init.len() != spec.dim_psi() {
        return Err(Error::Config(format!(
            "initial ψ has length {}, spec needs {}",
            psi_init.len(),
            spec.dim_psi()
        )));
    }
    let db = spec.dim_beta();
    let k = spec.dim_psi();
    let mut theta: Option<DVector<f64>> = None;
    let mut trace: Vec<Vec<f64>> = Vec::new();
    // One outer iteration: freeze weights at ψ̃, refit, return the new ψ.
    let mut map = |psi_tilde: &[f64], theta: &mut Option<DVector<f64>>| -> Result<Vec<f64>> {
        let beta_now: Option<Vec<f64>> = match (theta.as_ref(), cfg.pi_star_tracks_beta) {
            (Some(th), true) => Some(th.rows(0, db).iter().copied().collect()),
            _ => None,
        };
        let w = frozen_weights(data, spec, nuisances, beta_now.as_deref(), psi_tilde);
        let next = inner(&w, theta.as_ref())?;
        let psi: Vec<f64> = next.rows(db, k).iter().copied().collect();
        *theta = Some(next);
        Ok(psi)
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();

    let mut psi_tilde = psi_init.to_vec();
    let mut t = 0;
    if cfg.accelerate && !cfg.pi_star_tracks_beta {
        // Anderson mixing on ψ̃ ↦ ψ with a short memory; history is dropped
        // whenever the fixed-point residual grows past its best value.
        const MEMORY: usize = 5;
        let mut df: Vec<DVector<f64>> = Vec::new();
        let mut dg: Vec<DVector<f64>> = Vec::new();
        let mut last: Option<(DVector<f64>, DVector<f64>)> = None;
        let mut best = f64::INFINITY;
        while t < cfg.max_outer {
            let g = DVector::from_vec(map(&psi_tilde, &mut theta)?);
            t += 1;
            trace.push(g.iter().copied().collect());
            let x = DVector::from_column_slice(&psi_tilde);
            let f = &g - &x;
            let res = f.norm();
            if res < cfg.eps {
                return Ok((theta.unwrap(), t));
            }
            if res > 10.0 * best {
                df.clear();
                dg.clear();
                last = None;
            }
            best = best.min(res);
            if let Some((f_prev, g_prev)) = last.take() {
                df.push(&f - f_prev);
                dg.push(&g - g_prev);
                if df.len() > MEMORY {
                    df.remove(0);
                    dg.remove(0);
                }
            }
            last = Some((f.clone(), g.clone()));
            let next = if df.is_empty() {
                g
            } else {
                let fm = DMatrix::from_columns(&df);
                let gm = DMatrix::from_columns(&dg);
                match fm.clone().svd(true, true).solve(&f, 1e-12) {
                    Ok(coef) if coef.iter().all(|c| c.is_finite()) => &g - gm * coef,
                    _ => g,
                }
            };
            psi_tilde = next.iter().copied().collect();
        }
        } else {
        let mut prev_step = f64::INFINITY;
        let mut growing = 0;
        while t < cfg.max_outer {
            let psi = map(&psi_tilde, &mut theta)?;
            t += 1;
            let step = dist(&psi, &psi_tilde);
            trace.push(psi.clone());
            if step < cfg.eps {
                return Ok((theta.unwrap(), t));
            }
            growing = if step > prev_step { growing + 1 } else { 0 };
            prev_step = step;
            if growing >= 3 {
                psi_tilde = psi.iter().zip(&psi_tilde).map(|(a, b)| 0.5 * (a + b)).collect();
                growing = 0;
            } else {
                psi_tilde = psi;
            }
        }
    }
    Err(Error::OuterNonConvergence {
        iterations: cfg.max_outer,
        trace,
    })
}

/// Per-observation contributions Uᵢ = Xᵢ wᵢ(ψ) (yᵢ − μᵢ) and their θ-derivatives.
struct Contributions {
    /// n × d
    scores: DMatrix<f64>,
    /// Σᵢ ∂Uᵢ/∂θ (d × d), not averaged
    jacobian: DMatrix<f64>,
}

fn contributions(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    theta: &DVector<f64>,
    with_jacobian: bool,
) -> Result<Contributions> {
    let design = assemble_design(data, spec)?;
    let (n, d) = design.shape();
    let db = spec.dim_beta();
    let est = ThetaEstimate::from_theta(spec, theta);
    let w = frozen_weights(data, spec, nuisances, None, &est.psi);
    let eta = &design * theta;
    let link = spec.link;
    // ∂wᵢ/∂γ(xᵢ,1) for binary; count uses ∂wᵢ/∂ψ = −wᵢ·(a x̃) directly.
    let dw_binary: Option<DVector<f64>> = match data.family() {
        Family::Binary => {
            let f = crate::data::baseline_predictor(data.x(), spec, &nuisances.beta_plugin(spec));
            let g1 = blip_at_treatment(data.x(), spec, &est.psi);
            Some(DVector::from_fn(n, |i, _| {
                (1.0 - 2.0 * data.a()[i]) * pi_star_dgamma(nuisances.treatment_lp[i], f[i], g1[i])
            }))
        }
        Family::Count => None,
    };
    let mut scores = DMatrix::zeros(n, d);
    let mut jacobian = DMatrix::zeros(d, d);
    let mut dwi = vec![0.0; d];
    for i in 0..n {
        let mu = link.inverse(eta[i]);
        let r = data.y()[i] - mu;
        for j in 0..d {
            scores[(i, j)] = design[(i, j)] * w[i] * r;
        }
        if !with_jacobian {
            continue;
        }
        let dmu = if eta[i].abs() < ETA_CLAMP { link.variance(mu) } else { 0.0 };
        for (j, v) in dwi.iter_mut().enumerate() {
            *v = if j < db {
                0.0
            } else {
                match &dw_binary {
                    None => -w[i] * design[(i, j)],
                    Some(s) => {
                        let xt = if j == db { 1.0 } else { data.x()[(i, spec.blip_cols[j - db - 1])] };
                        s[i] * xt
                    }
                }
            };
        }
        for c in 0..d {
            let xc = design[(i, c)];
            if xc == 0.0 {
                continue;
            }
            for k in 0..d {
                jacobian[(c, k)] += xc * (r * dwi[k] - w[i] * dmu * design[(i, k)]);
            }
        }
    }
    Ok(Contributions { scores, jacobian })
}

/// Averaged estimating function n⁻¹ Σᵢ Uᵢ(θ) (U3 for count, U4 for binary).
pub fn estimating_function(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c = contributions(data, spec, nuisances, theta, false)?;
    let n = data.n() as f64;
    Ok(DVector::from_fn(theta.len(), |j, _| c.scores.column(j).sum() / n))
}

/// n⁻¹ Σᵢ ∂Uᵢ/∂θ, analytic.
pub fn estimating_jacobian(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let c = contributions(data, spec, nuisances, theta, true)?;
    Ok(c.jacobian / data.n() as f64)
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn polish(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    theta: DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, f64)> {
    let res0 = sup(&estimating_function(data, spec, nuisances, &theta)?);
    if steps == 0 {
        return Ok((theta, res0));
    }
    let opts = NewtonOptions {
        tol: 0.0,
        max_iter: steps,
        max_halvings: 5,
    };
    let eval = |t: &DVector<f64>| match contributions(data, spec, nuisances, t, true) {
        Ok(c) => {
            let n = data.n() as f64;
            let u = DVector::from_fn(t.len(), |j, _| c.scores.column(j).sum() / n);
            (u, c.jacobian / n)
        }
        Err(_) => (DVector::from_element(t.len(), f64::NAN), DMatrix::identity(t.len(), t.len())),
    };
    let last = match damped_newton(eval, theta.clone(), &opts) {
        Ok((t, _, _)) => t,
        Err(Error::NonConvergence { last, .. }) => DVector::from_vec(last),
        Err(_) => return Ok((theta, res0)),
    };
    let res1 = sup(&estimating_function(data, spec, nuisances, &last)?);
    if res1 < res0 {
        Ok((last, res1))
    } else {
        Ok((theta, res0))
    }
}

/// Iteratively reweighted GLM: freeze weights at ψ̃, fit the weighted GLM on
/// [1, x^β, a, a·x^ψ], update ψ̃, until ‖ψ_t − ψ_{t−1}‖₂ < eps.
pub fn irglm_fit(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    psi_init: &[f64],
    cfg: &IrglmConfig,
) -> Result<ThetaEstimate> {
    if nuisances.family != data.family() {
        return Err(Error::Config("nuisances fitted for a different outcome family".into()));
    }
    let design = assemble_design(data, spec)?;
    let (theta, outer) = reweighting_loop(data, spec, nuisances, psi_init, cfg, |w, _| {
        Ok(weighted_glm_fit(&design, data.y(), w, spec.link, &cfg.inner)?.coef)
    })?;
    let steps = if cfg.pi_star_tracks_beta { 0 } else { cfg.polish_steps };
    let (theta, res) = polish(data, spec, nuisances, theta, steps)?;
    let mut est = ThetaEstimate::from_theta(spec, &theta);
    est.iterations = outer;
    est.final_residual_norm = res;
    Ok(est)
}

/// n⁻¹ Ĵ⁻¹ Î Ĵ⁻ᵀ with Ĵ = −n⁻¹ Σ ∂Uᵢ/∂θ and Î = n⁻¹ Σ Uᵢ Uᵢᵀ at θ̂.
pub fn sandwich_variance(
    data: &Dataset,
    spec: &ModelSpec,
    theta_hat: &ThetaEstimate,
    nuisances: &Nuisances,
) -> Result<DMatrix<f64>> {
    theta_hat.check_dims(spec)?;
    if !theta_hat.converged {
        return Err(Error::Estimation("sandwich variance needs a converged estimate".into()));
    }
    let theta = theta_hat.theta();
    let c = contributions(data, spec, nuisances, &theta, true)?;
    let n = data.n() as f64;
    let j = -c.jacobian / n;
    let i_mat = c.scores.tr_mul(&c.scores) / n;
    let j_inv = inverse(&j)?;
    let cov = &j_inv * i_mat * j_inv.transpose() / n;
    Ok((&cov + cov.transpose()) * 0.5)
}
