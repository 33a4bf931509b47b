//! Unpenalized A-learning for count (log link) and binary (logit link) outcomes.
//!
//! Both estimating functions are averaged over observations and solved in ψ
//! by damped Newton from ψ = 0 with the baseline fixed at a plug-in β̂.

use nalgebra::{DMatrix, DVector};

use crate::data::{baseline_predictor, Dataset, Family, ModelSpec};
use crate::error::{Error, Result};
use crate::glm::{expit, ETA_CLAMP};
use crate::linalg::PivotedQr;
use crate::nuisance::{pi_star_dgamma, pi_star_value, NuisanceModel};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Sup-norm tolerance on the averaged estimating function.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 10,
        }
    }
}

fn exp_clamped(t: f64) -> f64 {
    t.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

/// Rows of [1, x^ψ].
pub(crate) fn blip_rows(x: &DMatrix<f64>, spec: &ModelSpec) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), spec.dim_psi(), |i, j| {
        if j == 0 {
            1.0
        } else {
            x[(i, spec.blip_cols[j - 1])]
        }
    })
}

fn check_inputs(data: &Dataset, spec: &ModelSpec, family: Family, beta: &[f64], psi_len: Option<usize>) -> Result<()> {
    spec.validate_for(data)?;
    if data.family() != family {
        return Err(Error::Config(format!("expected {} outcomes", family.as_str())));
    }
    if beta.len() != spec.dim_beta() {
        return Err(Error::Config(format!("plug-in β has length {}, need {}", beta.len(), spec.dim_beta())));
    }
    if let Some(l) = psi_len {
        if l != spec.dim_psi() {
            return Err(Error::Config(format!("ψ has length {l}, need {}", spec.dim_psi())));
        }
    }
    Ok(())
}

/// n⁻¹ Σ x̃ (a − π̂) (y e^{−γ} − e^{f}), γ = a·x̃ᵀψ.
pub fn u1(data: &Dataset, spec: &ModelSpec, pi_hat: &DVector<f64>, beta_plugin: &[f64], psi: &[f64]) -> DVector<f64> {
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    u1_parts(&xt, &f, data.a(), data.y(), pi_hat, psi).0
}

/// ∂U1/∂ψ = −n⁻¹ Σ x̃ (a − π̂) a y e^{−γ} x̃ᵀ.
pub fn u1_jacobian(data: &Dataset, spec: &ModelSpec, pi_hat: &DVector<f64>, beta_plugin: &[f64], psi: &[f64]) -> DMatrix<f64> {
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    u1_parts(&xt, &f, data.a(), data.y(), pi_hat, psi).1
}

fn u1_parts(
    xt: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DVector<f64>,
    y: &DVector<f64>,
    pi_hat: &DVector<f64>,
    psi: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, k) = xt.shape();
    let mut u = DVector::zeros(k);
    let mut j = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = xt.row(i);
        let g = a[i] * (0..k).map(|c| row[c] * psi[c]).sum::<f64>();
        let e = exp_clamped(-g);
        let resid = a[i] - pi_hat[i];
        let r = resid * (y[i] * e - exp_clamped(f[i]));
        let dj = -resid * a[i] * y[i] * e;
        for c in 0..k {
            u[c] += row[c] * r;
            if dj != 0.0 {
                for d in 0..k {
                    j[(c, d)] += dj * row[c] * row[d];
                }
            }
        }
    }
    let nf = n as f64;
    (u / nf, j / nf)
}

/// n⁻¹ Σ x̃ (a − π*(ψ)) (y − expit(f + γ)), with π* from the treatment-given-Y=0
/// linear predictor `u_lp`.
pub fn u2(data: &Dataset, spec: &ModelSpec, u_lp: &DVector<f64>, beta_plugin: &[f64], psi: &[f64]) -> DVector<f64> {
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    u2_parts(&xt, &f, data.a(), data.y(), u_lp, psi).0
}

pub fn u2_jacobian(data: &Dataset, spec: &ModelSpec, u_lp: &DVector<f64>, beta_plugin: &[f64], psi: &[f64]) -> DMatrix<f64> {
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    u2_parts(&xt, &f, data.a(), data.y(), u_lp, psi).1
}

fn u2_parts(
    xt: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DVector<f64>,
    y: &DVector<f64>,
    u_lp: &DVector<f64>,
    psi: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, k) = xt.shape();
    let mut u = DVector::zeros(k);
    let mut j = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = xt.row(i);
        let g1 = (0..k).map(|c| row[c] * psi[c]).sum::<f64>();
        let ps = pi_star_value(u_lp[i], f[i], g1);
        let dps = pi_star_dgamma(u_lp[i], f[i], g1);
        let m = expit(f[i] + a[i] * g1);
        let r = (a[i] - ps) * (y[i] - m);
        let dj = -dps * (y[i] - m) - (a[i] - ps) * a[i] * m * (1.0 - m);
        for c in 0..k {
            u[c] += row[c] * r;
            for d in 0..k {
                j[(c, d)] += dj * row[c] * row[d];
            }
        }
    }
    let nf = n as f64;
    (u / nf, j / nf)
}

/// Iterates beyond this sup-norm are treated as running off to infinity.
const DIVERGED: f64 = 1e2;

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on a square system: full step, halved up to `max_halvings`
/// times while ‖U‖₂ does not decrease. The Jacobian at the returned root must
/// be nonsingular.
pub fn damped_newton<F>(mut eval: F, x0: DVector<f64>, opts: &NewtonOptions) -> Result<(DVector<f64>, usize, f64)>
where
    F: FnMut(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut x = x0;
    let (mut u, mut jac) = eval(&x);
    for iter in 0..=opts.max_iter {
        let qr = PivotedQr::new(jac.clone());
        if !qr.is_full_rank() {
            return Err(Error::Singular {
                columns: qr.dependent_columns(),
            });
        }
        let res = sup(&u);
        if !res.is_finite() {
            break;
        }
        if res < opts.tol {
            return Ok((x, iter, res));
        }
        if iter == opts.max_iter {
            break;
        }
        let step = qr.solve(&(-&u))?;
        let base = u.norm();
        let mut t = 1.0;
        let mut cand = &x + &step;
        let (mut cu, mut cj) = eval(&cand);
        let mut halvings = 0;
        while !(cu.norm() < base) && halvings < opts.max_halvings {
            t *= 0.5;
            cand = &x + &step * t;
            (cu, cj) = eval(&cand);
            halvings += 1;
        }
        x = cand;
        u = cu;
        jac = cj;
        if x.amax() > DIVERGED {
            return Err(Error::NonConvergence {
                iterations: iter + 1,
                reason: format!("iterates diverge (|ψ| > {DIVERGED:.0e}); the estimating equation has no finite root on this sample"),
                last: x.iter().copied().collect(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        reason: format!("estimating function sup-norm {:.3e} above {:.1e}", sup(&u), opts.tol),
        last: x.iter().copied().collect(),
    })
}

/// Root of U1 in ψ, starting from ψ = 0.
pub fn solve_u1(
    data: &Dataset,
    spec: &ModelSpec,
    pi_hat: &DVector<f64>,
    beta_plugin: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<f64>> {
    check_inputs(data, spec, Family::Count, beta_plugin, None)?;
    if pi_hat.len() != data.n() || pi_hat.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("π̂ must have one entry in [0,1] per row".into()));
    }
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    let (psi, _, _) = damped_newton(
        |p| u1_parts(&xt, &f, data.a(), data.y(), pi_hat, p.as_slice()),
        DVector::zeros(spec.dim_psi()),
        opts,
    )?;
    Ok(psi.iter().copied().collect())
}

/// Root of U2 in ψ, with π*(ψ) refreshed at each Newton iterate.
pub fn solve_u2(
    data: &Dataset,
    spec: &ModelSpec,
    u_hat: &NuisanceModel,
    beta_plugin: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<f64>> {
    check_inputs(data, spec, Family::Binary, beta_plugin, None)?;
    let u_lp = u_hat.linear_predictor(data.x());
    let xt = blip_rows(data.x(), spec);
    let f = baseline_predictor(data.x(), spec, beta_plugin);
    let (psi, _, _) = damped_newton(
        |p| u2_parts(&xt, &f, data.a(), data.y(), &u_lp, p.as_slice()),
        DVector::zeros(spec.dim_psi()),
        opts,
    )?;
    Ok(psi.iter().copied().collect())
}
