//! Penalized doubly robust estimation: a penalized weighted GLM with frozen
//! observation weights, solved by cyclic coordinate descent on the IRLS
//! quadratic approximation.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Link, ModelSpec, ThetaEstimate};
use crate::drglm::{frozen_weights, reweighting_loop, IrglmConfig};
use crate::error::{Error, Result};
use crate::glm::{assemble_design, weighted_glm_fit, IrlsOptions};
use crate::nuisance::Nuisances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Lasso,
    Ridge,
    ModifiedAdaptive,
}

/// Penalty λ Σ_j w_j |θ_j| (lasso kinds) or λ Σ_j w_j θ_j² (ridge).
/// A weight of zero leaves a coefficient unpenalized; an infinite weight pins it at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub w_beta: Vec<f64>,
    pub w_psi: Vec<f64>,
}

impl PenaltyConfig {
    fn unit(spec: &ModelSpec, kind: PenaltyKind, lambda: f64) -> Self {
        let mut w_beta = vec![1.0; spec.dim_beta()];
        let mut w_psi = vec![1.0; spec.dim_psi()];
        w_beta[0] = 0.0;
        w_psi[0] = 0.0;
        PenaltyConfig {
            kind,
            lambda,
            w_beta,
            w_psi,
        }
    }

    pub fn lasso(spec: &ModelSpec, lambda: f64) -> Self {
        Self::unit(spec, PenaltyKind::Lasso, lambda)
    }

    pub fn ridge(spec: &ModelSpec, lambda: f64) -> Self {
        Self::unit(spec, PenaltyKind::Ridge, lambda)
    }

    pub fn modified_adaptive(spec: &ModelSpec, theta_ini: &ThetaEstimate, lambda: f64) -> Result<Self> {
        let (w_beta, w_psi) = modified_adaptive_weights(theta_ini, spec)?;
        Ok(PenaltyConfig {
            kind: PenaltyKind::ModifiedAdaptive,
            lambda,
            w_beta,
            w_psi,
        })
    }

    /// Penalty over an arbitrary design, one weight per column.
    pub fn custom(kind: PenaltyKind, lambda: f64, weights: Vec<f64>) -> Self {
        PenaltyConfig {
            kind,
            lambda,
            w_beta: weights,
            w_psi: Vec::new(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltyConfig {
            lambda,
            ..self.clone()
        }
    }

    /// Weights over the stacked θ = (β, ψ).
    pub fn weights(&self) -> Vec<f64> {
        self.w_beta.iter().chain(&self.w_psi).copied().collect()
    }

    pub fn unpenalized(&self) -> Vec<usize> {
        self.weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w == 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        let w = self.weights();
        if w.len() != d {
            return Err(Error::Config(format!("{} penalty weights for {d} coefficients", w.len())));
        }
        if let Some(v) = w.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("negative or NaN penalty weight {v}")));
        }
        Ok(())
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// ŵ^β_j = 1/max(|β̂_j|, |ψ̂_j|) and ŵ^ψ_j = 1/|ψ̂_j| from an initial estimate.
/// Baseline terms without a blip partner get 1/|β̂_j|. Intercept and ψ₀ get 0;
/// a zero denominator gives +∞.
pub fn modified_adaptive_weights(theta_ini: &ThetaEstimate, spec: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    theta_ini.check_dims(spec)?;
    let inv = |v: f64| if v == 0.0 { f64::INFINITY } else { 1.0 / v };
    let mut partner = vec![0.0; spec.dim_beta()];
    for (pj, bj) in spec.heredity_pairs() {
        partner[bj] = theta_ini.psi[pj].abs();
    }
    let mut w_beta: Vec<f64> = (0..spec.dim_beta())
        .map(|j| inv(theta_ini.beta[j].abs().max(partner[j])))
        .collect();
    let mut w_psi: Vec<f64> = theta_ini.psi.iter().map(|v| inv(v.abs())).collect();
    w_beta[0] = 0.0;
    w_psi[0] = 0.0;
    Ok((w_beta, w_psi))
}

#[derive(Debug, Clone, Copy)]
pub struct PenalizedOptions {
    /// Tolerance on the KKT residual of the (1/n)-scaled problem.
    pub tol: f64,
    /// Coordinate descent stops when no coefficient moves by more than this.
    pub cd_tol: f64,
    pub max_iter: usize,
    pub max_sweeps: usize,
    pub max_halvings: usize,
}

impl Default for PenalizedOptions {
    fn default() -> Self {
        PenalizedOptions {
            tol: 1e-6,
            cd_tol: 1e-9,
            max_iter: 100,
            max_sweeps: 10_000,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Penalized objective −(1/n) Σ wᵢ ℓᵢ + penalty at `coef`.
    pub objective: f64,
}

fn penalty_value(theta: &DVector<f64>, w: &[f64], pen: &PenaltyConfig) -> f64 {
    let s: f64 = (0..theta.len())
        .filter(|&j| w[j].is_finite() && w[j] > 0.0)
        .map(|j| match pen.kind {
            PenaltyKind::Ridge => w[j] * theta[j] * theta[j],
            _ => w[j] * theta[j].abs(),
        })
        .sum();
    pen.lambda * s
}

/// Penalized objective −(1/n) Σ wᵢ ℓ(yᵢ; xᵢᵀθ) + P(θ).
pub fn penalized_objective(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    penalty: &PenaltyConfig,
    link: Link,
    theta: &DVector<f64>,
) -> f64 {
    let n = design.nrows() as f64;
    let eta = design * theta;
    let ll: f64 = (0..y.len())
        .filter(|&i| weights[i] > 0.0)
        .map(|i| weights[i] * link.loglik(y[i], eta[i]))
        .sum();
    -ll / n + penalty_value(theta, &penalty.weights(), penalty)
}

/// KKT residual given the (1/n)-scaled score `g` at `theta`.
pub fn kkt_residual(theta: &DVector<f64>, g: &DVector<f64>, penalty: &PenaltyConfig) -> f64 {
    let w = penalty.weights();
    let lam = penalty.lambda;
    (0..theta.len())
        .filter(|&j| w[j].is_finite())
        .map(|j| {
            let t = lam * w[j];
            match penalty.kind {
                PenaltyKind::Ridge => (g[j] - 2.0 * t * theta[j]).abs(),
                _ if theta[j] != 0.0 => (g[j] - t * theta[j].signum()).abs(),
                _ => (g[j].abs() - t).max(0.0),
            }
        })
        .fold(0.0, f64::max)
}

struct Quadratic {
    /// (1/n) Xᵀ W (y − μ)
    g: DVector<f64>,
    /// (1/n) Xᵀ diag(w·V(μ)) X
    h: DMatrix<f64>,
}

fn quadratic_at(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    link: Link,
    theta: &DVector<f64>,
) -> Quadratic {
    let (n, d) = design.shape();
    let eta = design * theta;
    let mut scaled = DMatrix::zeros(n, d);
    let mut resid = DVector::zeros(n);
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        let mu = link.inverse(eta[i]);
        resid[i] = weights[i] * (y[i] - mu);
        let s = (weights[i] * link.variance(mu)).sqrt();
        for j in 0..d {
            scaled[(i, j)] = s * design[(i, j)];
        }
    }
    let nf = n as f64;
    Quadratic {
        g: design.tr_mul(&resid) / nf,
        h: scaled.tr_mul(&scaled) / nf,
    }
}

/// Exact minimizer of the ridge quadratic over the free coordinates:
/// (H + 2λW) b = g + Hθ, others held at θ (or 0 when pinned).
fn ridge_step(q: &Quadratic, theta: &DVector<f64>, w: &[f64], lambda: f64, free: &[usize]) -> Option<DVector<f64>> {
    let m = free.len();
    let sys = DMatrix::from_fn(m, m, |r, c| {
        q.h[(free[r], free[c])] + if r == c { 2.0 * lambda * w[free[r]] } else { 0.0 }
    });
    let rhs = DVector::from_fn(m, |r, _| {
        let j = free[r];
        q.g[j] + free.iter().map(|&k| q.h[(j, k)] * theta[k]).sum::<f64>()
    });
    let sol = sys.cholesky()?.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut b = DVector::from_fn(theta.len(), |j, _| if w[j].is_finite() { theta[j] } else { 0.0 });
    for (r, &j) in free.iter().enumerate() {
        b[j] = sol[r];
    }
    Some(b)
}

/// Coordinate descent on −gᵀΔ + ½ΔᵀHΔ + P(θ+Δ). Returns the new point.
fn coordinate_descent(
    q: &Quadratic,
    theta: &DVector<f64>,
    w: &[f64],
    pen: &PenaltyConfig,
    opts: &PenalizedOptions,
) -> DVector<f64> {
    let d = theta.len();
    let free: Vec<usize> = (0..d).filter(|&j| w[j].is_finite() && q.h[(j, j)] > 0.0).collect();
    if pen.kind == PenaltyKind::Ridge {
        if let Some(b) = ridge_step(q, theta, w, pen.lambda, &free) {
            return b;
        }
    }
    let mut b = theta.clone();
    // hd = H (b − θ)
    let mut hd = DVector::zeros(d);
    let update = |j: usize, b: &mut DVector<f64>, hd: &mut DVector<f64>| -> f64 {
        let hjj = q.h[(j, j)];
        let z = hjj * b[j] + q.g[j] - hd[j];
        let t = pen.lambda * w[j];
        let new = match pen.kind {
            PenaltyKind::Ridge => z / (hjj + 2.0 * t),
            _ => soft_threshold(z, t) / hjj,
        };
        let delta = new - b[j];
        if delta != 0.0 {
            b[j] = new;
            for k in 0..d {
                hd[k] += q.h[(k, j)] * delta;
            }
        }
        delta.abs()
    };

    let mut sweeps = 0;
    loop {
        // full sweep
        let mut max_change = 0.0_f64;
        for &j in &free {
            max_change = max_change.max(update(j, &mut b, &mut hd));
        }
        sweeps += 1;
        if max_change < opts.cd_tol || sweeps >= opts.max_sweeps {
            break;
        }
        // active set until it settles
        let active: Vec<usize> = free.iter().copied().filter(|&j| b[j] != 0.0 || w[j] == 0.0).collect();
        loop {
            let mut change = 0.0_f64;
            for &j in &active {
                change = change.max(update(j, &mut b, &mut hd));
            }
            sweeps += 1;
            if change < opts.cd_tol || sweeps >= opts.max_sweeps {
                break;
            }
        }
    }
    for j in 0..d {
        if !w[j].is_finite() {
            b[j] = 0.0;
        }
    }
    b
}

/// Minimizes −(1/n) Σᵢ wᵢ ℓ(yᵢ; xᵢᵀθ) + P(θ) by proximal Newton steps:
/// an IRLS quadratic approximation solved with coordinate descent, followed
/// by step-halving on the penalized objective.
pub fn penalized_weighted_glm(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    penalty: &PenaltyConfig,
    link: Link,
    opts: &PenalizedOptions,
    warm: Option<&DVector<f64>>,
) -> Result<PenalizedFit> {
    let d = design.ncols();
    penalty.validate(d)?;
    if y.len() != design.nrows() || weights.len() != design.nrows() {
        return Err(Error::Config("design, outcome and weights disagree in length".into()));
    }
    let w = penalty.weights();
    let mut theta = match warm {
        Some(t) if t.len() == d => t.clone(),
        Some(t) => return Err(Error::Config(format!("warm start has length {}, need {d}", t.len()))),
        None => DVector::zeros(d),
    };
    for j in 0..d {
        if !w[j].is_finite() {
            theta[j] = 0.0;
        }
    }
    let objective = |t: &DVector<f64>| penalized_objective(design, y, weights, penalty, link, t);
    let mut f_old = objective(&theta);

    for iter in 0..=opts.max_iter {
        let q = quadratic_at(design, y, weights, link, &theta);
        let kkt = kkt_residual(&theta, &q.g, penalty);
        if kkt < opts.tol {
            return Ok(PenalizedFit {
                coef: theta,
                iterations: iter,
                kkt_residual: kkt,
                objective: f_old,
            });
        }
        if iter == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: iter,
                reason: format!("KKT residual {kkt:.3e} above {:.1e}", opts.tol),
                last: theta.iter().copied().collect(),
            });
        }
        let target = coordinate_descent(&q, &theta, &w, penalty, opts);
        let dir = &target - &theta;
        let f_full = objective(&target);
        let accept = |f: f64| f <= f_old + 1e-13 * f_old.abs();
        let (mut cand, mut f_new) = (target.clone(), f_full);
        let mut step = 1.0;
        let mut halvings = 0;
        while !accept(f_new) && halvings < opts.max_halvings {
            step *= 0.5;
            cand = &theta + &dir * step;
            f_new = objective(&cand);
            halvings += 1;
        }
        // Near the optimum the objective change is lost in rounding; take the
        // full step there instead of a vanishing one.
        if !accept(f_new) && (f_full - f_old).abs() <= 1e-10 * (1.0 + f_old.abs()) {
            cand = target;
            f_new = f_full;
        }
        if !f_new.is_finite() || cand.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: iter + 1,
                reason: "non-finite penalized iterate".into(),
                last: theta.iter().copied().collect(),
            });
        }
        theta = cand;
        f_old = f_new;
    }
    unreachable!()
}

/// Smallest λ at which every penalized coefficient is zero, given the
/// frozen observation weights.
pub fn lambda_max(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    penalty: &PenaltyConfig,
    link: Link,
) -> Result<f64> {
    let (n, d) = design.shape();
    let w = penalty.weights();
    let free: Vec<usize> = (0..d).filter(|&j| w[j] == 0.0).collect();
    let mut theta = DVector::zeros(d);
    if !free.is_empty() {
        let sub = DMatrix::from_fn(n, free.len(), |i, k| design[(i, free[k])]);
        let fit = weighted_glm_fit(&sub, y, weights, link, &IrlsOptions::default())?;
        for (k, &j) in free.iter().enumerate() {
            theta[j] = fit.coef[k];
        }
    }
    let q = quadratic_at(design, y, weights, link, &theta);
    let lmax = (0..d)
        .filter(|&j| w[j] > 0.0 && w[j].is_finite())
        .map(|j| q.g[j].abs() / w[j])
        .fold(0.0, f64::max);
    // Slack so that solver rounding cannot leave a ±1e−15 coefficient at λ_max.
    Ok(lmax * (1.0 + LAMBDA_MAX_SLACK))
}

const LAMBDA_MAX_SLACK: f64 = 1e-9;

/// `len` log-spaced values from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..len)
        .map(|k| (hi + (lo - hi) * k as f64 / (len - 1) as f64).exp())
        .collect()
}

pub const DEFAULT_PATH_LEN: usize = 50;
pub const DEFAULT_PATH_RATIO: f64 = 0.01;

/// The weighted GLM problem with observation weights frozen at an initial blip estimate.
#[derive(Debug, Clone)]
pub struct FrozenProblem {
    pub design: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
    pub link: Link,
}

impl FrozenProblem {
    /// Weights |a−π̂|·exp{−γ(·;ψ_ini)} (count) or |a−π̂*(ψ_ini)| (binary).
    pub fn new(data: &Dataset, spec: &ModelSpec, nuisances: &Nuisances, psi_ini: &[f64]) -> Result<Self> {
        if psi_ini.len() != spec.dim_psi() {
            return Err(Error::Config(format!(
                "initial blip has length {}, spec needs {}",
                psi_ini.len(),
                spec.dim_psi()
            )));
        }
        Ok(FrozenProblem {
            design: assemble_design(data, spec)?,
            y: data.y().clone(),
            weights: frozen_weights(data, spec, nuisances, None, psi_ini),
            link: spec.link,
        })
    }

    /// Unit observation weights: plain penalized outcome regression.
    pub fn unweighted(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        Ok(FrozenProblem {
            design: assemble_design(data, spec)?,
            y: data.y().clone(),
            weights: DVector::from_element(data.n(), 1.0),
            link: spec.link,
        })
    }

    pub fn solve(
        &self,
        penalty: &PenaltyConfig,
        opts: &PenalizedOptions,
        warm: Option<&DVector<f64>>,
    ) -> Result<PenalizedFit> {
        penalized_weighted_glm(&self.design, &self.y, &self.weights, penalty, self.link, opts, warm)
    }

    pub fn lambda_max(&self, penalty: &PenaltyConfig) -> Result<f64> {
        lambda_max(&self.design, &self.y, &self.weights, penalty, self.link)
    }

    pub fn default_lambdas(&self, penalty: &PenaltyConfig) -> Result<Vec<f64>> {
        let lmax = self.lambda_max(penalty)?;
        if !(lmax > 0.0) {
            return Err(Error::Estimation("lambda_max is zero; nothing to penalize".into()));
        }
        Ok(lambda_grid(lmax, DEFAULT_PATH_LEN, DEFAULT_PATH_RATIO))
    }
}

fn to_estimate(spec: &ModelSpec, fit: &PenalizedFit) -> ThetaEstimate {
    let mut est = ThetaEstimate::from_theta(spec, &fit.coef);
    est.iterations = fit.iterations;
    est.final_residual_norm = fit.kkt_residual;
    est
}

/// How the frozen-weight problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OneStepMode {
    /// Weights frozen once at the initial estimate.
    #[default]
    Single,
    /// Re-freeze the weights at the solution and re-solve, up to `rounds` times.
    /// Not part of the one-step construction.
    Iterated { rounds: usize },
}

/// One-step PDR estimate: freeze the observation weights at `psi_ini` and solve
/// the penalized weighted GLM once.
pub fn one_step_pdr(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    psi_ini: &[f64],
    penalty: &PenaltyConfig,
    opts: &PenalizedOptions,
    mode: OneStepMode,
) -> Result<ThetaEstimate> {
    let mut problem = FrozenProblem::new(data, spec, nuisances, psi_ini)?;
    let mut fit = problem.solve(penalty, opts, None)?;
    if let OneStepMode::Iterated { rounds } = mode {
        for _ in 0..rounds {
            let est = to_estimate(spec, &fit);
            problem.weights = frozen_weights(data, spec, nuisances, None, &est.psi);
            let next = problem.solve(penalty, opts, Some(&fit.coef))?;
            let moved = (&next.coef - &fit.coef).amax();
            fit = next;
            if moved < 1e-8 {
                break;
            }
        }
    }
    Ok(to_estimate(spec, &fit))
}

/// Reweighting loop of the unpenalized estimator with a ridge-penalized inner
/// solve; stays finite when 2p+2 is close to n.
pub fn ridge_initial(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    lambda_ridge: f64,
    cfg: &IrglmConfig,
) -> Result<ThetaEstimate> {
    let design = assemble_design(data, spec)?;
    let pen = PenaltyConfig::ridge(spec, lambda_ridge);
    let opts = PenalizedOptions::default();
    let psi0 = vec![0.0; spec.dim_psi()];
    let (theta, iters) = reweighting_loop(data, spec, nuisances, &psi0, cfg, |w, warm| {
        penalized_weighted_glm(&design, data.y(), w, &pen, spec.link, &opts, warm).map(|f| f.coef)
    })?;
    let mut est = ThetaEstimate::from_theta(spec, &theta);
    est.iterations = iters;
    est.final_residual_norm = {
        let w = frozen_weights(data, spec, nuisances, None, &est.psi);
        let q = quadratic_at(&design, data.y(), &w, spec.link, &theta);
        kkt_residual(&theta, &q.g, &pen)
    };
    Ok(est)
}

#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    pub fit: std::result::Result<ThetaEstimate, Error>,
}

/// Solutions along a decreasing λ sequence.
#[derive(Debug, Clone)]
pub struct RegPath {
    pub points: Vec<PathPoint>,
}

impl RegPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn estimates(&self) -> impl Iterator<Item = (f64, &ThetaEstimate)> {
        self.points
            .iter()
            .filter_map(|p| p.fit.as_ref().ok().map(|e| (p.lambda, e)))
    }

    /// Per λ, the nonzero blip (Ŝ) and baseline (S̃) index sets; `None` for failed points.
    pub fn support_sets(&self) -> Vec<Option<(Vec<usize>, Vec<usize>)>> {
        self.points
            .iter()
            .map(|p| p.fit.as_ref().ok().map(|e| (e.psi_support(), e.beta_support())))
            .collect()
    }

    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| p.fit.is_err()).count()
    }
}

/// Solves a frozen problem along `lambdas` with warm starts. Failures are
/// recorded per point and the path continues.
pub fn solve_path(
    problem: &FrozenProblem,
    spec: &ModelSpec,
    base: &PenaltyConfig,
    lambdas: &[f64],
    opts: &PenalizedOptions,
) -> Result<RegPath> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda sequence".into()));
    }
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("lambdas must be strictly decreasing".into()));
    }
    let mut warm: Option<DVector<f64>> = None;
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let pen = base.with_lambda(lambda);
        let fit = problem.solve(&pen, opts, warm.as_ref()).map(|f| {
            warm = Some(f.coef.clone());
            to_estimate(spec, &f)
        });
        points.push(PathPoint { lambda, fit });
    }
    Ok(RegPath { points })
}

/// One-step PDR along a λ path. `lambdas = None` uses the default grid from λ_max.
pub fn pdr_path(
    data: &Dataset,
    spec: &ModelSpec,
    nuisances: &Nuisances,
    psi_ini: &[f64],
    base: &PenaltyConfig,
    lambdas: Option<&[f64]>,
    opts: &PenalizedOptions,
) -> Result<RegPath> {
    let problem = FrozenProblem::new(data, spec, nuisances, psi_ini)?;
    let grid = match lambdas {
        Some(l) => l.to_vec(),
        None => problem.default_lambdas(base)?,
    };
    solve_path(&problem, spec, base, &grid, opts)
}
