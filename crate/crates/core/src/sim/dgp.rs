//! Data-generating processes.
//!
//! Covariates X_j ~ N(0.5, 1), j = 1..p. With h(x) = exp(−x₁²−x₂²+x₃−x₄):
//!
//! * baseline on the link scale: f₀ = b₀ − h + x₁ − 0.2x₂
//! * blip at treatment: γ(x,1) = ψ₀ + ψ₁x₁ (low-dimensional: ψ₀ = 1, ψ₁ = −2)
//! * count treatment: P(A=1|X) = expit(−0.2 + x₁ + x₂)
//! * binary treatment: logit E(A|Y=0,X) = −h + x₁ − 0.2x₂, with P(A=1|X)
//!   recovered by marginalizing over Y.
//!
//! Generated datasets carry p + 1 columns: x₁..x_p followed by h.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Scenario, SimConfig};
use crate::data::{Dataset, Family, Link, ModelSpec};
use crate::error::{Error, Result};
use crate::glm::{expit, ETA_CLAMP};
use crate::nuisance::NuisanceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    /// Baseline intercept b₀.
    pub intercept: f64,
    pub psi0: f64,
    pub psi1: f64,
}

pub const LOWDIM: DgpParams = DgpParams {
    intercept: 0.0,
    psi0: 1.0,
    psi1: -2.0,
};

/// Output of `calibrate::calibrate_highdim` for the count anchors (2.01, 0.79, 1.36).
pub const HIGHDIM_COUNT: DgpParams = DgpParams {
    intercept: -0.4385,
    psi0: -0.0972,
    psi1: -2.6993,
};

/// Output of `calibrate::calibrate_highdim` for the binary anchors (0.57, 0.42, 0.29).
pub const HIGHDIM_BINARY: DgpParams = DgpParams {
    intercept: -1.1252,
    psi0: 2.4386,
    psi1: -3.2536,
};

/// Stream offsets per replicate.
const STREAM_TRAIN: u64 = 0;
const STREAM_TEST: u64 = 1;
pub(crate) const STREAM_ALGO: u64 = 2;

pub(crate) fn rng_for(seed: u64, rep: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * rep as u64 + stream);
    rng
}

/// t ∈ (0,1) with expit(u) = t(1−m₁) / [t(1−m₁) + (1−t)(1−m₀)], m₀ = expit(f), m₁ = expit(f+γ).
pub fn solve_propensity_from_joint(f_val: f64, gamma_val: f64, u_val: f64) -> Result<f64> {
    if !(f_val.is_finite() && gamma_val.is_finite() && u_val.is_finite()) {
        return Err(Error::Domain("non-finite input to the propensity solve".into()));
    }
    let e = expit(u_val);
    let q1 = expit(-(f_val + gamma_val));
    let q0 = expit(-f_val);
    let num = e * q0;
    let den = num + (1.0 - e) * q1;
    if !(den > 0.0) {
        return Err(Error::Domain(format!("degenerate joint at f = {f_val}, γ = {gamma_val}, u = {u_val}")));
    }
    let t = num / den;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("solved propensity {t} outside (0,1)")));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub family: Family,
    /// (ψ₀, ψ for x₁..x_p).
    pub psi: Vec<f64>,
    pub params: DgpParams,
}

impl Truth {
    /// True coefficient of covariate column `col` in the blip (0 for h and noise columns).
    pub fn coef_for_col(&self, col: usize) -> f64 {
        self.psi.get(col + 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dgp {
    pub family: Family,
    pub p: usize,
    pub params: DgpParams,
}

impl Dgp {
    pub fn new(family: Family, p: usize, params: DgpParams) -> Result<Self> {
        if p < 4 {
            return Err(Error::Config(format!("p = {p}; the generator needs x1..x4")));
        }
        Ok(Dgp { family, p, params })
    }

    pub fn for_config(cfg: &SimConfig) -> Result<Self> {
        let params = match (cfg.scenario, cfg.family) {
            (Scenario::Highdim, Family::Count) => HIGHDIM_COUNT,
            (Scenario::Highdim, Family::Binary) => HIGHDIM_BINARY,
            _ => LOWDIM,
        };
        Dgp::new(cfg.family, cfg.p, params)
    }

    pub fn n_cols(&self) -> usize {
        self.p + 1
    }

    /// Column index of h in generated data.
    pub fn h_col(&self) -> usize {
        self.p
    }

    pub fn h(x1: f64, x2: f64, x3: f64, x4: f64) -> f64 {
        (-x1 * x1 - x2 * x2 + x3 - x4).exp()
    }

    pub fn baseline(&self, row: &[f64]) -> f64 {
        self.params.intercept - row[self.p] + row[0] - 0.2 * row[1]
    }

    pub fn blip1(&self, row: &[f64]) -> f64 {
        self.params.psi0 + self.params.psi1 * row[0]
    }

    /// logit E(A|Y=0,X) (binary family).
    pub fn treatment_given_y0_lp(&self, row: &[f64]) -> f64 {
        -row[self.p] + row[0] - 0.2 * row[1]
    }

    pub fn propensity(&self, row: &[f64]) -> Result<f64> {
        match self.family {
            Family::Count => Ok(expit(-0.2 + row[0] + row[1])),
            Family::Binary => solve_propensity_from_joint(self.baseline(row), self.blip1(row), self.treatment_given_y0_lp(row)),
        }
    }

    /// E(Y^a | X = x).
    pub fn mean(&self, row: &[f64], a: f64) -> f64 {
        let eta = self.baseline(row) + a * self.blip1(row);
        match self.family {
            Family::Count => eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp(),
            Family::Binary => expit(eta),
        }
    }

    pub fn truth(&self) -> Truth {
        let mut psi = vec![0.0; self.p + 1];
        psi[0] = self.params.psi0;
        psi[1] = self.params.psi1;
        Truth {
            family: self.family,
            psi,
            params: self.params,
        }
    }

    /// Covariate rows [x₁..x_p, h].
    pub fn covariates<R: Rng>(&self, rng: &mut R, n: usize) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(n, self.n_cols());
        for i in 0..n {
            for j in 0..self.p {
                let z: f64 = StandardNormal.sample(rng);
                x[(i, j)] = 0.5 + z;
            }
            x[(i, self.p)] = Self::h(x[(i, 0)], x[(i, 1)], x[(i, 2)], x[(i, 3)]);
        }
        x
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Dataset> {
        let x = self.covariates(rng, n);
        let mut a = DVector::zeros(n);
        let mut y = DVector::zeros(n);
        let mut row = vec![0.0; self.n_cols()];
        for i in 0..n {
            row.iter_mut().enumerate().for_each(|(j, v)| *v = x[(i, j)]);
            let pa = self
                .propensity(&row)
                .map_err(|e| Error::Data(format!("row {i}: {e}")))?;
            a[i] = (rng.random::<f64>() < pa) as u8 as f64;
            let mu = self.mean(&row, a[i]);
            y[i] = match self.family {
                Family::Count => Poisson::new(mu)
                    .map_err(|e| Error::Data(format!("row {i}: Poisson mean {mu}: {e}")))?
                    .sample(rng),
                Family::Binary => (rng.random::<f64>() < mu) as u8 as f64,
            };
        }
        Dataset::new(x, a, y, self.family)
    }
}

fn check(cfg: &SimConfig, family: Family, highdim: bool) -> Result<()> {
    cfg.validate()?;
    if cfg.family != family {
        return Err(Error::Config(format!("configuration is for {} outcomes", cfg.family.as_str())));
    }
    if highdim != (cfg.scenario == Scenario::Highdim) {
        return Err(Error::Config(format!("scenario {} does not match this generator", cfg.scenario.as_str())));
    }
    Ok(())
}

pub fn gen_count_data(cfg: &SimConfig, rep: usize) -> Result<(Dataset, Truth)> {
    check(cfg, Family::Count, false)?;
    generate(cfg, rep)
}

pub fn gen_binary_data(cfg: &SimConfig, rep: usize) -> Result<(Dataset, Truth)> {
    check(cfg, Family::Binary, false)?;
    generate(cfg, rep)
}

pub fn gen_highdim_data(cfg: &SimConfig, rep: usize) -> Result<(Dataset, Truth)> {
    check(cfg, cfg.family, true)?;
    generate(cfg, rep)
}

/// Training data for replicate `rep`.
pub fn generate(cfg: &SimConfig, rep: usize) -> Result<(Dataset, Truth)> {
    let dgp = Dgp::for_config(cfg)?;
    let mut rng = rng_for(cfg.seed, rep, STREAM_TRAIN);
    Ok((dgp.sample(&mut rng, cfg.n)?, dgp.truth()))
}

/// Evaluation rows with both potential-outcome means.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub x: DMatrix<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// 𝟙{γ(x,1;ψ₀) > 0}
    pub optimal: Vec<u8>,
}

impl TestSet {
    pub fn from_dgp<R: Rng>(dgp: &Dgp, rng: &mut R, size: usize) -> Self {
        let x = dgp.covariates(rng, size);
        let mut mu0 = Vec::with_capacity(size);
        let mut mu1 = Vec::with_capacity(size);
        let mut optimal = Vec::with_capacity(size);
        let mut row = vec![0.0; dgp.n_cols()];
        for i in 0..size {
            row.iter_mut().enumerate().for_each(|(j, v)| *v = x[(i, j)]);
            mu0.push(dgp.mean(&row, 0.0));
            mu1.push(dgp.mean(&row, 1.0));
            optimal.push((dgp.blip1(&row) > 0.0) as u8);
        }
        TestSet { x, mu0, mu1, optimal }
    }

    pub fn len(&self) -> usize {
        self.mu0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu0.is_empty()
    }

    /// Mean true outcome when row i receives `rule[i]`.
    pub fn value_of(&self, rule: &[u8]) -> f64 {
        let s: f64 = rule
            .iter()
            .enumerate()
            .map(|(i, &r)| if r == 1 { self.mu1[i] } else { self.mu0[i] })
            .sum();
        s / self.len() as f64
    }

    pub fn oracle_value(&self) -> f64 {
        self.value_of(&self.optimal)
    }

    pub fn always_value(&self) -> f64 {
        self.mu1.iter().sum::<f64>() / self.len() as f64
    }

    pub fn never_value(&self) -> f64 {
        self.mu0.iter().sum::<f64>() / self.len() as f64
    }
}

pub fn gen_test_set(cfg: &SimConfig, rep: usize) -> Result<TestSet> {
    let dgp = Dgp::for_config(cfg)?;
    let mut rng = rng_for(cfg.seed, rep, STREAM_TEST);
    Ok(TestSet::from_dgp(&dgp, &mut rng, cfg.test_size))
}

/// Posited outcome and treatment models for a scenario. The blip always uses
/// x₁..x_p; a correct baseline adds h as a supplied column. A wrong treatment
/// model is a logistic regression on x₁ alone.
pub fn models_for(cfg: &SimConfig) -> Result<(ModelSpec, NuisanceSpec)> {
    let p = cfg.p;
    let h = p;
    let mut baseline: Vec<usize> = (0..p).collect();
    if cfg.scenario.baseline_correct() {
        baseline.push(h);
    }
    let blip: Vec<usize> = (0..p).collect();
    let link = match cfg.family {
        Family::Count => Link::Log,
        Family::Binary => Link::Logit,
    };
    let treatment_cols = match (cfg.scenario.treatment_correct(), cfg.family) {
        (false, _) => vec![0],
        (true, Family::Count) => vec![0, 1],
        (true, Family::Binary) => vec![h, 0, 1],
    };
    Ok((ModelSpec::new(baseline, blip, link)?, NuisanceSpec { treatment_cols }))
}
