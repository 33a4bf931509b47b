//! Monte Carlo anchor values of a generator and calibration of the
//! high-dimensional generator to target anchors.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::dgp::{Dgp, DgpParams, TestSet};
use crate::data::Family;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Values of the optimal rule, treat-all and treat-none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchors {
    pub oracle: f64,
    pub always: f64,
    pub never: f64,
}

impl Anchors {
    fn as_vec(self) -> Vector3<f64> {
        Vector3::new(self.oracle, self.always, self.never)
    }
}

pub const COUNT_HIGHDIM_TARGET: Anchors = Anchors {
    oracle: 2.01,
    always: 0.79,
    never: 1.36,
};

pub const BINARY_HIGHDIM_TARGET: Anchors = Anchors {
    oracle: 0.57,
    always: 0.42,
    never: 0.29,
};

pub fn anchors(test: &TestSet) -> Anchors {
    Anchors {
        oracle: test.oracle_value(),
        always: test.always_value(),
        never: test.never_value(),
    }
}

pub fn anchor_values(dgp: &Dgp, size: usize, seed: u64) -> Anchors {
    anchors(&TestSet::from_dgp(dgp, &mut ChaCha8Rng::seed_from_u64(seed), size))
}

/// Mean of Y under the observed treatment: E[π(X)μ₁(X) + (1−π(X))μ₀(X)].
pub fn marginal_mean(dgp: &Dgp, size: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = dgp.covariates(&mut rng, size);
    let mut row = vec![0.0; dgp.n_cols()];
    let mut total = 0.0;
    for i in 0..size {
        row.iter_mut().enumerate().for_each(|(j, v)| *v = x[(i, j)]);
        let pa = dgp.propensity(&row)?;
        total += pa * dgp.mean(&row, 1.0) + (1.0 - pa) * dgp.mean(&row, 0.0);
    }
    Ok(total / size as f64)
}

/// Fraction of covariate draws for which treatment is optimal.
pub fn optimal_fraction(dgp: &Dgp, size: usize, seed: u64) -> f64 {
    let t = TestSet::from_dgp(dgp, &mut ChaCha8Rng::seed_from_u64(seed), size);
    t.optimal.iter().map(|&v| v as f64).sum::<f64>() / size as f64
}

/// Solves for (b₀, ψ₀, ψ₁) so that the anchors of the generator match `target`
/// on one fixed covariate sample (common random numbers), by Newton's method
/// with a finite-difference Jacobian.
pub fn calibrate_highdim(family: Family, p: usize, target: Anchors, size: usize, seed: u64) -> Result<DgpParams> {
    let probe = Dgp::new(family, p.max(4), DgpParams { intercept: 0.0, psi0: 0.0, psi1: -2.0 })?;
    let x = probe.covariates(&mut ChaCha8Rng::seed_from_u64(seed), size);
    let rows: Vec<Vec<f64>> = (0..size).map(|i| x.row(i).iter().copied().collect()).collect();
    let eval = |v: &Vector3<f64>| -> Vector3<f64> {
        let dgp = Dgp {
            params: DgpParams { intercept: v[0], psi0: v[1], psi1: v[2] },
            ..probe
        };
        let (mut o, mut a1, mut a0) = (0.0, 0.0, 0.0);
        for r in &rows {
            let m0 = dgp.mean(r, 0.0);
            let m1 = dgp.mean(r, 1.0);
            a0 += m0;
            a1 += m1;
            o += if dgp.blip1(r) > 0.0 { m1 } else { m0 };
        }
        let n = rows.len() as f64;
        Vector3::new(o / n, a1 / n, a0 / n) - target.as_vec()
    };
    let mut v = Vector3::new(0.0, 0.0, -2.0);
    for _ in 0..100 {
        let r = eval(&v);
        if r.amax() < 1e-10 {
            return Ok(DgpParams { intercept: v[0], psi0: v[1], psi1: v[2] });
        }
        let h = 1e-5;
        let mut jac = Matrix3::zeros();
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            jac.set_column(c, &((eval(&(v + e)) - eval(&(v - e))) / (2.0 * h)));
        }
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::Estimation("calibration Jacobian is singular; recalibrate from another start".into()))?;
        let mut t = 1.0;
        let base = r.norm();
        while eval(&(v + step * t)).norm() >= base && t > 1e-4 {
            t *= 0.5;
        }
        v += step * t;
    }
    let r = eval(&v);
    if r.amax() < 1e-6 {
        Ok(DgpParams { intercept: v[0], psi0: v[1], psi1: v[2] })
    } else {
        Err(Error::Estimation(format!(
            "calibration did not reach the anchors (residual {:.2e}); recalibrate with a larger sample",
            r.amax()
        )))
    }
}
