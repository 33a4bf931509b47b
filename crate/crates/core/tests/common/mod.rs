#![allow(dead_code)]

use itr_core::sim::dgp::{Dgp, DgpParams, LOWDIM};
use itr_core::{Dataset, Family, Link, ModelSpec, NuisanceSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw from the simulation generator with p covariates (plus h in column p).
pub fn dgp_sample(family: Family, p: usize, n: usize, seed: u64) -> Dataset {
    dgp_sample_with(family, p, n, seed, LOWDIM)
}

pub fn dgp_sample_with(family: Family, p: usize, n: usize, seed: u64, params: DgpParams) -> Dataset {
    Dgp::new(family, p, params).unwrap().sample(&mut rng(seed), n).unwrap()
}

pub fn link_of(family: Family) -> Link {
    match family {
        Family::Count => Link::Log,
        Family::Binary => Link::Logit,
    }
}

/// Both models correct: baseline on x1..x_k plus h, blip on x1..x_k.
pub fn correct_models(family: Family, p: usize, k: usize) -> (ModelSpec, NuisanceSpec) {
    let mut baseline: Vec<usize> = (0..k).collect();
    baseline.push(p);
    let spec = ModelSpec::new(baseline, (0..k).collect(), link_of(family)).unwrap();
    let treatment_cols = match family {
        Family::Count => vec![0, 1],
        Family::Binary => vec![p, 0, 1],
    };
    (spec, NuisanceSpec { treatment_cols })
}

/// Random design with an intercept column and standard normal covariates.
pub fn random_design(r: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { r.random::<f64>() * 2.0 - 1.0 })
}

pub fn random_response(r: &mut ChaCha8Rng, x: &DMatrix<f64>, coef: &[f64], link: Link) -> DVector<f64> {
    use rand_distr::{Distribution, Poisson};
    DVector::from_fn(x.nrows(), |i, _| {
        let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * coef[j]).sum();
        match link {
            Link::Log => Poisson::new(eta.exp()).unwrap().sample(r),
            Link::Logit => (r.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64,
        }
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Monte Carlo standard error of the mean.
pub fn se(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
    (var / v.len() as f64).sqrt()
}

/// Newton's method with a central-difference Jacobian, independent of any
/// analytic derivative in the crate.
pub fn fd_newton<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, x0: DVector<f64>, tol: f64) -> DVector<f64> {
    let mut x = x0;
    for _ in 0..200 {
        let fx = f(&x);
        if fx.amax() < tol {
            return x;
        }
        let d = x.len();
        let mut j = DMatrix::zeros(d, d);
        for c in 0..d {
            let h = 1e-6 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            j.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        let step = j.lu().solve(&(-&fx)).expect("oracle Jacobian singular");
        let base = fx.norm();
        let mut t = 1.0;
        while f(&(&x + &step * t)).norm() >= base && t > 1e-6 {
            t *= 0.5;
        }
        x += step * t;
    }
    panic!("oracle Newton did not converge");
}
