use serde::Serialize;

use super::dgp::{TestSet, Truth};
use crate::data::{ModelSpec, ThetaEstimate};
use crate::error::{Error, Result};
use crate::tuning::recommend;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Fraction of test rows where the estimated rule disagrees with the optimal one.
    pub er: f64,
    /// Mean true outcome under the estimated rule.
    pub value: f64,
    pub fn_rate: f64,
    pub fp_rate: f64,
    /// ‖ψ₀ − ψ̂‖₁ over the full blip vector.
    pub mae: f64,
    /// ‖ψ₀ − ψ̂‖₂².
    pub mse: f64,
    /// Selected tailoring variables, as 1-based positions in the blip.
    pub support: Vec<usize>,
    pub psi: Vec<f64>,
}

pub fn evaluate(theta_hat: &ThetaEstimate, truth: &Truth, test: &TestSet, spec: &ModelSpec) -> Result<MetricsReport> {
    theta_hat.check_dims(spec)?;
    if test.x.ncols() <= spec.blip_cols.iter().copied().max().unwrap_or(0) {
        return Err(Error::Config("test set lacks blip columns".into()));
    }
    let psi = &theta_hat.psi;
    let mut psi_true = vec![truth.psi[0]];
    psi_true.extend(spec.blip_cols.iter().map(|&c| truth.coef_for_col(c)));
    let true_support = (1..psi_true.len()).filter(|&j| psi_true[j] != 0.0).count();
    if true_support != truth.psi[1..].iter().filter(|v| **v != 0.0).count() {
        return Err(Error::Config("blip columns omit a true tailoring variable".into()));
    }

    let rule = recommend(&test.x, spec, psi, false);
    let disagree = rule.iter().zip(&test.optimal).filter(|(a, b)| a != b).count();
    let penalized = psi.len() - 1;
    let (mut fneg, mut fpos) = (0usize, 0usize);
    for j in 1..psi.len() {
        match (psi_true[j] != 0.0, psi[j] != 0.0) {
            (true, false) => fneg += 1,
            (false, true) => fpos += 1,
            _ => {}
        }
    }
    let rate = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };
    let diff: Vec<f64> = psi.iter().zip(&psi_true).map(|(a, b)| b - a).collect();
    Ok(MetricsReport {
        er: disagree as f64 / test.len() as f64,
        value: test.value_of(&rule),
        fn_rate: rate(fneg, true_support),
        fp_rate: rate(fpos, penalized - true_support),
        mae: diff.iter().map(|d| d.abs()).sum(),
        mse: diff.iter().map(|d| d * d).sum(),
        support: theta_hat.psi_support(),
        psi: psi.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Family, Link};
    use crate::sim::dgp::{Dgp, LOWDIM};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Dgp, TestSet, ModelSpec) {
        let dgp = Dgp::new(Family::Count, 5, LOWDIM).unwrap();
        let test = TestSet::from_dgp(&dgp, &mut ChaCha8Rng::seed_from_u64(5), 100);
        let spec = ModelSpec::new((0..5).collect(), (0..5).collect(), Link::Log).unwrap();
        (dgp, test, spec)
    }

    fn est(psi: Vec<f64>) -> ThetaEstimate {
        ThetaEstimate {
            beta: vec![0.0; 6],
            psi,
            converged: true,
            iterations: 0,
            final_residual_norm: 0.0,
            sandwich_cov: None,
        }
    }

    #[test]
    fn truth_has_perfect_metrics() {
        let (dgp, test, spec) = setup();
        let t = dgp.truth();
        let m = evaluate(&est(t.psi.clone()), &t, &test, &spec).unwrap();
        assert_eq!((m.er, m.fn_rate, m.fp_rate, m.mae, m.mse), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(m.value, test.oracle_value());
    }

    #[test]
    fn flipped_slope_matches_enumeration() {
        let (dgp, test, spec) = setup();
        let t = dgp.truth();
        let mut psi = t.psi.clone();
        psi[1] = 2.0;
        let m = evaluate(&est(psi), &t, &test, &spec).unwrap();
        let flips = (0..100)
            .filter(|&i| ((1.0 - 2.0 * test.x[(i, 0)]) > 0.0) != ((1.0 + 2.0 * test.x[(i, 0)]) > 0.0))
            .count();
        assert_eq!(m.er, flips as f64 / 100.0);
        assert_eq!(m.mae, 4.0);
        assert_eq!(m.mse, 16.0);
    }

    #[test]
    fn treat_all_and_selection_rates() {
        let (dgp, test, spec) = setup();
        let t = dgp.truth();
        let m = evaluate(&est(vec![1.0, 0.0, 0.3, 0.0, 0.0, 0.0]), &t, &test, &spec).unwrap();
        assert_eq!(m.fn_rate, 1.0);
        assert_eq!(m.fp_rate, 0.25);
        let all = evaluate(&est(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &t, &test, &spec).unwrap();
        assert_eq!(all.value, test.always_value());
    }
}
