//! Randomized properties of the scalar building blocks.

use approx::assert_relative_eq;
use itr_core::data::ThetaEstimate;
use itr_core::drglm::weights_count;
use itr_core::glm::expit;
use itr_core::nuisance::pi_star_value;
use itr_core::pdr::{lambda_grid, modified_adaptive_weights, soft_threshold};
use itr_core::sim::dgp::solve_propensity_from_joint;
use itr_core::{Dataset, Family, Link, ModelSpec, Tuning};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -50.0..50.0f64, t in 0.0..20.0f64) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        if z.abs() > t {
            prop_assert!((z - s).abs() - t < 1e-12);
        } else {
            prop_assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn expit_is_symmetric_and_bounded(t in -700.0..700.0f64) {
        let (a, b) = (expit(t), expit(-t));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pi_star_increases_with_the_blip(u in -4.0..4.0f64, f in -4.0..4.0f64, g in -4.0..4.0f64, d in 0.01..3.0f64) {
        prop_assert!(pi_star_value(u, f, g + d) > pi_star_value(u, f, g));
    }

    #[test]
    fn solved_propensity_satisfies_the_joint(f in -5.0..5.0f64, g in -5.0..5.0f64, u in -5.0..5.0f64) {
        let t = solve_propensity_from_joint(f, g, u).unwrap();
        let (m0, m1) = (expit(f), expit(f + g));
        let lhs = t * (1.0 - m1) / (t * (1.0 - m1) + (1.0 - t) * (1.0 - m0));
        assert_relative_eq!(lhs, expit(u), epsilon = 1e-12);
    }

    #[test]
    fn count_weights_are_positive(
        rows in prop::collection::vec((-2.0..2.0f64, prop::bool::ANY, 0.05..0.95f64), 5..30),
        psi in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let n = rows.len();
        let x = DMatrix::from_fn(n, 1, |i, _| rows[i].0);
        let a = DVector::from_fn(n, |i, _| rows[i].1 as u8 as f64);
        let pi = DVector::from_fn(n, |i, _| rows[i].2);
        let data = Dataset::new(x, a.clone(), DVector::zeros(n), Family::Count).unwrap();
        let spec = ModelSpec::new(vec![0], vec![0], Link::Log).unwrap();
        let w = weights_count(&a, &pi, &psi, &data, &spec);
        prop_assert!(w.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn baseline_weights_never_exceed_blip_weights(
        beta in prop::collection::vec(-3.0..3.0f64, 4),
        psi in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        let spec = ModelSpec::new(vec![0, 1, 2], vec![0, 1, 2], Link::Log).unwrap();
        let est = ThetaEstimate {
            beta,
            psi,
            converged: true,
            iterations: 0,
            final_residual_norm: 0.0,
            sandwich_cov: None,
        };
        let (wb, wp) = modified_adaptive_weights(&est, &spec).unwrap();
        for (pj, bj) in spec.heredity_pairs() {
            prop_assert!(wb[bj] <= wp[pj]);
        }
    }

    #[test]
    fn numeric_tunings_parse_back(v in 1e-6..1e3f64, e in -1.0..0.0f64, k in 2usize..20) {
        prop_assert_eq!(format!("fixed:{v}").parse::<Tuning>().unwrap(), Tuning::Fixed(v));
        prop_assert_eq!(format!("{v}").parse::<Tuning>().unwrap(), Tuning::Fixed(v));
        prop_assert_eq!(format!("rate:{e}").parse::<Tuning>().unwrap(), Tuning::Rate(e));
        prop_assert_eq!(format!("CV:{k}").parse::<Tuning>().unwrap(), Tuning::Cv { folds: k });
    }

    #[test]
    fn lambda_grid_is_log_spaced(lmax in 1e-4..1e3f64, len in 2usize..80, ratio in 1e-4..0.5f64) {
        let g = lambda_grid(lmax, len, ratio);
        prop_assert_eq!(g.len(), len);
        assert_relative_eq!(g[0], lmax, max_relative = 1e-12);
        assert_relative_eq!(g[len - 1], lmax * ratio, max_relative = 1e-12);
        prop_assert!(g.windows(2).all(|w| w[0] > w[1]));
        let r0 = g[1] / g[0];
        prop_assert!(g.windows(2).all(|w| (w[1] / w[0] - r0).abs() < 1e-9));
    }
}
