//! Regularization paths and λ selection on simulated replicates.

mod common;

use common::*;
use itr_core::pdr::{pdr_path, ridge_initial, FrozenProblem, PenalizedOptions, PenaltyConfig};
use itr_core::pipeline::a_learning;
use itr_core::sim::dgp::models_for;
use itr_core::sim::{generate, run_scenario};
use itr_core::{fit_itr, Family, FitOptions, Method, Nuisances, PluginFit, Scenario, SimConfig, Tuning};

fn nested(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|j| b.contains(j)) || b.iter().all(|j| a.contains(j))
}

#[test]
fn path_supports_grow_from_empty_and_are_mostly_nested() {
    let mut pairs = 0;
    let mut nested_pairs = 0;
    for family in [Family::Count, Family::Binary] {
        let cfg = SimConfig::new(family, Scenario::S3BothCorrect, 1000, 15);
        let (spec, nspec) = models_for(&cfg).unwrap();
        for rep in 0..10 {
            let (data, _) = generate(&cfg, rep).unwrap();
            let nu = Nuisances::fit(&data, &spec, &nspec, PluginFit::Unpenalized).unwrap();
            let ini = a_learning(&data, &spec, &nu, &Default::default()).unwrap();
            let base = PenaltyConfig::modified_adaptive(&spec, &ini, 0.0).unwrap();
            let path = pdr_path(&data, &spec, &nu, &ini.psi, &base, None, &PenalizedOptions::default()).unwrap();
            let sets = path.support_sets();
            let (psi0, beta0) = sets[0].clone().unwrap();
            assert!(psi0.is_empty() && beta0.is_empty(), "{family:?} rep {rep}: first λ keeps {psi0:?} {beta0:?}");
            let psi: Vec<Vec<usize>> = sets.iter().flatten().map(|s| s.0.clone()).collect();
            for w in psi.windows(2) {
                pairs += 1;
                nested_pairs += nested(&w[0], &w[1]) as usize;
            }
        }
    }
    let frac = nested_pairs as f64 / pairs as f64;
    assert!(frac >= 0.9, "nested in {frac:.3} of {pairs} adjacent pairs");
}

#[test]
fn tiny_lambda_keeps_every_candidate() {
    for family in [Family::Count, Family::Binary] {
        let data = dgp_sample(family, 5, 2000, 41);
        let (spec, nspec) = correct_models(family, 5, 5);
        let nu = Nuisances::fit(&data, &spec, &nspec, PluginFit::Unpenalized).unwrap();
        let ini = a_learning(&data, &spec, &nu, &Default::default()).unwrap();
        let base = PenaltyConfig::lasso(&spec, 0.0);
        let lmax = FrozenProblem::new(&data, &spec, &nu, &ini.psi).unwrap().lambda_max(&base).unwrap();
        let grid = [lmax, lmax * 1e-2, lmax * 1e-5, lmax * 1e-8];
        let path = pdr_path(&data, &spec, &nu, &ini.psi, &base, Some(&grid), &PenalizedOptions::default()).unwrap();
        let last = path.support_sets().last().cloned().flatten().unwrap();
        assert_eq!(last.0, (1..spec.dim_psi()).collect::<Vec<_>>(), "{family:?}");
        assert_eq!(last.1, (1..spec.dim_beta()).collect::<Vec<_>>(), "{family:?}");
    }
}

#[test]
fn large_fixed_lambda_gives_a_constant_blip() {
    let cfg = SimConfig::new(Family::Count, Scenario::S3BothCorrect, 500, 15);
    let (spec, nspec) = models_for(&cfg).unwrap();
    let (data, _) = generate(&cfg, 0).unwrap();
    let out = fit_itr(&data, &spec, &FitOptions::new(Method::Pdr1, Tuning::Fixed(1e6), nspec)).unwrap();
    assert!(out.estimate.psi_support().is_empty());
    assert!(out.estimate.psi[0] != 0.0);
}

#[test]
fn ridge_initial_norm_shrinks_with_lambda() {
    for family in [Family::Count, Family::Binary] {
        let data = dgp_sample(family, 5, 500, 43);
        let (spec, nspec) = correct_models(family, 5, 5);
        let mut prev = f64::INFINITY;
        for lam in [1e-3, 1e-2, 1e-1, 1.0] {
            let nu = Nuisances::fit(&data, &spec, &nspec, PluginFit::Ridge(lam)).unwrap();
            let est = ridge_initial(&data, &spec, &nu, lam, &Default::default()).unwrap();
            let norm = est.theta().norm();
            assert!(norm <= prev + 1e-9, "{family:?} λ={lam}: {norm} > {prev}");
            prev = norm;
        }
    }
}

#[test]
fn cross_validation_recovers_the_tailoring_variable() {
    let cfg = SimConfig::new(Family::Count, Scenario::S3BothCorrect, 500, 15);
    let (spec, nspec) = models_for(&cfg).unwrap();
    let x1 = spec.blip_cols.iter().position(|&c| c == 0).unwrap() + 1;
    let reps = 100;
    let mut hits = 0;
    let mut failed = 0;
    for rep in 0..reps {
        let (data, _) = generate(&cfg, rep).unwrap();
        let mut opts = FitOptions::new(Method::Pdr1, Tuning::Cv { folds: 5 }, nspec.clone());
        opts.seed = rep as u64;
        match fit_itr(&data, &spec, &opts) {
            Ok(out) => hits += (out.estimate.psi_support() == [x1]) as usize,
            Err(_) => failed += 1,
        }
    }
    // failed fits count as misses
    assert!(hits as f64 >= 0.8 * reps as f64, "support {{x1}} in {hits} of {reps} ({failed} fits failed)");
}

#[test]
fn tuned_selection_at_table_scale() {
    let mut cfg = SimConfig::new(Family::Count, Scenario::S2TreatmentMisspec, 1000, 15);
    cfg.n_reps = 400;
    cfg.test_size = 1000;
    cfg.estimators = vec![Method::Pdr1];
    let run = run_scenario(&cfg).unwrap();
    let row = run.row(Method::Pdr1).unwrap();
    assert!(!run.failure_exceeded());
    assert_eq!(row.fn_rate, 0.0);
    assert!(row.fp_rate <= 0.01, "FP {:.4}", row.fp_rate);
}
