//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (written directly, so it shows even when test output is captured) and
//! then asserts.

mod common;

use std::io::Write;
use std::sync::OnceLock;

use common::*;
use itr_core::alearn::{u1, u1_jacobian, u2, u2_jacobian};
use itr_core::drglm::{estimating_function, estimating_jacobian, irglm_fit, IrglmConfig};
use itr_core::glm::{expit, weighted_loglik, weighted_score};
use itr_core::nuisance::{pi_star_dgamma, pi_star_value};
use itr_core::pdr::{
    pdr_path, penalized_weighted_glm, FrozenProblem, PenalizedOptions, PenaltyConfig, PenaltyKind,
};
use itr_core::pipeline::a_learning;
use itr_core::sim::calibrate::{anchor_values, marginal_mean, optimal_fraction};
use itr_core::sim::dgp::{solve_propensity_from_joint, Dgp, HIGHDIM_BINARY, HIGHDIM_COUNT, LOWDIM};
use itr_core::sim::{run_scenario, ScenarioRun};
use itr_core::{Family, Link, Method, Nuisances, PluginFit, Scenario, SimConfig, Tuning};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct Check {
    label: String,
    ok: bool,
}

fn check(label: impl Into<String>, ok: bool) -> Check {
    Check { label: label.into(), ok }
}

/// Prints the criterion line and panics if any check failed.
fn report(name: &str, checks: &[Check]) {
    let ok = checks.iter().all(|c| c.ok);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| if c.ok { c.label.clone() } else { format!("{} [FAILED]", c.label) })
        .collect();
    let line = format!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.join("; "));
    writeln!(std::io::stderr().lock(), "{line}").ok();
    assert!(ok, "{line}");
}

fn cell(family: Family, scenario: Scenario, n: usize, p: usize, reps: usize, estimators: Vec<Method>) -> SimConfig {
    let mut cfg = SimConfig::new(family, scenario, n, p);
    cfg.n_reps = reps;
    cfg.estimators = estimators;
    cfg
}

fn count_s2() -> &'static ScenarioRun {
    static RUN: OnceLock<ScenarioRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = cell(Family::Count, Scenario::S2TreatmentMisspec, 1000, 15, 100, vec![Method::Ue, Method::Pdr1, Method::Pdr2]);
        run_scenario(&cfg).unwrap()
    })
}

fn binary_s3() -> &'static ScenarioRun {
    static RUN: OnceLock<ScenarioRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = cell(Family::Binary, Scenario::S3BothCorrect, 1000, 15, 100, vec![Method::Ue, Method::Pdr1, Method::Pdr2]);
        run_scenario(&cfg).unwrap()
    })
}

fn failures_ok(run: &ScenarioRun) -> Check {
    let worst = run.rows.iter().map(|r| r.n_failed).max().unwrap_or(0);
    check(format!("max failed reps {worst}/{}", run.config.n_reps), !run.failure_exceeded())
}

#[test]
fn c1_count_table1_scenario2() {
    let run = count_s2();
    let pdr = run.row(Method::Pdr1).unwrap();
    let ue = run.row(Method::Ue).unwrap();
    report(
        "C1 count s2 n=1000 (100 reps)",
        &[
            check(format!("PDR1 ER {:.3} <= 0.05", pdr.er), pdr.er <= 0.05),
            check(format!("PDR1 value {:.3} >= 3.34", pdr.value), pdr.value >= 3.34),
            check(format!("PDR1 FN {:.3} = 0", pdr.fn_rate), pdr.fn_rate == 0.0),
            check(format!("PDR1 FP {:.3} <= 0.03", pdr.fp_rate), pdr.fp_rate <= 0.03),
            check(format!("PDR1 MAE {:.3} <= 0.35", pdr.mae), pdr.mae <= 0.35),
            check(format!("UE ER {:.3} in [0.03, 0.10]", ue.er), (0.03..=0.10).contains(&ue.er)),
            failures_ok(run),
        ],
    );
}

#[test]
fn c2_binary_table2_scenario3() {
    let run = binary_s3();
    let pdr = run.row(Method::Pdr1).unwrap();
    let ue = run.row(Method::Ue).unwrap();
    report(
        "C2 binary s3 n=1000 (100 reps)",
        &[
            check(format!("PDR1 ER {:.3} <= 0.07", pdr.er), pdr.er <= 0.07),
            check(format!("PDR1 value {:.3} >= 0.63", pdr.value), pdr.value >= 0.63),
            check(format!("PDR1 FN {:.3} = 0", pdr.fn_rate), pdr.fn_rate == 0.0),
            check(format!("PDR1 FP {:.3} <= 0.06", pdr.fp_rate), pdr.fp_rate <= 0.06),
            check(format!("UE MAE {:.3} in [3.0, 4.8]", ue.mae), (3.0..=4.8).contains(&ue.mae)),
            failures_ok(run),
        ],
    );
}

#[test]
fn c3_penalized_beats_unpenalized() {
    let mut checks = Vec::new();
    for (name, run) in [("count s2", count_s2()), ("binary s3", binary_s3())] {
        let ue = run.row(Method::Ue).unwrap();
        let p1 = run.row(Method::Pdr1).unwrap();
        let p2 = run.row(Method::Pdr2).unwrap();
        for p in [p1, p2] {
            checks.push(check(
                format!("{name} {} ER {:.3} < UE {:.3}", p.estimator, p.er, ue.er),
                p.er < ue.er,
            ));
            checks.push(check(
                format!("{name} {} MSE {:.3} < UE {:.3}", p.estimator, p.mse, ue.mse),
                p.mse < ue.mse,
            ));
        }
        let gap = (p1.er - p2.er).abs();
        checks.push(check(format!("{name} |ER PDR1 - PDR2| {gap:.4} < 0.02"), gap < 0.02));
    }
    report("C3 ordering", &checks);
}

#[test]
fn c4_highdim_count() {
    let cfg = cell(Family::Count, Scenario::Highdim, 300, 30, 100, vec![Method::PdrRidge, Method::LassoOr]);
    let run = run_scenario(&cfg).unwrap();
    let pdr = run.row(Method::PdrRidge).unwrap();
    let lasso = run.row(Method::LassoOr).unwrap();
    report(
        "C4 high-dim count p=30 n=300 (100 reps)",
        &[
            check(format!("PDR ER {:.3} <= 0.13", pdr.er), pdr.er <= 0.13),
            check(format!("PDR value {:.3} >= 1.97", pdr.value), pdr.value >= 1.97),
            check(format!("PDR MSE {:.3} < LASSO MSE {:.3}", pdr.mse, lasso.mse), pdr.mse < lasso.mse),
            failures_ok(&run),
        ],
    );
}

#[test]
fn c5_dgp_anchors() {
    let size = 100_000;
    let mut checks = Vec::new();
    let within = |label: &str, got: f64, target: f64, tol: f64| {
        check(format!("{label} {got:.3} ({target} ± {tol})"), (got - target).abs() <= tol)
    };
    let count = Dgp::new(Family::Count, 15, LOWDIM).unwrap();
    let binary = Dgp::new(Family::Binary, 15, LOWDIM).unwrap();
    checks.push(within("count marginal", marginal_mean(&count, size, 11).unwrap(), 1.21, 0.03));
    checks.push(within("binary marginal", marginal_mean(&binary, size, 12).unwrap(), 0.47, 0.02));
    checks.push(within("count treated fraction", optimal_fraction(&count, size, 13), 0.5, 0.02));
    checks.push(within("binary treated fraction", optimal_fraction(&binary, size, 14), 0.5, 0.02));
    let cases = [
        ("count", Dgp::new(Family::Count, 15, LOWDIM).unwrap(), [3.36, 1.82, 2.08], 0.05),
        ("binary", Dgp::new(Family::Binary, 15, LOWDIM).unwrap(), [0.64, 0.48, 0.48], 0.02),
        ("high-dim count", Dgp::new(Family::Count, 30, HIGHDIM_COUNT).unwrap(), [2.01, 0.79, 1.36], 0.05),
        ("high-dim binary", Dgp::new(Family::Binary, 30, HIGHDIM_BINARY).unwrap(), [0.57, 0.42, 0.29], 0.02),
    ];
    for (k, (name, dgp, target, tol)) in cases.iter().enumerate() {
        let a = anchor_values(dgp, size, 20 + k as u64);
        for (label, got, t) in [("oracle", a.oracle, target[0]), ("always", a.always, target[1]), ("never", a.never, target[2])] {
            checks.push(within(&format!("{name} {label}"), got, t, *tol));
        }
    }
    report("C5 generator anchors (n=1e5)", &checks);
}

fn logit_loss(x: &DMatrix<f64>, y: &DVector<f64>, t: [f64; 2], lam: f64, w: [f64; 2]) -> f64 {
    let n = x.nrows();
    let ll: f64 = (0..n)
        .map(|i| {
            let eta = x[(i, 0)] * t[0] + x[(i, 1)] * t[1];
            y[i] * eta - (1.0 + eta.exp()).ln()
        })
        .sum();
    -ll / n as f64 + lam * (w[0] * t[0].abs() + w[1] * t[1].abs())
}

/// Exhaustive grid search refined twice around the best point (steps 1e-2, 1e-3, 1e-4).
fn grid_min(f: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut center = [0.0, 0.0];
    let mut half: f64 = 3.0;
    let mut best = f64::INFINITY;
    for step in [1e-2f64, 1e-3, 1e-4] {
        let k = (half / step).round() as i64;
        let c = center;
        for a in -k..=k {
            for b in -k..=k {
                let t = [c[0] + a as f64 * step, c[1] + b as f64 * step];
                let v = f(t);
                if v < best {
                    best = v;
                    center = t;
                }
            }
        }
        half = 20.0 * step;
    }
    best
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-8)
}

fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, d);
    for c in 0..d {
        let h = 1e-6;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        j.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

fn bisect_propensity(f: f64, g: f64, u: f64) -> f64 {
    let target = expit(u);
    let q1 = 1.0 - expit(f + g);
    let q0 = 1.0 - expit(f);
    let h = |t: f64| t * q1 / (t * q1 + (1.0 - t) * q0) - target;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn c6_property_suite() {
    let start = std::time::Instant::now();
    let mut checks = Vec::new();

    // Fixed points of the reweighting loop are roots of the estimating function.
    let (mut fits, mut worst) = (0, 0.0f64);
    for seed in 0..80u64 {
        if fits == 50 {
            break;
        }
        let data = dgp_sample(Family::Count, 5, 500, 1000 + seed);
        let (spec, nspec) = correct_models(Family::Count, 5, 5);
        let Ok(nu) = Nuisances::fit(&data, &spec, &nspec, PluginFit::Unpenalized) else { continue };
        let Ok(est) = irglm_fit(&data, &spec, &nu, &vec![0.0; spec.dim_psi()], &IrglmConfig::default()) else { continue };
        let u = estimating_function(&data, &spec, &nu, &est.theta()).unwrap();
        worst = worst.max(u.amax());
        fits += 1;
    }
    checks.push(check(format!("reweighted fixed point: {fits} fits, max |U| {worst:.1e} < 1e-6"), fits == 50 && worst < 1e-6));

    // Penalized solver against an exhaustive grid on two-coefficient logit problems.
    let mut r = rng(77);
    let mut gap = 0.0f64;
    for inst in 0..20 {
        let n = 60;
        let x = random_design(&mut r, n, 2);
        let coef = [r.random::<f64>() - 0.5, 2.0 * r.random::<f64>() - 1.0];
        let y = random_response(&mut r, &x, &coef, Link::Logit);
        let w = if inst % 2 == 0 { [0.0, 1.0] } else { [0.5 + r.random::<f64>(), 0.5 + r.random::<f64>()] };
        let lam = 0.05;
        let pen = PenaltyConfig::custom(PenaltyKind::Lasso, lam, w.to_vec());
        let fit = penalized_weighted_glm(&x, &y, &DVector::from_element(n, 1.0), &pen, Link::Logit, &PenalizedOptions::default(), None).unwrap();
        let ours = logit_loss(&x, &y, [fit.coef[0], fit.coef[1]], lam, w);
        let grid = grid_min(|t| logit_loss(&x, &y, t, lam, w));
        gap = gap.max((ours - grid).abs());
    }
    checks.push(check(format!("grid oracle: max objective gap {gap:.1e} < 1e-4 on 20 instances"), gap < 1e-4));

    // KKT certificates and strong heredity along modified-adaptive paths.
    let opts = PenalizedOptions::default();
    let (mut points, mut kkt_bad, mut heredity_bad, mut paths) = (0, 0, 0, 0);
    let mut worst_kkt = 0.0f64;
    for k in 0..40u64 {
        if paths == 20 {
            break;
        }
        let family = if k % 2 == 0 { Family::Count } else { Family::Binary };
        let data = dgp_sample(family, 8, 400, 2000 + k);
        let (spec, nspec) = correct_models(family, 8, 8);
        let nu = Nuisances::fit(&data, &spec, &nspec, PluginFit::Unpenalized).unwrap();
        let Ok(ini) = a_learning(&data, &spec, &nu, &Default::default()) else { continue };
        let base = PenaltyConfig::modified_adaptive(&spec, &ini, 0.0).unwrap();
        let path = pdr_path(&data, &spec, &nu, &ini.psi, &base, None, &opts).unwrap();
        let problem = FrozenProblem::new(&data, &spec, &nu, &ini.psi).unwrap();
        paths += 1;
        let wts = base.weights();
        for pt in &path.points {
            let Ok(est) = &pt.fit else {
                kkt_bad += 1;
                continue;
            };
            points += 1;
            let theta = est.theta();
            let g = weighted_score(&problem.design, &problem.y, &problem.weights, problem.link, &theta) / data.n() as f64;
            let mut res = 0.0f64;
            for j in 0..theta.len() {
                let t = pt.lambda * wts[j];
                let r = if wts[j].is_infinite() {
                    if theta[j] == 0.0 { 0.0 } else { f64::INFINITY }
                } else if theta[j] != 0.0 {
                    (g[j] - t * theta[j].signum()).abs()
                } else {
                    (g[j].abs() - t).max(0.0)
                };
                res = res.max(r);
            }
            worst_kkt = worst_kkt.max(res);
            if res > opts.tol {
                kkt_bad += 1;
            }
            for (jp, jb) in spec.heredity_pairs() {
                if est.psi[jp] != 0.0 && est.beta[jb] == 0.0 {
                    heredity_bad += 1;
                }
            }
        }
    }
    checks.push(check(
        format!("KKT: {paths} paths, {points} points, {kkt_bad} violations, max residual {worst_kkt:.1e}"),
        paths == 20 && kkt_bad == 0,
    ));
    checks.push(check(format!("strong heredity: {heredity_bad} violations"), paths == 20 && heredity_bad == 0));

    // Analytic derivatives against central differences.
    let mut worst_fd = 0.0f64;
    for k in 0..50u64 {
        let family = if k % 2 == 0 { Family::Count } else { Family::Binary };
        let data = dgp_sample(family, 4, 200, 3000 + k);
        let (spec, nspec) = correct_models(family, 4, 2);
        let nu = Nuisances::fit(&data, &spec, &nspec, PluginFit::Unpenalized).unwrap();
        let mut rr = rng(k);
        let theta = nu.outcome_theta.map(|v| v + 0.2 * (rr.random::<f64>() - 0.5));
        let an = estimating_jacobian(&data, &spec, &nu, &theta).unwrap();
        let fd = fd_jacobian(|t| estimating_function(&data, &spec, &nu, t).unwrap(), &theta);
        worst_fd = worst_fd.max(rel_err(&an, &fd));
        let psi = DVector::from_fn(spec.dim_psi(), |_, _| rr.random::<f64>() - 0.5);
        let beta = nu.beta_plugin(&spec);
        let (an, fd) = match family {
            Family::Count => {
                let pi = nu.pi_hat();
                (
                    u1_jacobian(&data, &spec, &pi, &beta, psi.as_slice()),
                    fd_jacobian(|p| u1(&data, &spec, &pi, &beta, p.as_slice()), &psi),
                )
            }
            Family::Binary => {
                let ulp = nu.treatment.linear_predictor(data.x());
                (
                    u2_jacobian(&data, &spec, &ulp, &beta, psi.as_slice()),
                    fd_jacobian(|p| u2(&data, &spec, &ulp, &beta, p.as_slice()), &psi),
                )
            }
        };
        worst_fd = worst_fd.max(rel_err(&an, &fd));
        let design = itr_core::glm::assemble_design(&data, &spec).unwrap();
        let ones = DVector::from_element(data.n(), 1.0);
        let score = weighted_score(&design, data.y(), &ones, spec.link, &theta);
        let grad = fd_jacobian(
            |t| DVector::from_element(1, weighted_loglik(&design, data.y(), &ones, spec.link, t)),
            &theta,
        );
        worst_fd = worst_fd.max(rel_err(&DMatrix::from_row_slice(1, theta.len(), score.as_slice()), &grad));
        let (u, f, g) = (4.0 * rr.random::<f64>() - 2.0, 4.0 * rr.random::<f64>() - 2.0, 4.0 * rr.random::<f64>() - 2.0);
        let d = (pi_star_value(u, f, g + 1e-6) - pi_star_value(u, f, g - 1e-6)) / 2e-6;
        worst_fd = worst_fd.max((d - pi_star_dgamma(u, f, g)).abs() / d.abs().max(1e-8));
    }
    checks.push(check(format!("derivatives: max relative error {worst_fd:.1e} < 1e-4 at 50 points"), worst_fd < 1e-4));

    // π* reduces to expit(u) without a blip; propensity solve against bisection.
    let mut r = rng(88);
    let mut worst_pi = 0.0f64;
    let mut worst_bis = 0.0f64;
    for _ in 0..1000 {
        let u = 10.0 * r.random::<f64>() - 5.0;
        let f = 10.0 * r.random::<f64>() - 5.0;
        let g = 6.0 * r.random::<f64>() - 3.0;
        worst_pi = worst_pi.max((pi_star_value(u, f, 0.0) - expit(u)).abs());
        let t = solve_propensity_from_joint(f, g, u).unwrap();
        worst_bis = worst_bis.max((t - bisect_propensity(f, g, u)).abs());
    }
    checks.push(check(format!("π*(ψ=0) - expit(u): {worst_pi:.1e} < 1e-14"), worst_pi < 1e-14));
    checks.push(check(format!("propensity vs bisection: {worst_bis:.1e} < 1e-10 on 1000 triples"), worst_bis < 1e-10));

    let secs = start.elapsed().as_secs_f64();
    checks.push(check(format!("runtime {secs:.0}s < 300s"), secs < 300.0));
    report("C6 property suite", &checks);
}

#[test]
fn c7_double_robustness() {
    let mut checks = Vec::new();
    for family in [Family::Count, Family::Binary] {
        for scenario in [Scenario::S1BaselineMisspec, Scenario::S2TreatmentMisspec] {
            let mut cfg = cell(family, scenario, 2000, 15, 200, vec![Method::Ue, Method::Pdr]);
            cfg.test_size = 1000;
            let run = run_scenario(&cfg).unwrap();
            for m in [Method::Ue, Method::Pdr] {
                let psi1: Vec<f64> = run.reports(m).iter().map(|r| r.psi[1]).collect();
                let bias = mean(&psi1) + 2.0;
                let s = se(&psi1);
                checks.push(check(
                    format!(
                        "{} {} {}: bias {bias:+.4}, 3 SE {:.4} ({} reps)",
                        family.as_str(),
                        scenario.as_str(),
                        m,
                        3.0 * s,
                        psi1.len()
                    ),
                    bias.abs() < 3.0 * s,
                ));
            }
        }
    }
    report("C7 double robustness n=2000 (200 reps)", &checks);
}

#[test]
fn c8_selection_trend() {
    let mut fp = Vec::new();
    let mut fnr = Vec::new();
    let mut checks = Vec::new();
    for n in [500, 1000, 2000] {
        let mut cfg = cell(Family::Count, Scenario::S3BothCorrect, n, 15, 200, vec![Method::Pdr1]);
        cfg.tuning = Tuning::Rate(-0.6);
        cfg.test_size = 1000;
        let run = run_scenario(&cfg).unwrap();
        let row = run.row(Method::Pdr1).unwrap();
        fp.push(row.fp_rate);
        fnr.push(row.fn_rate);
        checks.push(check(
            format!("n={n}: FP {:.3} FN {:.3} ({} failed)", row.fp_rate, row.fn_rate, row.n_failed),
            !run.failure_exceeded(),
        ));
    }
    checks.push(check("FP non-increasing", fp.windows(2).all(|w| w[1] <= w[0])));
    checks.push(check("FN non-increasing", fnr.windows(2).all(|w| w[1] <= w[0])));
    report("C8 selection with λ = n^-0.6, count s3 (200 reps)", &checks);
}

#[test]
fn er_and_value_rank_estimators_alike() {
    let mut checks = Vec::new();
    for (name, run) in [("count s2", count_s2()), ("binary s3", binary_s3())] {
        for a in &run.rows {
            for b in &run.rows {
                if a.er + 0.005 < b.er {
                    checks.push(check(
                        format!("{name}: {} ER {:.3} < {} ER {:.3} so value {:.3} > {:.3}", a.estimator, a.er, b.estimator, b.er, a.value, b.value),
                        a.value > b.value,
                    ));
                }
            }
        }
    }
    report("ER/value ranking agreement", &checks);
}
