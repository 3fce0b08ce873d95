mod common;

use ivbounds::data::{AssumptionParams, ObservationalDataset};
use ivbounds::estimators;
use ivbounds::simgen::{self, StrataDGP};
use ivbounds::strata::{self, Assumption, BoundContext};
use ivbounds::Error;
use proptest::prelude::*;

fn with_constant_covariate(ds: &ObservationalDataset) -> ObservationalDataset {
    ObservationalDataset::new(
        ds.y().to_vec(),
        ds.a().to_vec(),
        ds.z().to_vec(),
        vec![3.25; ds.n()],
        vec!["c".into()],
    )
    .unwrap()
}

fn params(xi0: f64, xi1: f64, d11: f64, d00: f64, dy0: f64, dtrt: f64) -> AssumptionParams {
    AssumptionParams {
        xi0,
        xi1,
        delta11: d11,
        delta00: d00,
        delta_y0: dy0,
        delta_trt: dtrt,
    }
}

#[test]
fn bprime_with_constant_covariate_equals_b() {
    let ds = with_constant_covariate(&common::sim_default());
    let ctx = BoundContext::fit(&ds, true).unwrap();
    assert_eq!(ctx.conditional.as_ref().unwrap().dropped_covariates, vec!["c".to_string()]);
    for p in [params(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), params(0.0, 0.0, 10.0, -30.0, 5.0, 20.0)] {
        let b = ctx.bounds(Assumption::B, &p).unwrap();
        let bp = ctx.bounds(Assumption::Bprime, &p).unwrap();
        assert!((b.ate_bound.lower - bp.ate_bound.lower).abs() < 1e-8);
        assert!((b.ate_bound.upper - bp.ate_bound.upper).abs() < 1e-8);
        assert!((b.tau_bound.lower - bp.tau_bound.lower).abs() < 1e-8);
        assert!((b.tau_bound.upper - bp.tau_bound.upper).abs() < 1e-8);
    }
}

#[test]
fn bprime_integrals_match_record_by_record_oracle() {
    let ds = common::sim_default();
    let model = strata::fit_conditional_models(&ds).unwrap();
    assert_eq!(model.covariates_used, vec![0, 1]);
    let k = &model.outcome_fit.coef;
    let t = &model.stratum_fit.coef;
    let p = params(0.0, 0.0, 7.0, -12.0, 3.0, 15.0);
    let expit = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for i in 0..ds.n() {
        let v = ds.v_row(i);
        let lin_v = k[4] * v[0] + k[5] * v[1];
        let m11 = k[0] + k[2] + lin_v;
        let m00 = k[0] + k[1] + lin_v;
        let p11 = expit(t[0] + t[2] * v[0] + t[3] * v[1]);
        let p00 = 1.0 - expit(t[0] + t[1] + t[2] * v[0] + t[3] * v[1]);
        let c0 = if m11 - p.delta11 < m00 + p.delta_y0 { m11 - p.delta11 } else { m00 + p.delta_y0 };
        lo.push((m11 - c0) * p11 + p.delta00 * p00);
        hi.push(m11 * p11 + (m11 - p.delta_trt) * p00);
    }
    // Reverse-order summation as an independent reduction.
    let avg = |xs: &[f64]| xs.iter().rev().sum::<f64>() / xs.len() as f64;
    let terms = strata::ConditionalTerms::new(&ds, &model).unwrap();
    let (l, u) = terms.integrated_limits(&p);
    assert!((l - avg(&lo)).abs() < 1e-12 * (1.0 + l.abs()), "{l} vs {}", avg(&lo));
    assert!((u - avg(&hi)).abs() < 1e-12 * (1.0 + u.abs()), "{u} vs {}", avg(&hi));
}

#[test]
fn strata_estimates_track_generator_shares() {
    let draws: Vec<[f64; 3]> = (0..30)
        .map(|r| {
            let dgp = StrataDGP { n: 3000, seed: 500 + r, ..StrataDGP::default() };
            let (ds, _) = simgen::generate_strata(&dgp).unwrap();
            let s = strata::estimate_strata(&ds).unwrap();
            [s.pi00, s.pi01, s.pi11]
        })
        .collect();
    let truth = StrataDGP::default().pi;
    for j in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let (m, se) = common::mean_and_se(&xs);
        assert!((m - truth[j]).abs() < 3.0 * se, "share {j}: {m} vs {}", truth[j]);
    }
}

#[test]
fn b_bound_covers_true_ate_under_b() {
    let truth = StrataDGP::default().truth().true_ate;
    let covered = (0..200)
        .filter(|&r| {
            let dgp = StrataDGP { seed: 10_000 + r, ..StrataDGP::default() };
            let (ds, _) = simgen::generate_strata(&dgp).unwrap();
            match strata::compute_bounds(&ds, Assumption::B, &AssumptionParams::default()) {
                Ok(bp) => bp.ate_bound.lower <= truth && truth <= bp.ate_bound.upper,
                Err(_) => false,
            }
        })
        .count();
    assert!(covered >= 180, "covered {covered} of 200");
}

#[test]
fn conditional_fit_with_independent_covariate_matches_marginals() {
    let dgp = StrataDGP { n: 20_000, covariate_effect: vec![0.0], seed: 77, ..StrataDGP::default() };
    let (ds, _) = simgen::generate_strata(&dgp).unwrap();
    let model = strata::fit_conditional_models(&ds).unwrap();
    let s = strata::estimate_strata(&ds).unwrap();
    let t = &model.stratum_fit.coef;
    // Slope standard error is about 0.018 at this size.
    assert!(t[2].abs() < 0.08, "covariate slope {}", t[2]);
    let p11 = 1.0 / (1.0 + (-t[0]).exp());
    assert!((p11 - s.pi11).abs() < 0.01);
}

#[test]
fn crossed_bound_is_reported() {
    let ds = common::sim_default();
    let err = strata::compute_bounds(&ds, Assumption::B, &params(0.0, 0.0, 0.0, 1e4, 0.0, 0.0)).unwrap_err();
    assert!(matches!(err, Error::InvalidBound { .. }));
}

fn check_pairing(ctx: &BoundContext, assumption: Assumption, p: &AssumptionParams) -> Result<(), TestCaseError> {
    let bp = match ctx.bounds(assumption, p) {
        Ok(bp) => bp,
        Err(Error::InvalidBound { .. }) => return Ok(()),
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    };
    prop_assert_eq!(bp.tau_bound.lower, ctx.tau.eval(bp.ate_bound.upper).tau);
    prop_assert_eq!(bp.tau_bound.upper, ctx.tau.eval(bp.ate_bound.lower).tau);
    prop_assert!(bp.ate_bound.lower <= bp.ate_bound.upper);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stratum_shares_sum_to_one(seed in 0u64..10_000) {
        let dgp = StrataDGP { n: 200, seed, ..StrataDGP::default() };
        let (ds, _) = simgen::generate_strata(&dgp).unwrap();
        if let Ok(s) = strata::estimate_strata(&ds) {
            prop_assert!((s.pi11 + s.pi00 + s.pi01 - 1.0).abs() < 1e-12);
            prop_assert!(s.pi11 >= 0.0 && s.pi00 >= 0.0 && s.pi01 > 0.0);
        }
    }

    #[test]
    fn b_hat_is_affine_in_each_argument(u in -500.0f64..500.0, w in -500.0f64..500.0, h in 1.0f64..100.0) {
        let s = strata::estimate_strata(&common::sim_default()).unwrap();
        let du = (s.b_hat(u + h, w) - s.b_hat(u, w)) / h;
        let dw = (s.b_hat(u, w + h) - s.b_hat(u, w)) / h;
        prop_assert!((du + s.pi11).abs() < 1e-9);
        prop_assert!((dw - s.pi00).abs() < 1e-9);
    }

    #[test]
    fn width_identity_under_a(xi0 in 0.0f64..1000.0, xi1 in 0.0f64..1000.0) {
        let ds = common::sim_default();
        let ctx = BoundContext::fit(&ds, false).unwrap();
        let bp = ctx.bounds(Assumption::A, &params(xi0, xi1, 0.0, 0.0, 0.0, 0.0)).unwrap();
        let s = &ctx.strata;
        prop_assert!((bp.ate_bound.width() - (s.pi11 * xi0 + s.pi00 * xi1)).abs() < 1e-10);
    }

    #[test]
    fn tau_endpoints_pair_with_opposite_ate_endpoints(
        xi0 in 0.0f64..800.0, xi1 in 0.0f64..800.0,
        d11 in -50.0f64..50.0, d00 in -80.0f64..40.0, dy0 in -50.0f64..50.0, dtrt in -50.0f64..50.0,
    ) {
        let ds = common::sim_default();
        let ctx = BoundContext::fit(&ds, true).unwrap();
        let p = params(xi0, xi1, d11, d00, dy0, dtrt);
        for a in [Assumption::A, Assumption::B, Assumption::Bprime] {
            check_pairing(&ctx, a, &p)?;
        }
    }
}

#[test]
fn free_functions_agree_with_context() {
    let ds = common::sim_default();
    let s = strata::estimate_strata(&ds).unwrap();
    let fit = estimators::fit_propensity(&ds).unwrap();
    let model = strata::fit_conditional_models(&ds).unwrap();
    let p = params(400.0, 450.0, 0.0, -10.0, 0.0, 0.0);
    let ctx = BoundContext::fit(&ds, true).unwrap();
    assert_eq!(strata::bounds_a(&ds, &s, &fit, &p).unwrap(), ctx.bounds(Assumption::A, &p).unwrap());
    assert_eq!(strata::bounds_b(&ds, &s, &fit, &p).unwrap(), ctx.bounds(Assumption::B, &p).unwrap());
    assert_eq!(
        strata::bounds_bprime(&ds, &s, &fit, &model, &p).unwrap(),
        ctx.bounds(Assumption::Bprime, &p).unwrap()
    );
}
