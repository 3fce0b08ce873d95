mod common;

use ivbounds::glm::expit;
use ivbounds::simgen::{self, StrataDGP};
use ivbounds::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn same_seed_same_dataset() {
    let dgp = StrataDGP::default();
    assert_eq!(simgen::generate_strata(&dgp).unwrap(), simgen::generate_strata(&dgp).unwrap());
    let other = StrataDGP { seed: dgp.seed + 1, ..dgp.clone() };
    assert_ne!(simgen::generate_strata(&dgp).unwrap().0, simgen::generate_strata(&other).unwrap().0);
    assert_eq!(
        simgen::generate_confounded(500, 3, 40.0, 100.0, 2).unwrap(),
        simgen::generate_confounded(500, 3, 40.0, 100.0, 2).unwrap()
    );
}

/// Replays the generator's documented draw order (covariates, class
/// uniform, instrument uniform, noise) to recover each record's latent class
/// and noise, checks the replay reproduces the dataset, then checks that the
/// instrument is uncorrelated with both.
#[test]
fn instrument_is_unrelated_to_class_and_noise() {
    let dgp = StrataDGP { n: 20_000, seed: 4, ..StrataDGP::default() };
    let (ds, _) = simgen::generate_strata(&dgp).unwrap();
    let (a1, a2) = dgp.class_offsets();
    let mut rng = ChaCha20Rng::seed_from_u64(dgp.seed);
    let (mut z, mut complier, mut always, mut noise) = (vec![], vec![], vec![], vec![]);
    for i in 0..ds.n() {
        let mut s = 0.0;
        for (j, b) in dgp.covariate_effect.iter().enumerate() {
            let x: f64 = rng.sample(StandardNormal);
            assert_eq!(x, ds.v_row(i)[j]);
            s += b * x;
        }
        let u: f64 = rng.random();
        let zi = rng.random::<f64>() < dgp.pz;
        assert_eq!(u8::from(zi), ds.z()[i]);
        let at = u < expit(a2 + s);
        let co = !at && u < expit(a1 + s);
        let e: f64 = rng.sample(StandardNormal);
        z.push(f64::from(u8::from(zi)));
        complier.push(f64::from(u8::from(co)));
        always.push(f64::from(u8::from(at)));
        noise.push(e);
    }
    let bound = 3.0 / (ds.n() as f64).sqrt();
    for latent in [&complier, &always, &noise] {
        let r = correlation(&z, latent);
        assert!(r.abs() < bound, "correlation {r} exceeds {bound}");
    }
}

#[test]
fn truth_satisfies_decomposition_identity() {
    let dgp = StrataDGP::default();
    let t = dgp.truth();
    let m = t.stratum_means.unwrap();
    let [p00, p01, p11] = t.true_pi.unwrap();
    let ate = p01 * t.true_late + p11 * (m.always_taker[1] - m.always_taker[0]) + p00 * (m.never_taker[1] - m.never_taker[0]);
    assert_eq!(ate, t.true_ate);
}

/// Monte Carlo average of `Y(1) - Y(0)` over a million independent class
/// draws using the generator's covariate link.
#[test]
fn true_ate_matches_monte_carlo() {
    let dgp = StrataDGP::default();
    let (a1, a2) = dgp.class_offsets();
    let m = dgp.stratum_means;
    let mut rng = ChaCha20Rng::seed_from_u64(123_456);
    let n = 1_000_000;
    let mut diffs = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = dgp.covariate_effect.iter().map(|b| b * rng.sample::<f64, _>(StandardNormal)).sum();
        let u: f64 = rng.random();
        let mu = if u < expit(a2 + s) {
            m.always_taker
        } else if u < expit(a1 + s) {
            m.complier
        } else {
            m.never_taker
        };
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        diffs.push(mu[1] - mu[0] + dgp.sigma_y * (e1 - e0));
    }
    let (mean, se) = common::mean_and_se(&diffs);
    assert!((mean - dgp.truth().true_ate).abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn pure_compliers_and_homogeneous_effects() {
    let dgp = StrataDGP { pi: [0.0, 1.0, 0.0], n: 400, ..StrataDGP::default() };
    let (ds, t) = simgen::generate_strata(&dgp).unwrap();
    assert_eq!(ds.a(), ds.z());
    assert_eq!(t.true_ate, t.true_late);
}

#[test]
fn confounded_design_rejects_infeasible_tau() {
    let limit = simgen::confounded_tau_limit(2);
    match simgen::generate_confounded(100, 1, limit + 1.0, 100.0, 2) {
        Err(Error::InfeasibleTau { requested, bound }) => {
            assert_eq!(requested, limit + 1.0);
            assert_eq!(bound, limit);
        }
        other => panic!("expected InfeasibleTau, got {other:?}"),
    }
    assert!(simgen::generate_confounded(100, 1, 0.0, 100.0, 0).is_err());
}

#[test]
fn confounded_prevalence_and_truth() {
    let (ds, t) = simgen::generate_confounded(50_000, 8, 50.0, 100.0, 2).unwrap();
    let rate = ds.a().iter().map(|&a| f64::from(a)).sum::<f64>() / ds.n() as f64;
    // The average of the logistic propensity over the covariate box sits a
    // little above the baseline 0.23.
    assert!((0.2..0.3).contains(&rate), "prevalence {rate}");
    assert_eq!((t.true_ate, t.true_tau, t.true_pi), (100.0, Some(50.0), None));
}
