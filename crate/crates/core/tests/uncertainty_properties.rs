mod common;

use ivbounds::data::{AssumptionParams, Interval, IntervalKind, ObservationalDataset};
use ivbounds::strata::{self, Assumption};
use ivbounds::uncertainty::{self, EndpointEnsemble};
use ivbounds::Error;
use proptest::prelude::*;

#[test]
fn hand_placed_ensemble_matches_brute_force() {
    // Twenty replicates with a few outliers on each side and tied endpoints.
    let lower = [
        10.0, 12.0, 11.0, 10.0, 9.0, -40.0, 13.0, 12.0, 11.5, 10.5, 10.0, 9.5, 14.0, 12.5, 11.0, 10.0, 8.0, 12.0,
        11.0, 10.0,
    ];
    let upper = [
        50.0, 52.0, 49.0, 51.0, 48.0, 55.0, 90.0, 50.0, 53.0, 47.0, 50.0, 51.5, 49.5, 52.5, 48.5, 50.0, 46.0, 54.0,
        51.0, 50.5,
    ];
    let ens = EndpointEnsemble { replicate: (0..20).collect(), lower: lower.to_vec(), upper: upper.to_vec() };
    let ur = uncertainty::ur_strong_bootstrap(&ens, 0.95).unwrap();
    assert_eq!((ur.interval.lower, ur.interval.upper), common::brute_force_region(&ens, 0.95));
    // Nineteen of twenty must be covered, so one outlier can be dropped.
    // Dropping the low one costs width 82, the high one 95.
    assert_eq!((ur.interval.lower, ur.interval.upper), (8.0, 90.0));
}

#[test]
fn bootstrap_is_bit_identical_for_equal_seeds() {
    let ds = common::sim_default();
    let p = AssumptionParams::default();
    let a = uncertainty::bootstrap_bounds(&ds, Assumption::B, &p, 50, 42).unwrap();
    let b = uncertainty::bootstrap_bounds(&ds, Assumption::B, &p, 50, 42).unwrap();
    assert_eq!(a, b);
    let c = uncertainty::bootstrap_bounds(&ds, Assumption::B, &p, 50, 43).unwrap();
    assert_ne!(a.replicates, c.replicates);
}

#[test]
fn resamples_keep_arm_sizes() {
    let ds = common::sim_default();
    let n1 = ds.z().iter().filter(|&&z| z == 1).count();
    let counts = uncertainty::run_replicates(&ds, 40, 7, |rep| {
        Ok((rep.n(), rep.z().iter().filter(|&&z| z == 1).count()))
    });
    for c in counts {
        assert_eq!(c.unwrap(), (ds.n(), n1));
    }
}

#[test]
fn identical_rows_within_arms_resample_to_themselves() {
    let y = vec![5.0, 5.0, 5.0, 9.0, 9.0, 9.0];
    let a = vec![1, 1, 1, 0, 0, 0];
    let z = vec![0, 0, 0, 1, 1, 1];
    let ds = ObservationalDataset::new(y, a, z, vec![], vec![]).unwrap();
    let full = ivbounds::estimators::iv_estimate(&ds).unwrap().value;
    let reps = uncertainty::run_replicates(&ds, 5, 3, |rep| {
        assert_eq!(rep, &ds);
        Ok(ivbounds::estimators::iv_estimate(rep)?.value)
    });
    assert!(reps.into_iter().all(|r| r.unwrap() == full));
    // Such data imply a negative complier share, so bounds are refused.
    assert!(matches!(
        strata::compute_bounds(&ds, Assumption::B, &AssumptionParams::default()),
        Err(Error::WeakInstrument { .. })
    ));
}

#[test]
fn two_replicate_ensemble_matches_committed_pairs() {
    let ds = common::sim_default();
    let ens = uncertainty::bootstrap_bounds(&ds, Assumption::B, &AssumptionParams::default(), 2, 20240101).unwrap();
    let mut buf = Vec::new();
    ens.ate().write_csv(&mut buf).unwrap();
    common::check_golden("bootstrap_k2_ate.csv", &String::from_utf8(buf).unwrap());
}

#[test]
fn replicate_spread_is_finite_and_positive() {
    let ds = common::sim_default();
    let ens = uncertainty::bootstrap_bounds(&ds, Assumption::B, &AssumptionParams::default(), 200, 5).unwrap();
    assert_eq!(ens.failures, 0);
    for e in [ens.ate(), ens.tau()] {
        let (sl, su) = e.standard_errors().unwrap();
        assert!(sl.is_finite() && sl > 0.0 && su.is_finite() && su > 0.0);
    }
}

#[test]
fn ensemble_csv_has_audit_columns() {
    let ens = EndpointEnsemble { replicate: vec![0, 2], lower: vec![1.5, -2.0], upper: vec![3.0, 4.25] };
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "replicate,L_star,U_star\n0,1.5,3\n2,-2,4.25\n");
}

#[test]
fn strong_region_constant_is_1_96() {
    let b = Interval::new(0.0, 100.0, IntervalKind::BoundEstimate).unwrap();
    let ur = uncertainty::ur_strong_can(&b, 1.0, 1.0, 0.95).unwrap();
    assert!((ur.interval.upper - 101.96).abs() < 1e-4);
    assert_eq!(ur.kind, IntervalKind::UrStrongCan);
}

fn ensemble(k: usize) -> impl Strategy<Value = EndpointEnsemble> {
    proptest::collection::vec((-50i32..50, 0i32..40), k).prop_map(|pairs| EndpointEnsemble {
        replicate: (0..pairs.len()).collect(),
        lower: pairs.iter().map(|p| f64::from(p.0)).collect(),
        upper: pairs.iter().map(|p| f64::from(p.0 + p.1)).collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Integer endpoints force many width ties, exercising the tie-breaks.
    #[test]
    fn search_matches_brute_force(ens in ensemble(30), level in prop_oneof![Just(0.9), Just(0.95)]) {
        let ur = uncertainty::ur_strong_bootstrap(&ens, level).unwrap();
        prop_assert_eq!((ur.interval.lower, ur.interval.upper), common::brute_force_region(&ens, level));
    }
}
