#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ivbounds::data::{self, ColumnMap, ObservationalDataset};
use ivbounds::uncertainty::EndpointEnsemble;

pub fn repo_data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn test_data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn default_columns() -> ColumnMap {
    ColumnMap {
        covariates: vec!["v1".into(), "v2".into()],
        ..ColumnMap::default()
    }
}

/// The committed synthetic dataset with both covariates.
pub fn sim_default() -> ObservationalDataset {
    data::load_dataset(repo_data("sim_default.csv"), &default_columns()).unwrap()
}

/// Two-arm dataset with 93 records at `Z = 1` (26 treated, outcome 230) and
/// 108 at `Z = 0` (20 treated, outcome 210).
pub fn table_one_arms() -> ObservationalDataset {
    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut z = Vec::new();
    for (zv, n, treated, mean) in [(1u8, 93, 26, 230.0), (0u8, 108, 20, 210.0)] {
        for i in 0..n {
            y.push(mean);
            a.push(u8::from(i < treated));
            z.push(zv);
        }
    }
    ObservationalDataset::new(y, a, z, vec![], vec![]).unwrap()
}

/// Compares against a committed golden file, or rewrites it when
/// `UPDATE_GOLDEN` is set.
pub fn check_golden(name: &str, actual: &str) {
    let path = test_data(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert_eq!(expected, actual, "golden mismatch for {name}");
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Exhaustive search over all `(L*, U*)` drawn from replicate endpoints.
pub fn brute_force_region(ens: &EndpointEnsemble, level: f64) -> (f64, f64) {
    let k = ens.len();
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for &l in &ens.lower {
        for &u in &ens.upper {
            if u < l {
                continue;
            }
            let joint = (0..k).filter(|&i| l <= ens.lower[i] && ens.upper[i] <= u).count();
            if (joint as f64) < level * k as f64 - 1e-9 {
                continue;
            }
            let left = (0..k).filter(|&i| l <= ens.lower[i]).count();
            let right = (0..k).filter(|&i| ens.upper[i] <= u).count();
            let key = (u - l, left.abs_diff(right), l, u);
            let better = match best {
                None => true,
                Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1 < b.1 || (key.1 == b.1 && key.2 < b.2))),
            };
            if better {
                best = Some(key);
            }
        }
    }
    let b = best.unwrap();
    (b.2, b.3)
}
