#![allow(dead_code)]

use std::collections::BTreeSet;

use fairstep::cohort::{EnrolleeRecord, Sex};
use fairstep::design::{DesignMatrix, VariableId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn record(id: &str, age: u8, sex: Sex, codes: &[&str], spend: f64) -> EnrolleeRecord {
    EnrolleeRecord {
        person_id: id.into(),
        age,
        sex,
        region: Some("NE".into()),
        diagnosis_codes: codes.iter().map(|c| c.to_string()).collect(),
        spend_total: Some(spend),
    }
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/fixtures")
        .join(name)
}

pub fn scenario_file(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/scenario")
        .join(name)
}

pub fn var(j: usize) -> VariableId {
    VariableId::hcc(format!("X{j:02}"))
}

/// Random binary design with an intercept and `p - 1` indicator columns,
/// plus an outcome with real signal. Returns the matrix and the dense
/// copy used by oracles.
pub struct Instance {
    pub x: DesignMatrix,
    pub dense: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub fn random_instance(r: &mut ChaCha8Rng, n: usize, p: usize) -> Instance {
    let mut cols = Vec::new();
    for j in 1..p {
        let prev: f64 = r.random_range(0.05..0.6);
        let rows: Vec<u32> = (0..n as u32).filter(|_| r.random::<f64>() < prev).collect();
        cols.push((var(j), rows));
    }
    let x = DesignMatrix::from_indicator_columns(n, true, cols).unwrap();
    let dense = x.to_dense();
    let beta: Vec<f64> = (0..p)
        .map(|j| if j == 0 { r.random_range(3000.0..5000.0) } else { r.random_range(-200.0..2000.0) })
        .collect();
    let y = dense
        .iter()
        .map(|row| {
            let signal: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            signal + r.random_range(-800.0..800.0)
        })
        .collect();
    Instance { x, dense, y }
}

/// Rank of the dense design, by SVD.
pub fn rank(dense: &[Vec<f64>]) -> usize {
    let n = dense.len();
    let p = dense[0].len();
    let m = DMatrix::from_fn(n, p, |i, j| dense[i][j]);
    m.rank(1e-9 * (n as f64).sqrt())
}

pub struct OracleFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r2: f64,
    pub std_errors: Vec<f64>,
}

/// Normal equations formed by explicit loops and solved by LU. Only valid
/// for full-rank designs.
pub fn normal_equations(dense: &[Vec<f64>], y: &[f64]) -> OracleFit {
    let n = dense.len();
    let p = dense[0].len();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for i in 0..n {
        for a in 0..p {
            xty[a] += dense[i][a] * y[i];
            for b in 0..p {
                xtx[(a, b)] += dense[i][a] * dense[i][b];
            }
        }
    }
    let lu = xtx.clone().lu();
    let beta = lu.solve(&xty).expect("full rank");
    let inv = lu.try_inverse().expect("full rank");
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut rss = 0.0;
    let mut tss = 0.0;
    for i in 0..n {
        let fitted: f64 = (0..p).map(|a| dense[i][a] * beta[a]).sum();
        rss += (y[i] - fitted).powi(2);
        tss += (y[i] - mean).powi(2);
    }
    let sigma2 = rss / (n - p) as f64;
    OracleFit {
        coefficients: beta.iter().copied().collect(),
        rss,
        tss,
        r2: 1.0 - rss / tss,
        std_errors: (0..p).map(|a| (sigma2 * inv[(a, a)]).sqrt()).collect(),
    }
}

/// Dense design restricted to the given columns.
pub fn columns(dense: &[Vec<f64>], keep: &[usize]) -> Vec<Vec<f64>> {
    dense.iter().map(|row| keep.iter().map(|&c| row[c]).collect()).collect()
}

/// Scalar relative error against a reference.
pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// Normwise relative error: max abs difference over max abs reference.
pub fn vec_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

/// Brute-force transitive hierarchy filter: keep suppressing anything a
/// present or already-suppressed HCC dominates, until nothing changes.
pub fn hierarchy_oracle(image: &BTreeSet<String>, rules: &[(String, String)]) -> BTreeSet<String> {
    let mut suppressed: BTreeSet<String> = BTreeSet::new();
    loop {
        let before = suppressed.len();
        for (dom, sub) in rules {
            if image.contains(dom) || suppressed.contains(dom) {
                suppressed.insert(sub.clone());
            }
        }
        if suppressed.len() == before {
            break;
        }
    }
    image.difference(&suppressed).cloned().collect()
}
