mod common;

use common::{normal_equations, random_instance, rel_err, rng, var};
use fairstep::design::{DesignMatrix, VariableId};
use fairstep::metrics::{
    cross_validated_design_report, cross_validated_report, fold_labels, in_sample_report,
    net_compensation, out_of_fold_predictions, predictive_ratio, report_rows, write_report_table,
    EvaluationMode, Group, GroupMetrics,
};
use fairstep::ols::{fit, predict};
use fairstep::scenario::Scenario;
use fairstep::synthpop::generate;
use fairstep::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn net_compensation_hand_values() {
    let m = [true, true];
    assert_eq!(net_compensation(&[150.0, 250.0], &[200.0, 300.0], &m).unwrap(), -50.0);
    assert_eq!(net_compensation(&[3.0, 4.0], &[3.0, 4.0], &m).unwrap(), 0.0);
    assert!(matches!(net_compensation(&[1.0], &[1.0], &[false]), Err(Error::EmptyGroup)));
    assert!(matches!(net_compensation(&[1.0], &[1.0, 2.0], &[true, true]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn net_compensation_loop_oracle() {
    let mut r = rng(3);
    for _ in 0..50 {
        let yhat: Vec<f64> = (0..5).map(|_| r.random_range(0.0..1e4)).collect();
        let y: Vec<f64> = (0..5).map(|_| r.random_range(0.0..1e4)).collect();
        let member = [true, false, true, true, false];
        let (mut dh, mut dy) = (0.0, 0.0);
        for i in [0, 2, 3] {
            dh += yhat[i];
            dy += y[i];
        }
        let want = dh / 3.0 - dy / 3.0;
        let got = net_compensation(&yhat, &y, &member).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        let pr = predictive_ratio(&yhat, &y, &member).unwrap();
        assert!(rel_err(pr, dh / dy) < 1e-12);
    }
}

#[test]
fn predictive_ratio_cases() {
    let m = [true, true];
    assert_eq!(predictive_ratio(&[200.0, 300.0], &[100.0, 300.0], &m).unwrap(), 1.25);
    assert_eq!(predictive_ratio(&[7.0, 9.0], &[7.0, 9.0], &m).unwrap(), 1.0);
    assert!(matches!(predictive_ratio(&[1.0, 1.0], &[0.0, 0.0], &m), Err(Error::NonPositiveActual(_))));
}

fn groups_for(inst: &common::Instance, member_col: usize) -> Vec<Group> {
    let n = inst.x.n();
    let mut member = vec![false; n];
    for &r in inst.x.column_rows(member_col).unwrap() {
        member[r as usize] = true;
    }
    vec![Group::new("everyone", vec![true; n]), Group::new("indicator", member)]
}

#[test]
fn in_sample_zero_identities() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 400, 6);
        let groups = groups_for(&inst, 3);
        let f = fit(&inst.x, &inst.y).unwrap();
        let rep = in_sample_report(&f, &inst.x, &inst.y, &groups).unwrap();
        let mean_abs = inst.y.iter().map(|v| v.abs()).sum::<f64>() / 400.0;
        assert!(rep.group("everyone").unwrap().net_compensation.abs() <= 1e-6 * mean_abs);
        assert!(rep.group("indicator").unwrap().net_compensation.abs() <= 1e-6 * mean_abs);
        assert_eq!(rep.adj_r2, Some(f.adj_r2));
        assert!(rep.naive_p_values);
        assert_eq!(rep.evaluation_mode, EvaluationMode::InSample);
    }
}

#[test]
fn two_fold_intercept_only_hand_case() {
    let x = DesignMatrix::from_indicator_columns(4, true, vec![]).unwrap();
    let y = [10.0, 20.0, 40.0, 70.0];
    let labels = fold_labels(4, 2, 9).unwrap();
    let yhat = out_of_fold_predictions(&x, &y, &labels, 2).unwrap();
    for i in 0..4 {
        let others: Vec<f64> = (0..4).filter(|&j| labels[j] != labels[i]).map(|j| y[j]).collect();
        let want = others.iter().sum::<f64>() / others.len() as f64;
        assert!((yhat[i] - want).abs() < 1e-12);
    }
    let rep = cross_validated_design_report(&x, &y, &[], 2, 9).unwrap();
    let mean = 35.0;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sse: f64 = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!((rep.r2 - (1.0 - sse / tss)).abs() < 1e-12);
    assert_eq!(rep.adj_r2, None);
    assert_eq!(rep.evaluation_mode, EvaluationMode::CrossValidated { folds: 2, seed: 9 });
}

#[test]
fn leave_one_out_matches_explicit_loop() {
    let x = DesignMatrix::from_indicator_columns(6, true, vec![(var(1), vec![0, 2, 5])]).unwrap();
    let y = [100.0, 340.0, 180.0, 290.0, 410.0, 150.0];
    let member = vec![true, false, false, true, true, false];
    let dense = x.to_dense();
    let mut want = vec![0.0; 6];
    for i in 0..6 {
        let rows: Vec<usize> = (0..6).filter(|&j| j != i).collect();
        let d: Vec<Vec<f64>> = rows.iter().map(|&j| dense[j].clone()).collect();
        let yy: Vec<f64> = rows.iter().map(|&j| y[j]).collect();
        let o = normal_equations(&d, &yy);
        want[i] = dense[i].iter().zip(&o.coefficients).map(|(a, b)| a * b).sum();
    }
    let labels = fold_labels(6, 6, 1).unwrap();
    let got = out_of_fold_predictions(&x, &y, &labels, 6).unwrap();
    assert!(common::vec_rel_err(&got, &want) < 1e-10);
    let rep = cross_validated_design_report(&x, &y, &[Group::new("g", member.clone())], 6, 1).unwrap();
    let nc_want = net_compensation(&want, &y, &member).unwrap();
    assert!((rep.group("g").unwrap().net_compensation - nc_want).abs() < 1e-9);
}

#[test]
fn cv_gram_route_matches_explicit_refits() {
    for seed in 0..5 {
        let mut r = rng(40 + seed);
        let inst = random_instance(&mut r, 500, 7);
        let labels = fold_labels(500, 5, seed).unwrap();
        let got = out_of_fold_predictions(&inst.x, &inst.y, &labels, 5).unwrap();
        let mut want = vec![0.0; 500];
        for k in 0..5 {
            let train: Vec<usize> = (0..500).filter(|&i| labels[i] != k).collect();
            let yy: Vec<f64> = train.iter().map(|&i| inst.y[i]).collect();
            let f = fit(&inst.x.select_rows(&train), &yy).unwrap();
            let pred = predict(&f, &inst.x).unwrap();
            for i in 0..500 {
                if labels[i] == k {
                    want[i] = pred[i];
                }
            }
        }
        assert!(common::vec_rel_err(&got, &want) < 1e-8);
    }
}

#[test]
fn fold_sizes_balanced() {
    for (n, k) in [(10, 3), (101, 5), (7, 7), (1000, 10)] {
        let labels = fold_labels(n, k, 42).unwrap();
        let mut sizes = vec![0usize; k];
        for l in labels {
            sizes[l] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
    assert!(matches!(fold_labels(10, 1, 0), Err(Error::InvalidFolds(_))));
    assert!(matches!(fold_labels(3, 4, 0), Err(Error::InvalidFolds(_))));
}

#[test]
fn degenerate_fold_is_named() {
    let x = DesignMatrix::from_indicator_columns(6, true, vec![]).unwrap();
    let labels = fold_labels(6, 2, 5).unwrap();
    // Constant outcome on fold 1, so the fit that trains on fold 1 alone fails.
    let y: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| if l == 1 { 3.0 } else { i as f64 * 10.0 }).collect();
    match cross_validated_design_report(&x, &y, &[], 2, 5) {
        Err(Error::DegenerateFold { fold, .. }) => assert_eq!(fold, 0),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn scenario_cv_r2_below_in_sample() {
    let s = Scenario::default_scenario();
    let recs = generate(&s.spec).unwrap();
    let x = fairstep::design::build_design(&recs, &s.baseline, &s.maps, &s.banding).unwrap();
    let y: Vec<f64> = recs.iter().map(|r| r.spend()).collect();
    let in_sample = fit(&x, &y).unwrap().r2;
    let mut cv: Vec<f64> = (0..5)
        .map(|seed| cross_validated_design_report(&x, &y, &[], 5, seed).unwrap().r2)
        .collect();
    cv.sort_by(f64::total_cmp);
    assert!(cv[2] <= in_sample, "median cv r2 {} vs in-sample {in_sample}", cv[2]);
    // Record route agrees with the design route.
    let mut small = s.clone();
    small.spec.n = 5_000;
    let recs = generate(&small.spec).unwrap();
    let a = cross_validated_report(&recs, &s.baseline, &s.maps, &s.banding, &s.groups, 4, 8).unwrap();
    let b = cross_validated_report(&recs, &s.baseline, &s.maps, &s.banding, &s.groups, 4, 8).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.group_metrics.len(), 3);
}

#[test]
fn report_table_rows() {
    let mut r = rng(77);
    let inst = random_instance(&mut r, 100, 4);
    let f = fit(&inst.x, &inst.y).unwrap();
    let rep = in_sample_report(&f, &inst.x, &inst.y, &groups_for(&inst, 2)).unwrap();
    let rows = report_rows("f1", &rep);
    assert_eq!(rows.len(), 2);
    let mut buf = Vec::new();
    write_report_table(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("formula,evaluation_mode,r2,adj_r2,group_id"));
    assert_eq!(text.lines().count(), 3);
    let back: fairstep::metrics::MetricReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.p_value(&VariableId::hcc("X01")).is_some());
}

proptest! {
    #[test]
    fn nc_pr_identity(vals in prop::collection::vec((0.0f64..2e4, 1.0f64..2e4, any::<bool>()), 1..40)) {
        let yhat: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let y: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let mut member: Vec<bool> = vals.iter().map(|v| v.2).collect();
        member[0] = true;
        let m = GroupMetrics::compute("g", &yhat, &y, &member).unwrap();
        let identity = m.group_mean_spend * (m.predictive_ratio - 1.0);
        prop_assert!((m.net_compensation - identity).abs() <= 1e-9 * m.net_compensation.abs().max(m.group_mean_spend));
        prop_assert!(m.predictive_ratio > 0.0 || yhat.iter().zip(&member).all(|(h, m)| !m || *h == 0.0));
    }

    #[test]
    fn nc_translation_equivariant(vals in prop::collection::vec((0.0f64..2e4, 0.0f64..2e4), 1..30), c in -1e3f64..1e3) {
        let yhat: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let y: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let member = vec![true; vals.len()];
        let shifted: Vec<f64> = yhat.iter().map(|v| v + c).collect();
        let a = net_compensation(&yhat, &y, &member).unwrap();
        let b = net_compensation(&shifted, &y, &member).unwrap();
        prop_assert!((b - a - c).abs() <= 1e-9 * (1.0 + a.abs() + c.abs() + 2e4));
    }

    #[test]
    fn cv_report_deterministic(seed in any::<u64>(), cv_seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 120, 4);
        let groups = groups_for(&inst, 1);
        let a = cross_validated_design_report(&inst.x, &inst.y, &groups, 3, cv_seed).unwrap();
        let b = cross_validated_design_report(&inst.x, &inst.y, &groups, 3, cv_seed).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}
