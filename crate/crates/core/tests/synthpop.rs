mod common;

use fairstep::cohort::{load_enrollees, write_enrollees};
use fairstep::design::{build_design, VariableId};
use fairstep::ols::fit;
use fairstep::scenario::Scenario;
use fairstep::synthpop::{
    calibration_report, generate, generate_range, generate_sharded, group_hccs, tune, Band, CalibrationContext,
    CalibrationTargets, SyntheticSpec,
};
use fairstep::Error;
use proptest::prelude::*;

fn scenario_spec(n: usize) -> (Scenario, SyntheticSpec) {
    let s = Scenario::default_scenario();
    let mut spec = s.spec.clone();
    spec.n = n;
    (s, spec)
}

#[test]
fn null_conditions_leave_base_draw() {
    let (_, mut spec) = scenario_spec(2000);
    for c in &mut spec.conditions {
        c.prevalence = 0.0;
        c.group_prevalence = None;
    }
    let a = generate(&spec).unwrap();
    assert!(a.iter().all(|r| r.diagnosis_codes.is_empty()));
    assert!(a.iter().all(|r| r.spend() > 0.0));
    // Condition spend parameters cannot matter when nothing fires.
    for c in &mut spec.conditions {
        c.spend.mu += 3.0;
    }
    assert_eq!(generate(&spec).unwrap(), a);
    // Nor can a different unrecognized fraction.
    spec.unrecognized_fraction = 0.1;
    assert_eq!(generate(&spec).unwrap(), a);
}

#[test]
fn deterministic_and_shard_invariant() {
    let (_, spec) = scenario_spec(5000);
    let a = generate(&spec).unwrap();
    assert_eq!(generate(&spec).unwrap(), a);
    for shards in [1, 3, 7, 64] {
        assert_eq!(generate_sharded(&spec, shards).unwrap(), a, "{shards} shards");
    }
    assert_eq!(generate_range(&spec, 1200..1300).unwrap(), a[1200..1300].to_vec());
    let mut other = spec.clone();
    other.seed += 1;
    assert_ne!(generate(&other).unwrap(), a);
    assert!(a.iter().all(|r| (18..=64).contains(&r.age)));
    assert!(a.iter().all(|r| (r.spend() * 100.0 - (r.spend() * 100.0).round()).abs() < 1e-6));
}

#[test]
fn csv_round_trip() {
    let (_, spec) = scenario_spec(300);
    let records = generate(&spec).unwrap();
    let mut buf = Vec::new();
    write_enrollees(&records, &mut buf).unwrap();
    let back = load_enrollees(buf.as_slice()).unwrap();
    assert_eq!(back.records, records);
}

#[test]
fn validation_errors() {
    let (s, spec) = scenario_spec(100);
    spec.validate(Some(&s.maps)).unwrap();
    let mut bad = spec.clone();
    bad.conditions[0].emits.push("ZZZ999".into());
    assert!(matches!(bad.validate(Some(&s.maps)), Err(Error::InvalidSpec(m)) if m.contains("ZZZ999")));
    let mut bad = spec.clone();
    bad.unrecognized_fraction = 1.5;
    assert!(matches!(bad.validate(None), Err(Error::InvalidSpec(_))));
    let mut bad = spec.clone();
    bad.conditions[1].prevalence = 1.0;
    assert!(bad.validate(None).is_err());
    let mut bad = spec.clone();
    bad.conditions[0].payable = false;
    assert!(bad.validate(Some(&s.maps)).is_err());
    let mut bad = spec.clone();
    bad.n = 0;
    assert!(generate(&bad).is_err());
    let mut bad = spec.clone();
    bad.group_conditions[0].condition_ids.push("nope".into());
    assert!(bad.validate(None).is_err());
    assert_eq!(SyntheticSpec::parse(&spec.to_json()).unwrap(), spec);
}

#[test]
fn default_scenario_calibration() {
    let s = Scenario::default_scenario();
    let records = generate(&s.spec).unwrap();
    let report = calibration_report(&records, &s.maps, s.target_group(), &s.baseline, &s.banding).unwrap();
    assert_eq!(report.n, 200_000);
    assert!((report.group_prevalence - 0.138).abs() <= 0.01, "{}", report.group_prevalence);
    assert!((report.recognized_share - 0.026).abs() <= 0.005, "{}", report.recognized_share);
    assert!(CalibrationTargets::published().misses(&report).is_empty(), "{report:?}");
}

#[test]
fn tune_base_mean_doubles() {
    // Only one condition fires and it costs nothing after rounding to
    // cents, so the overall mean is the base mean alone.
    let (s, mut spec) = scenario_spec(20_000);
    for c in &mut spec.conditions {
        c.prevalence = 0.0;
        c.group_prevalence = None;
    }
    let d = spec.condition_mut("depression").unwrap();
    d.prevalence = 0.1;
    d.spend.mu = -30.0;
    let records = generate(&spec).unwrap();
    let ctx = CalibrationContext {
        maps: &s.maps,
        group: s.target_group(),
        baseline: &s.baseline,
        banding: &s.banding,
    };
    let before = calibration_report(&records, ctx.maps, ctx.group, ctx.baseline, ctx.banding).unwrap();
    let targets = CalibrationTargets {
        overall_mean: Some(Band::around(2.0 * before.overall_mean, 0.01 * before.overall_mean)),
        ..Default::default()
    };
    let (tuned, after) = tune(&spec, &targets, &ctx, 5).unwrap();
    assert!((tuned.base_spend.mu - spec.base_spend.mu - 2f64.ln()).abs() < 1e-12);
    assert_eq!(tuned.base_spend.sigma, spec.base_spend.sigma);
    assert!((after.overall_mean / before.overall_mean - 2.0).abs() < 1e-4);
    let regenerated = generate(&tuned).unwrap();
    let mean = regenerated.iter().map(|r| r.spend()).sum::<f64>() / regenerated.len() as f64;
    assert_eq!(mean, after.overall_mean);
}

#[test]
fn tune_fixed_point_and_infeasible() {
    let (s, spec) = scenario_spec(40_000);
    let ctx = CalibrationContext {
        maps: &s.maps,
        group: s.target_group(),
        baseline: &s.baseline,
        banding: &s.banding,
    };
    let loose = CalibrationTargets {
        overall_mean: Some(Band { min: 0.0, max: 1e9 }),
        group_prevalence: Some(Band { min: 0.0, max: 1.0 }),
        ..Default::default()
    };
    let (same, _) = tune(&spec, &loose, &ctx, 3).unwrap();
    assert_eq!(same, spec);
    let impossible = CalibrationTargets {
        baseline_adj_r2: Some(Band { min: 0.9, max: 1.0 }),
        ..Default::default()
    };
    match tune(&spec, &impossible, &ctx, 3) {
        Err(Error::Calibration { binding, .. }) => assert!(binding.contains("baseline_adj_r2")),
        other => panic!("expected a calibration failure, got {other:?}"),
    }
}

#[test]
fn unpayable_coding_drives_undercompensation() {
    let (s, mut spec) = scenario_spec(100_000);
    let group = s.target_group();
    let nc_ratio = |spec: &SyntheticSpec, with_group_hccs: bool| {
        let records = generate(spec).unwrap();
        let mut f = s.baseline.clone();
        if with_group_hccs {
            let extra: Vec<VariableId> = group_hccs(group, &s.maps)
                .into_iter()
                .map(VariableId::hcc)
                .filter(|v| !f.contains(v))
                .collect();
            f = f.with_appended(&extra).unwrap();
        }
        calibration_report(&records, &s.maps, group, &f, &s.banding).unwrap().baseline_nc_ratio
    };
    let coded_unpayable = nc_ratio(&spec, true);
    assert!(coded_unpayable < -0.1, "{coded_unpayable}");
    spec.unrecognized_fraction = 0.0;
    let recognized = nc_ratio(&spec, true);
    assert!(recognized.abs() < 0.1, "{recognized}");
}

#[test]
fn raising_condition_spend_raises_its_coefficient() {
    let (s, spec) = scenario_spec(50_000);
    let hcc = VariableId::hcc(s.maps.icd_to_hcc["J449"].clone());
    assert!(s.baseline.contains(&hcc));
    let coefficient = |spec: &SyntheticSpec| {
        let records = generate(spec).unwrap();
        let x = build_design(&records, &s.baseline, &s.maps, &s.banding).unwrap();
        let y: Vec<f64> = records.iter().map(|r| r.spend()).collect();
        let f = fit(&x, &y).unwrap();
        f.term(&hcc).unwrap().coefficient
    };
    for seed in 1..=5 {
        let mut low = spec.clone();
        low.seed = seed;
        let mut high = low.clone();
        high.condition_mut("copd").unwrap().spend.mu += 0.3;
        assert!(coefficient(&high) > coefficient(&low), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_seed_is_reproducible(seed in any::<u64>(), shards in 1usize..9) {
        let (_, mut spec) = scenario_spec(400);
        spec.seed = seed;
        let a = generate(&spec).unwrap();
        prop_assert_eq!(&generate_sharded(&spec, shards).unwrap(), &a);
        prop_assert!(a.iter().all(|r| r.spend() >= 0.0));
    }
}
