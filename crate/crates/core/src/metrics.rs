//! Global-fit and group-fairness metrics, in-sample and cross-validated.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{group_membership, CodeMaps, EnrolleeRecord, GroupDefinition};
use crate::design::{build_design, AgeBanding, DesignMatrix, Formula, VariableId};
use crate::error::{Error, Result};
use crate::ols::{partial_grams, predict, CompensatedSum, FitResult, GramAccumulator, SweepState};

/// Membership vector for one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub member: Vec<bool>,
}

impl Group {
    pub fn new(id: impl Into<String>, member: Vec<bool>) -> Self {
        Group {
            id: id.into(),
            member,
        }
    }

    pub fn from_definition(
        records: &[EnrolleeRecord],
        def: &GroupDefinition,
        maps: &CodeMaps,
    ) -> Result<Self> {
        Ok(Group::new(def.group_id.clone(), group_membership(records, def, maps)?))
    }

    pub fn size(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

pub fn groups_from_definitions(
    records: &[EnrolleeRecord],
    defs: &[GroupDefinition],
    maps: &CodeMaps,
) -> Result<Vec<Group>> {
    defs.iter()
        .map(|d| Group::from_definition(records, d, maps))
        .collect()
}

fn check_lengths(yhat: &[f64], y: &[f64], member: &[bool]) -> Result<()> {
    if yhat.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            got: yhat.len(),
            expected: y.len(),
        });
    }
    if member.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "membership",
            got: member.len(),
            expected: y.len(),
        });
    }
    Ok(())
}

/// Sums of predicted and actual spending over members, and the member count.
fn group_sums(yhat: &[f64], y: &[f64], member: &[bool]) -> Result<(f64, f64, usize)> {
    check_lengths(yhat, y, member)?;
    let mut sh = CompensatedSum::default();
    let mut sy = CompensatedSum::default();
    let mut n = 0;
    for ((&p, &a), &m) in yhat.iter().zip(y).zip(member) {
        if m {
            sh.add(p);
            sy.add(a);
            n += 1;
        }
    }
    Ok((sh.value(), sy.value(), n))
}

/// Mean predicted minus mean actual spending over group members.
/// Negative means the group is underpaid.
pub fn net_compensation(yhat: &[f64], y: &[f64], member: &[bool]) -> Result<f64> {
    let (sh, sy, n) = group_sums(yhat, y, member)?;
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    Ok(sh / n as f64 - sy / n as f64)
}

/// Total predicted over total actual spending for group members.
pub fn predictive_ratio(yhat: &[f64], y: &[f64], member: &[bool]) -> Result<f64> {
    let (sh, sy, n) = group_sums(yhat, y, member)?;
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    if !(sy > 0.0) {
        return Err(Error::NonPositiveActual(String::new()));
    }
    Ok(sh / sy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub net_compensation: f64,
    pub predictive_ratio: f64,
    pub n_g: usize,
    pub group_mean_spend: f64,
}

impl GroupMetrics {
    /// From group totals of predicted and actual spending.
    pub fn from_sums(group_id: &str, sum_hat: f64, sum_y: f64, n_g: usize) -> Result<Self> {
        if n_g == 0 {
            return Err(Error::EmptyGroup);
        }
        if !(sum_y > 0.0) {
            return Err(Error::NonPositiveActual(group_id.to_string()));
        }
        let n = n_g as f64;
        Ok(GroupMetrics {
            net_compensation: sum_hat / n - sum_y / n,
            predictive_ratio: sum_hat / sum_y,
            n_g,
            group_mean_spend: sum_y / n,
        })
    }

    pub fn compute(group_id: &str, yhat: &[f64], y: &[f64], member: &[bool]) -> Result<Self> {
        let (sh, sy, n) = group_sums(yhat, y, member)?;
        Self::from_sums(group_id, sh, sy, n)
    }

    /// Net compensation as a fraction of the group's mean spending.
    pub fn relative_net_compensation(&self) -> f64 {
        self.net_compensation / self.group_mean_spend
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvaluationMode {
    #[default]
    InSample,
    CrossValidated { folds: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub variable: VariableId,
    pub coefficient: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r2: f64,
    /// Absent in cross-validated mode.
    pub adj_r2: Option<f64>,
    pub per_variable: Vec<VariableReport>,
    pub group_metrics: BTreeMap<String, GroupMetrics>,
    pub evaluation_mode: EvaluationMode,
    /// Always true: p-values come from a single fit with no adjustment
    /// for the search that produced the formula.
    pub naive_p_values: bool,
}

impl MetricReport {
    pub fn group(&self, id: &str) -> Result<&GroupMetrics> {
        self.group_metrics
            .get(id)
            .ok_or_else(|| Error::UnknownGroup(id.to_string()))
    }

    pub fn p_value(&self, v: &VariableId) -> Option<f64> {
        self.per_variable
            .iter()
            .find(|r| &r.variable == v)
            .and_then(|r| r.p_value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn per_variable(fit: &FitResult) -> Vec<VariableReport> {
    fit.terms
        .iter()
        .map(|t| VariableReport {
            variable: t.variable.clone(),
            coefficient: t.coefficient,
            p_value: t.p_value,
        })
        .collect()
}

fn group_table(yhat: &[f64], y: &[f64], groups: &[Group]) -> Result<BTreeMap<String, GroupMetrics>> {
    groups
        .iter()
        .map(|g| {
            GroupMetrics::compute(&g.id, yhat, y, &g.member)
                .map(|m| (g.id.clone(), m))
                .map_err(|e| match e {
                    Error::NonPositiveActual(_) => Error::NonPositiveActual(g.id.clone()),
                    other => other,
                })
        })
        .collect()
}

/// Fit statistics plus group metrics on the training predictions.
pub fn in_sample_report(
    fit: &FitResult,
    x: &DesignMatrix,
    y: &[f64],
    groups: &[Group],
) -> Result<MetricReport> {
    if y.len() != x.n() {
        return Err(Error::LengthMismatch {
            what: "outcome",
            got: y.len(),
            expected: x.n(),
        });
    }
    let yhat = predict(fit, x)?;
    Ok(MetricReport {
        r2: fit.r2,
        adj_r2: Some(fit.adj_r2),
        per_variable: per_variable(fit),
        group_metrics: group_table(&yhat, y, groups)?,
        evaluation_mode: EvaluationMode::InSample,
        naive_p_values: true,
    })
}

/// Person-level fold labels from a seeded shuffle; fold sizes differ by at most one.
pub fn fold_labels(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidFolds(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidFolds(format!("{folds} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds;
    }
    Ok(labels)
}

/// Training-set Gram matrix for each fold: the merge, in fold order, of
/// every other fold's partial Gram.
pub(crate) fn training_grams(parts: &[GramAccumulator]) -> Vec<GramAccumulator> {
    let p = parts.first().map_or(0, |a| a.p());
    (0..parts.len())
        .map(|k| {
            let mut acc = GramAccumulator::empty(p);
            for (j, part) in parts.iter().enumerate() {
                if j != k {
                    acc.merge(part);
                }
            }
            acc
        })
        .collect()
}

/// Out-of-fold predictions for `x`'s columns as the formula.
pub fn out_of_fold_predictions(
    x: &DesignMatrix,
    y: &[f64],
    labels: &[usize],
    folds: usize,
) -> Result<Vec<f64>> {
    let formula = Formula::new(x.columns().to_vec())?;
    let parts = partial_grams(x, y, labels, folds)?;
    let mut yhat = vec![0.0; x.n()];
    for (k, train) in training_grams(&parts).into_iter().enumerate() {
        let fit = SweepState::with_formula(train.finish(x.columns().to_vec()), &formula)
            .and_then(|s| s.fit_result())
            .map_err(|e| Error::DegenerateFold {
                fold: k,
                source: Box::new(e),
            })?;
        let pred = predict(&fit, x)?;
        for (i, &l) in labels.iter().enumerate() {
            if l == k {
                yhat[i] = pred[i];
            }
        }
    }
    Ok(yhat)
}

/// Cross-validated report on an already built design.
pub fn cross_validated_design_report(
    x: &DesignMatrix,
    y: &[f64],
    groups: &[Group],
    folds: usize,
    seed: u64,
) -> Result<MetricReport> {
    let labels = fold_labels(x.n(), folds, seed)?;
    let yhat = out_of_fold_predictions(x, y, &labels, folds)?;
    let full = crate::ols::fit(x, y)?;
    let mut sse = CompensatedSum::default();
    for (a, p) in y.iter().zip(&yhat) {
        sse.add((a - p) * (a - p));
    }
    Ok(MetricReport {
        r2: 1.0 - sse.value() / full.tss,
        adj_r2: None,
        per_variable: per_variable(&full),
        group_metrics: group_table(&yhat, y, groups)?,
        evaluation_mode: EvaluationMode::CrossValidated { folds, seed },
        naive_p_values: true,
    })
}

/// Cross-validated report: each person is predicted by the fit that
/// excluded their fold; r2 and group metrics use the pooled predictions.
pub fn cross_validated_report(
    records: &[EnrolleeRecord],
    formula: &Formula,
    maps: &CodeMaps,
    banding: &AgeBanding,
    groups: &[GroupDefinition],
    folds: usize,
    seed: u64,
) -> Result<MetricReport> {
    let x = build_design(records, formula, maps, banding)?;
    let y: Vec<f64> = records.iter().map(EnrolleeRecord::spend).collect();
    let groups = groups_from_definitions(records, groups, maps)?;
    cross_validated_design_report(&x, &y, &groups, folds, seed)
}

/// One row per formula × group, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub formula: String,
    pub evaluation_mode: String,
    pub r2: f64,
    pub adj_r2: Option<f64>,
    pub group_id: String,
    pub n_g: usize,
    pub group_mean_spend: f64,
    pub net_compensation: f64,
    pub predictive_ratio: f64,
}

pub fn report_rows(formula_label: &str, report: &MetricReport) -> Vec<ReportRow> {
    let mode = match report.evaluation_mode {
        EvaluationMode::InSample => "in_sample".to_string(),
        EvaluationMode::CrossValidated { folds, seed } => format!("cv{folds}_seed{seed}"),
    };
    report
        .group_metrics
        .iter()
        .map(|(id, g)| ReportRow {
            formula: formula_label.to_string(),
            evaluation_mode: mode.clone(),
            r2: report.r2,
            adj_r2: report.adj_r2,
            group_id: id.clone(),
            n_g: g.n_g,
            group_mean_spend: g.group_mean_spend,
            net_compensation: g.net_compensation,
            predictive_ratio: g.predictive_ratio,
        })
        .collect()
}

pub fn write_report_table<W: Write>(rows: &[ReportRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let m = [true, true];
        assert_eq!(net_compensation(&[150.0, 250.0], &[200.0, 300.0], &m).unwrap(), -50.0);
        assert_eq!(net_compensation(&[1.0, 2.0], &[1.0, 2.0], &m).unwrap(), 0.0);
        assert_eq!(
            predictive_ratio(&[200.0, 300.0], &[100.0, 300.0], &m).unwrap(),
            1.25
        );
        assert_eq!(predictive_ratio(&[3.0, 4.0], &[3.0, 4.0], &m).unwrap(), 1.0);
    }

    #[test]
    fn empty_group_and_bad_actuals() {
        assert!(matches!(
            net_compensation(&[1.0], &[1.0], &[false]),
            Err(Error::EmptyGroup)
        ));
        assert!(matches!(
            predictive_ratio(&[1.0], &[0.0], &[true]),
            Err(Error::NonPositiveActual(_))
        ));
    }

    #[test]
    fn folds_are_balanced() {
        let labels = fold_labels(103, 5, 9).unwrap();
        let mut sizes = [0; 5];
        labels.iter().for_each(|&l| sizes[l] += 1);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(labels, fold_labels(103, 5, 9).unwrap());
        assert!(fold_labels(10, 1, 0).is_err());
    }
}
