use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohort::{CodeMaps, EnrolleeRecord, GroupDefinition};
use crate::design::{build_design, AgeBanding, DesignMatrix, Formula, VariableId};
use crate::error::{Error, Result};
use crate::metrics::{
    fold_labels, groups_from_definitions, per_variable, training_grams, EvaluationMode, Group,
    GroupMetrics, MetricReport,
};
use crate::ols::{cross_product, partial_grams, AddOutcome, CompensatedSum, CrossProduct, SweepState};

use super::{ActionKind, StepAction};

struct GroupData {
    id: String,
    n_g: usize,
    sum_y: f64,
    /// Members carrying each universe column.
    counts: Vec<f64>,
}

struct CvData {
    train: Vec<SweepState>,
    held_out: Vec<CrossProduct>,
    /// `[fold][group][column]` held-out member counts.
    held_out_counts: Vec<Vec<Vec<f64>>>,
}

/// Data for a stepwise search: the design over every variable that can
/// ever enter (the universe), the outcome, groups and, per evaluation
/// mode, the Gram matrices needed to score any formula in O(p²).
pub struct Workspace {
    x: DesignMatrix,
    y: Vec<f64>,
    groups: Vec<Group>,
    group_data: Vec<GroupData>,
    empty: SweepState,
    cv: BTreeMap<(usize, u64), CvData>,
}

/// A formula together with its swept states.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub formula: Formula,
    pub mode: EvaluationMode,
    full: SweepState,
    folds: Vec<SweepState>,
}

impl StepState {
    pub fn sweep_state(&self) -> &SweepState {
        &self.full
    }
}

/// Change in one quantity between two formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub before: f64,
    pub after: f64,
    pub absolute: f64,
    /// `absolute / |before|` in percent; absent when `before` is zero.
    pub relative_pct: Option<f64>,
}

impl Delta {
    pub fn new(before: f64, after: f64) -> Self {
        let absolute = after - before;
        Delta {
            before,
            after,
            absolute,
            relative_pct: (before != 0.0).then(|| 100.0 * absolute / before.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDeltas {
    pub r2: Delta,
    pub adj_r2: Option<Delta>,
    pub net_compensation: BTreeMap<String, Delta>,
    /// Smallest naive p-value among added variables (additions only).
    pub min_added_p_value: Option<f64>,
    /// Added variables that turned out aliased.
    pub aliased: Vec<VariableId>,
}

impl StepDeltas {
    pub fn between(before: &MetricReport, after: &MetricReport, action: &StepAction, aliased: Vec<VariableId>) -> Self {
        let adj_r2 = match (before.adj_r2, after.adj_r2) {
            (Some(a), Some(b)) => Some(Delta::new(a, b)),
            _ => None,
        };
        let net_compensation = before
            .group_metrics
            .iter()
            .filter_map(|(id, g)| {
                after
                    .group_metrics
                    .get(id)
                    .map(|h| (id.clone(), Delta::new(g.net_compensation, h.net_compensation)))
            })
            .collect();
        let min_added_p_value = match action.kind {
            ActionKind::Add => action
                .variables
                .iter()
                .filter_map(|v| after.p_value(v))
                .min_by(f64::total_cmp),
            ActionKind::Remove => None,
        };
        StepDeltas {
            r2: Delta::new(before.r2, after.r2),
            adj_r2,
            net_compensation,
            min_added_p_value,
            aliased,
        }
    }
}

/// What a proposed step would do, without committing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub state: StepState,
    pub report: MetricReport,
    pub deltas: StepDeltas,
}

impl Workspace {
    /// `x` must contain every variable any formula of the search may use.
    pub fn new(x: DesignMatrix, y: Vec<f64>, groups: Vec<Group>) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::LengthMismatch {
                what: "outcome",
                got: y.len(),
                expected: x.n(),
            });
        }
        let mut group_data = Vec::with_capacity(groups.len());
        for g in &groups {
            if g.member.len() != x.n() {
                return Err(Error::LengthMismatch {
                    what: "membership",
                    got: g.member.len(),
                    expected: x.n(),
                });
            }
            let mut sum_y = CompensatedSum::default();
            let mut n_g = 0;
            for (&yi, &m) in y.iter().zip(&g.member) {
                if m {
                    sum_y.add(yi);
                    n_g += 1;
                }
            }
            let counts = (0..x.p())
                .map(|c| match x.column_rows(c) {
                    None => n_g as f64,
                    Some(rows) => rows.iter().filter(|&&r| g.member[r as usize]).count() as f64,
                })
                .collect();
            group_data.push(GroupData {
                id: g.id.clone(),
                n_g,
                sum_y: sum_y.value(),
                counts,
            });
        }
        let empty = SweepState::new(cross_product(&x, &y)?);
        Ok(Workspace {
            x,
            y,
            groups,
            group_data,
            empty,
            cv: BTreeMap::new(),
        })
    }

    /// Builds the universe design from records. `universe` must start with
    /// the intercept and carry a valid cell partition.
    pub fn from_records(
        records: &[EnrolleeRecord],
        universe: &Formula,
        maps: &CodeMaps,
        banding: &AgeBanding,
        groups: &[GroupDefinition],
    ) -> Result<Self> {
        let x = build_design(records, universe, maps, banding)?;
        let y = records.iter().map(EnrolleeRecord::spend).collect();
        let groups = groups_from_definitions(records, groups, maps)?;
        Workspace::new(x, y, groups)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn universe(&self) -> &[VariableId] {
        self.x.columns()
    }

    /// Precomputes fold Gram matrices for a cross-validated mode. No-op for
    /// in-sample mode or when already prepared.
    pub fn prepare(&mut self, mode: EvaluationMode) -> Result<()> {
        let EvaluationMode::CrossValidated { folds, seed } = mode else {
            return Ok(());
        };
        if self.cv.contains_key(&(folds, seed)) {
            return Ok(());
        }
        let labels = fold_labels(self.x.n(), folds, seed)?;
        let parts = partial_grams(&self.x, &self.y, &labels, folds)?;
        let cols = self.x.columns().to_vec();
        let train = training_grams(&parts)
            .into_iter()
            .map(|g| SweepState::new(g.finish(cols.clone())))
            .collect();
        let held_out = parts.iter().map(|g| g.finish(cols.clone())).collect();
        let mut held_out_counts = vec![vec![vec![0.0; self.x.p()]; self.groups.len()]; folds];
        for (gi, g) in self.groups.iter().enumerate() {
            for c in 0..self.x.p() {
                match self.x.column_rows(c) {
                    None => {
                        for (i, &l) in labels.iter().enumerate() {
                            if g.member[i] {
                                held_out_counts[l][gi][c] += 1.0;
                            }
                        }
                    }
                    Some(rows) => {
                        for &r in rows {
                            let r = r as usize;
                            if g.member[r] {
                                held_out_counts[labels[r]][gi][c] += 1.0;
                            }
                        }
                    }
                }
            }
        }
        self.cv.insert(
            (folds, seed),
            CvData {
                train,
                held_out,
                held_out_counts,
            },
        );
        Ok(())
    }

    fn cv_data(&self, folds: usize, seed: u64) -> Result<&CvData> {
        self.cv.get(&(folds, seed)).ok_or_else(|| {
            Error::InvalidFolds(format!("mode with {folds} folds, seed {seed} was not prepared"))
        })
    }

    pub fn state(&self, formula: &Formula, mode: EvaluationMode) -> Result<StepState> {
        let mut full = self.empty.clone();
        for v in formula.variables() {
            full.add(v)?;
        }
        let folds = match mode {
            EvaluationMode::InSample => Vec::new(),
            EvaluationMode::CrossValidated { folds, seed } => {
                let cv = self.cv_data(folds, seed)?;
                cv.train
                    .iter()
                    .map(|t| {
                        let mut s = t.clone();
                        for v in formula.variables() {
                            s.add(v)?;
                        }
                        Ok(s)
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(StepState {
            formula: formula.clone(),
            mode,
            full,
            folds,
        })
    }

    pub fn report(&self, st: &StepState) -> Result<MetricReport> {
        let fit = st.full.fit_result()?;
        match st.mode {
            EvaluationMode::InSample => {
                let coef: Vec<f64> = (0..self.x.p()).map(|c| st.full.coefficient(c)).collect();
                let mut group_metrics = BTreeMap::new();
                for g in &self.group_data {
                    let mut sum_hat = CompensatedSum::default();
                    for (b, n) in coef.iter().zip(&g.counts) {
                        if *b != 0.0 {
                            sum_hat.add(b * n);
                        }
                    }
                    group_metrics.insert(
                        g.id.clone(),
                        GroupMetrics::from_sums(&g.id, sum_hat.value(), g.sum_y, g.n_g)?,
                    );
                }
                Ok(MetricReport {
                    r2: fit.r2,
                    adj_r2: Some(fit.adj_r2),
                    per_variable: per_variable(&fit),
                    group_metrics,
                    evaluation_mode: st.mode,
                    naive_p_values: true,
                })
            }
            EvaluationMode::CrossValidated { folds, seed } => {
                let cv = self.cv_data(folds, seed)?;
                let mut sse = CompensatedSum::default();
                let mut sum_hat = vec![CompensatedSum::default(); self.group_data.len()];
                for (k, train) in st.folds.iter().enumerate() {
                    train.fit_result().map_err(|e| Error::DegenerateFold {
                        fold: k,
                        source: Box::new(e),
                    })?;
                    let active: Vec<(usize, f64)> = train
                        .active()
                        .iter()
                        .map(|&c| (c, train.coefficient(c)))
                        .filter(|&(_, b)| b != 0.0)
                        .collect();
                    let h = &cv.held_out[k];
                    let yc = h.dim() - 1;
                    sse.add(h.get(yc, yc));
                    for &(c, b) in &active {
                        sse.add(-2.0 * b * h.get(c, yc));
                        for &(d, bd) in &active {
                            sse.add(b * bd * h.get(c, d));
                        }
                    }
                    for (gi, acc) in sum_hat.iter_mut().enumerate() {
                        let counts = &cv.held_out_counts[k][gi];
                        for &(c, b) in &active {
                            acc.add(b * counts[c]);
                        }
                    }
                }
                let mut group_metrics = BTreeMap::new();
                for (g, s) in self.group_data.iter().zip(&sum_hat) {
                    group_metrics.insert(
                        g.id.clone(),
                        GroupMetrics::from_sums(&g.id, s.value(), g.sum_y, g.n_g)?,
                    );
                }
                Ok(MetricReport {
                    r2: 1.0 - sse.value().max(0.0) / fit.tss,
                    adj_r2: None,
                    per_variable: per_variable(&fit),
                    group_metrics,
                    evaluation_mode: st.mode,
                    naive_p_values: true,
                })
            }
        }
    }

    /// State after `action`; `st` is left untouched. Also returns the added
    /// variables that were aliased in the full-data fit.
    pub fn apply(&self, st: &StepState, action: &StepAction) -> Result<(StepState, Vec<VariableId>)> {
        action.apply_to(&st.formula)?;
        for v in &action.variables {
            if self.x.column_index(v).is_none() {
                return Err(Error::InvalidStep(format!(
                    "{v} is not among the variables loaded for this search"
                )));
            }
        }
        let mut next = st.clone();
        let mut aliased = Vec::new();
        for v in &action.variables {
            match action.kind {
                ActionKind::Add => {
                    if next.full.add(v)? == AddOutcome::Aliased {
                        aliased.push(v.clone());
                    }
                    for s in &mut next.folds {
                        s.add(v)?;
                    }
                }
                ActionKind::Remove => {
                    next.full.remove(v)?;
                    for s in &mut next.folds {
                        s.remove(v)?;
                    }
                }
            }
        }
        next.formula = next.full.formula()?;
        Ok((next, aliased))
    }

    /// Scores `action` against `st` (whose report is `before`).
    pub fn evaluate_step(&self, st: &StepState, before: &MetricReport, action: &StepAction) -> Result<Evaluation> {
        let (state, aliased) = self.apply(st, action)?;
        let report = self.report(&state)?;
        let deltas = StepDeltas::between(before, &report, action, aliased);
        Ok(Evaluation {
            state,
            report,
            deltas,
        })
    }
}
