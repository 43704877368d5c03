use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::design::{Formula, VariableId};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

use super::{
    propose_steps, variable_set, DecisionTrace, Pool, SelectionPolicy, StepAction, TraceEntry,
    Workspace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseRun {
    pub final_formula: Formula,
    pub final_report: MetricReport,
    pub trace: DecisionTrace,
}

/// Runs the search from `baseline`.
///
/// Each pass walks the proposals in order and commits the first accepted
/// one, then starts a new pass; the search ends after a pass with no
/// acceptance. A step back to a formula already visited is rejected, so
/// the search always terminates.
pub fn run_stepwise(
    ws: &Workspace,
    baseline: &Formula,
    pool: &Pool,
    policy: &SelectionPolicy,
) -> Result<StepwiseRun> {
    policy.validate()?;
    let mut state = ws.state(baseline, policy.evaluation_mode)?;
    let mut report = ws.report(&state)?;
    let mut trace = DecisionTrace::new(baseline.clone(), Some(policy.clone()));
    let mut visited: BTreeSet<BTreeSet<VariableId>> = BTreeSet::new();
    visited.insert(variable_set(baseline));
    let mut fits = 1;
    loop {
        let mut moved = false;
        for action in propose_steps(&state.formula, pool) {
            let eval = ws.evaluate_step(&state, &report, &action)?;
            fits += 1;
            let key = variable_set(&eval.state.formula);
            let (accepted, reason) = if visited.contains(&key) {
                (false, "returns to a formula already visited".to_string())
            } else {
                policy.decide(&action, &report, &eval.report, &eval.deltas)?
            };
            trace.entries.push(TraceEntry {
                step: trace.entries.len(),
                action,
                formula_before: state.formula.clone(),
                formula_after: eval.state.formula.clone(),
                report_before: report.clone(),
                report_after: eval.report.clone(),
                deltas: eval.deltas,
                accepted,
                reason,
                fits_evaluated: fits,
            });
            if accepted {
                visited.insert(key);
                state = eval.state;
                report = eval.report;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(StepwiseRun {
        final_formula: state.formula,
        final_report: report,
        trace,
    })
}

/// Reapplies the accepted actions of `trace` from its baseline, in the
/// trace's evaluation mode.
pub fn replay(ws: &Workspace, trace: &DecisionTrace) -> Result<(Formula, MetricReport)> {
    let mode = trace
        .policy
        .as_ref()
        .map(|p| p.evaluation_mode)
        .unwrap_or_default();
    let mut state = ws.state(&trace.baseline, mode)?;
    for action in trace.accepted_actions() {
        state = ws.apply(&state, action)?.0;
    }
    let report = ws.report(&state)?;
    Ok((state.formula, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: SelectionPolicy,
    pub label: String,
    pub final_formula: Formula,
    pub final_report: MetricReport,
    pub accepted_actions: Vec<StepAction>,
    pub trace: DecisionTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDivergence {
    pub a: usize,
    pub b: usize,
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<PolicyRun>,
    /// First position in the accepted-action sequences where the runs
    /// disagree; absent when every run accepted the same actions.
    pub divergence_index: Option<usize>,
    pub pairwise: Vec<PairDivergence>,
}

fn divergence(seqs: &[&[StepAction]]) -> Option<usize> {
    let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    (0..longest).find(|&i| {
        let first = seqs[0].get(i);
        seqs.iter().any(|s| s.get(i) != first)
    })
}

pub fn compare_policies(
    ws: &mut Workspace,
    baseline: &Formula,
    pool: &Pool,
    policies: &[SelectionPolicy],
) -> Result<ComparisonReport> {
    if policies.len() < 2 {
        return Err(Error::InvalidPolicy("comparison needs at least two policies".into()));
    }
    for p in policies {
        ws.prepare(p.evaluation_mode)?;
    }
    let ws = &*ws;
    let runs = policies
        .iter()
        .map(|p| {
            let run = run_stepwise(ws, baseline, pool, p)?;
            Ok(PolicyRun {
                policy: p.clone(),
                label: p.label(),
                accepted_actions: run.trace.accepted_actions().into_iter().cloned().collect(),
                final_formula: run.final_formula,
                final_report: run.final_report,
                trace: run.trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seqs: Vec<&[StepAction]> = runs.iter().map(|r| r.accepted_actions.as_slice()).collect();
    let mut pairwise = Vec::new();
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            pairwise.push(PairDivergence {
                a,
                b,
                index: divergence(&[seqs[a], seqs[b]]),
            });
        }
    }
    Ok(ComparisonReport {
        divergence_index: divergence(&seqs),
        pairwise,
        runs,
    })
}

impl ComparisonReport {
    /// Side-by-side table of final reports.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let groups: BTreeSet<&String> = self
            .runs
            .iter()
            .flat_map(|r| r.final_report.group_metrics.keys())
            .collect();
        out.push_str(&format!("{:<28}", "policy"));
        out.push_str(&format!("{:>14}{:>14}", "r2", "adj_r2"));
        for g in &groups {
            out.push_str(&format!("{:>18}", format!("nc[{g}]")));
        }
        out.push_str("  accepted\n");
        for r in &self.runs {
            out.push_str(&format!("{:<28}", r.label));
            out.push_str(&format!("{:>14.6}", r.final_report.r2));
            match r.final_report.adj_r2 {
                Some(a) => out.push_str(&format!("{a:>14.6}")),
                None => out.push_str(&format!("{:>14}", "-")),
            }
            for g in &groups {
                match r.final_report.group_metrics.get(*g) {
                    Some(m) => out.push_str(&format!("{:>18.2}", m.net_compensation)),
                    None => out.push_str(&format!("{:>18}", "-")),
                }
            }
            let acts: Vec<String> = r.accepted_actions.iter().map(StepAction::label).collect();
            out.push_str(&format!("  {}\n", acts.join(" ")));
        }
        match self.divergence_index {
            Some(i) => out.push_str(&format!("divergence at accepted step {i}\n")),
            None => out.push_str("no divergence\n"),
        }
        out
    }
}
