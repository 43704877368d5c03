//! Stepwise formula building under pluggable acceptance policies.

mod engine;
mod policy;
mod render;
mod workspace;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::design::{Formula, VariableId, VariableKind};
use crate::error::{Error, Result};

pub use engine::{
    compare_policies, replay, run_stepwise, ComparisonReport, PairDivergence, PolicyRun,
    StepwiseRun,
};
pub use policy::{Objective, SelectionPolicy, Verdict, VerdictKind};
pub use render::{trace_rows, trace_to_dot, write_trace_table, TraceRow};
pub use workspace::{Delta, Evaluation, StepDeltas, StepState, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Add,
    Remove,
}

/// Add or remove a block of variables.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct StepAction {
    pub kind: ActionKind,
    pub variables: Vec<VariableId>,
    /// Display name of the pool block, if the action came from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
}

impl PartialEq for StepAction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.variables == other.variables
    }
}

impl StepAction {
    pub fn add(variables: Vec<VariableId>) -> Self {
        StepAction {
            kind: ActionKind::Add,
            variables,
            block: None,
        }
    }

    pub fn remove(variables: Vec<VariableId>) -> Self {
        StepAction {
            kind: ActionKind::Remove,
            variables,
            block: None,
        }
    }

    pub fn label(&self) -> String {
        let sign = match self.kind {
            ActionKind::Add => "+",
            ActionKind::Remove => "-",
        };
        match &self.block {
            Some(b) => format!("{sign}{b}"),
            None => {
                let names: Vec<String> = self.variables.iter().map(|v| v.to_string()).collect();
                format!("{sign}[{}]", names.join(","))
            }
        }
    }

    /// Checks the action against `formula` and returns the resulting formula.
    pub fn apply_to(&self, formula: &Formula) -> Result<Formula> {
        if self.variables.is_empty() {
            return Err(Error::InvalidStep("action has no variables".into()));
        }
        let distinct: BTreeSet<&VariableId> = self.variables.iter().collect();
        if distinct.len() != self.variables.len() {
            return Err(Error::InvalidStep("action lists a variable twice".into()));
        }
        for v in &self.variables {
            if v.is_intercept() {
                return Err(Error::InvalidStep("the intercept cannot be stepped".into()));
            }
            match self.kind {
                ActionKind::Add if formula.contains(v) => {
                    return Err(Error::InvalidStep(format!("{v} is already in the formula")))
                }
                ActionKind::Remove if !formula.contains(v) => {
                    return Err(Error::InvalidStep(format!("{v} is not in the formula")))
                }
                _ => {}
            }
        }
        match self.kind {
            ActionKind::Add => formula.with_appended(&self.variables),
            ActionKind::Remove => formula.without(&self.variables),
        }
    }
}

/// A named group of variables that is added or removed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub variables: Vec<VariableId>,
}

impl Block {
    pub fn hccs(name: impl Into<String>, hccs: &[&str]) -> Self {
        Block {
            name: name.into(),
            variables: hccs.iter().map(|h| VariableId::hcc(*h)).collect(),
        }
    }
}

/// Ordered candidate blocks.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Block>", into = "Vec<Block>")]
pub struct Pool {
    blocks: Vec<Block>,
}

impl Pool {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut names = BTreeSet::new();
        for b in &blocks {
            if b.variables.is_empty() {
                return Err(Error::InvalidStep(format!("block `{}` is empty", b.name)));
            }
            if !names.insert(&b.name) {
                return Err(Error::InvalidStep(format!("duplicate block name `{}`", b.name)));
            }
            for v in &b.variables {
                if v.kind != VariableKind::Hcc {
                    return Err(Error::InvalidStep(format!(
                        "block `{}` may only hold HCC variables, found {v}",
                        b.name
                    )));
                }
                if !seen.insert(v) {
                    return Err(Error::InvalidStep(format!("{v} appears in more than one block")));
                }
            }
        }
        Ok(Pool { blocks })
    }

    pub fn empty() -> Self {
        Pool::default()
    }

    /// One block per HCC, named after it.
    pub fn singletons<I, S>(hccs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Pool::new(
            hccs.into_iter()
                .map(|h| Block::hccs(h.as_ref(), &[h.as_ref()]))
                .collect(),
        )
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn variables(&self) -> impl Iterator<Item = &VariableId> {
        self.blocks.iter().flat_map(|b| b.variables.iter())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl TryFrom<Vec<Block>> for Pool {
    type Error = Error;

    fn try_from(blocks: Vec<Block>) -> Result<Self> {
        Pool::new(blocks)
    }
}

impl From<Pool> for Vec<Block> {
    fn from(p: Pool) -> Self {
        p.blocks
    }
}

/// Candidate actions: additions of absent blocks in pool order, then
/// removals of present blocks in reverse formula order. Blocks only
/// partly in the formula are not proposed.
pub fn propose_steps(current: &Formula, pool: &Pool) -> Vec<StepAction> {
    let mut adds = Vec::new();
    let mut removes = Vec::new();
    for b in pool.blocks() {
        let present: Vec<Option<usize>> = b.variables.iter().map(|v| current.position(v)).collect();
        if present.iter().all(Option::is_none) {
            adds.push(StepAction {
                kind: ActionKind::Add,
                variables: b.variables.clone(),
                block: Some(b.name.clone()),
            });
        } else if present.iter().all(Option::is_some) {
            let last = present.iter().flatten().max().copied().unwrap_or(0);
            removes.push((
                last,
                StepAction {
                    kind: ActionKind::Remove,
                    variables: b.variables.clone(),
                    block: Some(b.name.clone()),
                },
            ));
        }
    }
    removes.sort_by_key(|r| std::cmp::Reverse(r.0));
    adds.extend(removes.into_iter().map(|(_, a)| a));
    adds
}

/// One proposed step and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub action: StepAction,
    pub formula_before: Formula,
    pub formula_after: Formula,
    pub report_before: crate::metrics::MetricReport,
    pub report_after: crate::metrics::MetricReport,
    pub deltas: StepDeltas,
    pub accepted: bool,
    pub reason: String,
    /// Fits evaluated so far in the search, this one included. The
    /// p-values in the reports take no account of them.
    pub fits_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub baseline: Formula,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<SelectionPolicy>,
    pub entries: Vec<TraceEntry>,
}

impl DecisionTrace {
    pub fn new(baseline: Formula, policy: Option<SelectionPolicy>) -> Self {
        DecisionTrace {
            baseline,
            policy,
            entries: Vec::new(),
        }
    }

    pub fn accepted_actions(&self) -> Vec<&StepAction> {
        self.entries
            .iter()
            .filter(|e| e.accepted)
            .map(|e| &e.action)
            .collect()
    }

    /// Formula after the accepted actions.
    pub fn final_formula(&self) -> Formula {
        self.entries
            .iter()
            .rev()
            .find(|e| e.accepted)
            .map_or_else(|| self.baseline.clone(), |e| e.formula_after.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn variable_set(f: &Formula) -> BTreeSet<VariableId> {
    f.variables().iter().cloned().collect()
}
