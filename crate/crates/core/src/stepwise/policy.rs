use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EvaluationMode, MetricReport};

use super::{ActionKind, StepAction, StepDeltas};

/// Net-compensation changes smaller than this many dollars count as no change.
pub const NET_COMP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Accept additions that gain at least `min_gain` in r2. Removals that
    /// lose at most `min_gain` are a tie, settled by parsimony.
    MaxR2 { min_gain: f64 },
    /// Accept additions whose added variables all have p < `alpha`.
    /// Removals are not gated.
    PValueGate { alpha: f64 },
    /// Accept steps that move the group's net compensation toward zero.
    NetCompTowardZero {
        group_id: String,
        #[serde(default = "yes")]
        require_nonpositive_start: bool,
    },
    /// Objectives in priority order; a later one only speaks on a tie.
    Lexicographic(Vec<Objective>),
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Accept,
    Reject,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub reason: String,
}

impl Verdict {
    fn new(kind: VerdictKind, reason: impl Into<String>) -> Self {
        Verdict {
            kind,
            reason: reason.into(),
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        match self {
            Objective::MaxR2 { min_gain } if !(*min_gain >= 0.0) => {
                Err(Error::InvalidPolicy(format!("min_gain must be >= 0, got {min_gain}")))
            }
            Objective::PValueGate { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => {
                Err(Error::InvalidPolicy(format!("alpha must lie in (0, 1), got {alpha}")))
            }
            Objective::NetCompTowardZero { group_id, .. } if group_id.is_empty() => {
                Err(Error::InvalidPolicy("empty group_id".into()))
            }
            Objective::Lexicographic(list) => {
                if list.is_empty() {
                    return Err(Error::InvalidPolicy("empty lexicographic list".into()));
                }
                list.iter().try_for_each(Objective::validate)
            }
            _ => Ok(()),
        }
    }

    pub fn judge(
        &self,
        action: &StepAction,
        before: &MetricReport,
        after: &MetricReport,
        deltas: &StepDeltas,
    ) -> Result<Verdict> {
        use VerdictKind::*;
        let added = action.kind == ActionKind::Add;
        Ok(match self {
            Objective::MaxR2 { min_gain } => {
                let gain = deltas.r2.absolute;
                if added {
                    if !deltas.aliased.is_empty() {
                        Verdict::new(Reject, "aliased")
                    } else if gain > 0.0 && gain >= *min_gain {
                        Verdict::new(Accept, format!("r2 gain {gain:e} >= {min_gain}"))
                    } else {
                        Verdict::new(Reject, format!("r2 gain {gain:e} below {min_gain}"))
                    }
                } else if -gain <= *min_gain {
                    Verdict::new(Tie, format!("r2 loss {:e} within {min_gain}", -gain))
                } else {
                    Verdict::new(Reject, format!("r2 loss {:e} exceeds {min_gain}", -gain))
                }
            }
            Objective::PValueGate { alpha } => {
                if !added {
                    Verdict::new(Tie, "p-value gate applies to additions only")
                } else if !deltas.aliased.is_empty() {
                    Verdict::new(Reject, "aliased")
                } else {
                    let ps: Vec<Option<f64>> =
                        action.variables.iter().map(|v| after.p_value(v)).collect();
                    if ps.iter().all(|p| p.is_some_and(|p| p < *alpha)) {
                        let max = ps.iter().flatten().copied().fold(0.0, f64::max);
                        Verdict::new(Accept, format!("all added p < {alpha} (max {max:e}, naive)"))
                    } else {
                        Verdict::new(Reject, format!("some added p >= {alpha} (naive)"))
                    }
                }
            }
            Objective::NetCompTowardZero {
                group_id,
                require_nonpositive_start,
            } => {
                let b = before.group(group_id)?.net_compensation;
                let a = after.group(group_id)?.net_compensation;
                if *require_nonpositive_start && b <= 0.0 && a > 0.0 {
                    Verdict::new(Reject, format!("{group_id} net compensation overshoots zero ({b:.2} -> {a:.2})"))
                } else if a.abs() < b.abs() - NET_COMP_TOLERANCE {
                    Verdict::new(Accept, format!("{group_id} net compensation toward zero ({b:.2} -> {a:.2})"))
                } else if a.abs() > b.abs() + NET_COMP_TOLERANCE {
                    Verdict::new(Reject, format!("{group_id} net compensation away from zero ({b:.2} -> {a:.2})"))
                } else {
                    Verdict::new(Tie, format!("{group_id} net compensation unchanged ({b:.2} -> {a:.2})"))
                }
            }
            Objective::Lexicographic(list) => {
                let mut reasons = Vec::new();
                for o in list {
                    let v = o.judge(action, before, after, deltas)?;
                    if v.kind != Tie {
                        reasons.push(v.reason);
                        return Ok(Verdict::new(v.kind, reasons.join("; ")));
                    }
                    reasons.push(v.reason);
                }
                Verdict::new(Tie, reasons.join("; "))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub objective: Objective,
    /// On a tie, accept removals (prefer the smaller formula).
    #[serde(default)]
    pub parsimony_tiebreak: bool,
    #[serde(default)]
    pub evaluation_mode: EvaluationMode,
}

impl SelectionPolicy {
    pub fn new(objective: Objective) -> Self {
        SelectionPolicy {
            name: None,
            objective,
            parsimony_tiebreak: false,
            evaluation_mode: EvaluationMode::InSample,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_parsimony(mut self, on: bool) -> Self {
        self.parsimony_tiebreak = on;
        self
    }

    pub fn with_mode(mut self, mode: EvaluationMode) -> Self {
        self.evaluation_mode = mode;
        self
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        fn short(o: &Objective) -> String {
            match o {
                Objective::MaxR2 { .. } => "max_r2".into(),
                Objective::PValueGate { .. } => "p_value_gate".into(),
                Objective::NetCompTowardZero { group_id, .. } => format!("net_comp_{group_id}"),
                Objective::Lexicographic(l) => l.iter().map(short).collect::<Vec<_>>().join("+"),
            }
        }
        short(&self.objective)
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if let EvaluationMode::CrossValidated { folds, .. } = self.evaluation_mode {
            if folds < 2 {
                return Err(Error::InvalidPolicy(format!("need at least 2 folds, got {folds}")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p: SelectionPolicy = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    /// Final accept/reject decision with its reason.
    pub fn decide(
        &self,
        action: &StepAction,
        before: &MetricReport,
        after: &MetricReport,
        deltas: &StepDeltas,
    ) -> Result<(bool, String)> {
        let v = self.objective.judge(action, before, after, deltas)?;
        Ok(match v.kind {
            VerdictKind::Accept => (true, v.reason),
            VerdictKind::Reject => (false, v.reason),
            VerdictKind::Tie if self.parsimony_tiebreak && action.kind == ActionKind::Remove => {
                (true, format!("{}; tie settled by parsimony", v.reason))
            }
            VerdictKind::Tie => (false, format!("{}; no improvement", v.reason)),
        })
    }
}
