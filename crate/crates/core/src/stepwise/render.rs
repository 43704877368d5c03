use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::Formula;
use crate::error::Result;

use super::{variable_set, ActionKind, DecisionTrace};

/// Graphviz rendering: one node per formula reached or proposed, solid
/// edges for accepted steps and dashed ones for rejected steps.
pub fn trace_to_dot(trace: &DecisionTrace) -> String {
    let key = |f: &Formula| -> Vec<String> { variable_set(f).iter().map(|v| v.to_string()).collect() };
    let mut ids: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut labels = vec!["baseline".to_string()];
    ids.insert(key(&trace.baseline), 0);
    let mut edges = Vec::new();
    for e in &trace.entries {
        let from = *ids.entry(key(&e.formula_before)).or_insert_with(|| {
            labels.push(format!("formula {}", labels.len()));
            labels.len() - 1
        });
        let to_key = key(&e.formula_after);
        let to = match ids.get(&to_key) {
            Some(&i) => i,
            None => {
                labels.push(format!("{} {}", labels[from], e.action.label()));
                ids.insert(to_key, labels.len() - 1);
                labels.len() - 1
            }
        };
        edges.push((from, to, e));
    }
    let mut out = String::from("digraph trace {\n  rankdir=TB;\n  node [shape=box];\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("  f{i} [label=\"{}\"];\n", l.replace('"', "'")));
    }
    for (from, to, e) in edges {
        let style = if e.accepted { "solid" } else { "dashed" };
        let d = &e.deltas.r2;
        let mut label = format!("#{} {} dr2={:+.3e}", e.step, e.action.label(), d.absolute);
        for (g, nc) in &e.deltas.net_compensation {
            label.push_str(&format!(" dnc[{g}]={:+.2}", nc.absolute));
        }
        out.push_str(&format!(
            "  f{from} -> f{to} [style={style}, label=\"{}\"];\n",
            label.replace('"', "'")
        ));
    }
    out.push_str("}\n");
    out
}

/// One row per trace entry × group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: String,
    pub kind: String,
    pub accepted: bool,
    pub reason: String,
    pub r2_before: f64,
    pub r2_after: f64,
    pub r2_delta: f64,
    pub r2_delta_pct: Option<f64>,
    pub min_added_p_value: Option<f64>,
    pub fits_evaluated: usize,
    pub group_id: String,
    pub nc_before: f64,
    pub nc_after: f64,
    pub nc_delta: f64,
    pub nc_delta_pct: Option<f64>,
}

pub fn trace_rows(trace: &DecisionTrace) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for e in &trace.entries {
        for (g, nc) in &e.deltas.net_compensation {
            rows.push(TraceRow {
                step: e.step,
                action: e.action.label(),
                kind: match e.action.kind {
                    ActionKind::Add => "add".into(),
                    ActionKind::Remove => "remove".into(),
                },
                accepted: e.accepted,
                reason: e.reason.clone(),
                r2_before: e.deltas.r2.before,
                r2_after: e.deltas.r2.after,
                r2_delta: e.deltas.r2.absolute,
                r2_delta_pct: e.deltas.r2.relative_pct,
                min_added_p_value: e.deltas.min_added_p_value,
                fits_evaluated: e.fits_evaluated,
                group_id: g.clone(),
                nc_before: nc.before,
                nc_after: nc.after,
                nc_delta: nc.absolute,
                nc_delta_pct: nc.relative_pct,
            });
        }
    }
    rows
}

pub fn write_trace_table<W: Write>(trace: &DecisionTrace, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in trace_rows(trace) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
