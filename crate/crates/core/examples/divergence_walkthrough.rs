//! Walks the default scenario through the four contrasting steps (add the
//! mental-health pair, add the substance-use pair, then drop either the
//! liver or the kidney block) and prints the r2 and net-compensation
//! changes of each.

use fairstep::metrics::EvaluationMode;
use fairstep::scenario::{Scenario, TARGET_GROUP};
use fairstep::stepwise::{StepAction, Workspace};
use fairstep::synthpop::generate;

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let records = generate(&s.spec)?;
    let ws = Workspace::from_records(&records, &s.universe()?, &s.maps, &s.banding, &s.groups)?;
    let block = |name: &str| s.pool.block(name).expect("scenario block").variables.clone();

    let base = ws.state(&s.baseline, EvaluationMode::InSample)?;
    let base_report = ws.report(&base)?;
    let show = |label: &str, d: &fairstep::stepwise::StepDeltas| {
        let nc = &d.net_compensation[TARGET_GROUP];
        println!(
            "{label:<28} r2 {:.5} -> {:.5} ({:+.3}%)   nc {:9.2} -> {:9.2} ({:+.2}%)",
            d.r2.before,
            d.r2.after,
            d.r2.relative_pct.unwrap_or(f64::NAN),
            nc.before,
            nc.after,
            nc.relative_pct.unwrap_or(f64::NAN),
        );
    };

    let mh = ws.evaluate_step(&base, &base_report, &StepAction::add(block("mh_pair")))?;
    show("add mh_pair", &mh.deltas);
    let sud = ws.evaluate_step(&mh.state, &mh.report, &StepAction::add(block("sud_pair")))?;
    show("add sud_pair", &sud.deltas);
    let liver = ws.evaluate_step(&sud.state, &sud.report, &StepAction::remove(block("liver_block")))?;
    show("remove liver_block", &liver.deltas);
    let kidney = ws.evaluate_step(&sud.state, &sud.report, &StepAction::remove(block("kidney_block")))?;
    show("remove kidney_block", &kidney.deltas);
    for (id, g) in &kidney.report.group_metrics {
        println!("  after kidney removal: {id:<8} nc {:10.2}  pr {:.4}", g.net_compensation, g.predictive_ratio);
    }
    Ok(())
}
