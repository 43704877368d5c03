//! Runs the R²-maximizing and the net-compensation policies on the default
//! scenario and prints where their accepted steps part ways.

use fairstep::scenario::Scenario;
use fairstep::stepwise::{compare_policies, Workspace};
use fairstep::synthpop::generate;

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let records = generate(&s.spec)?;
    let mut ws = Workspace::from_records(&records, &s.universe()?, &s.maps, &s.banding, &s.groups)?;
    let cmp = compare_policies(&mut ws, &s.baseline, &s.pool, &[s.max_r2.clone(), s.net_comp.clone()])?;
    print!("{}", cmp.summary_table());
    for run in &cmp.runs {
        println!("\n{}:", run.label);
        for e in &run.trace.entries {
            println!(
                "  #{:<2} {:<16} {:<8} {}",
                e.step,
                e.action.label(),
                if e.accepted { "accept" } else { "reject" },
                e.reason
            );
        }
    }
    Ok(())
}
