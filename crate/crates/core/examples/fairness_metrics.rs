//! In-sample and five-fold cross-validated reports for the baseline
//! formula on the default scenario, per group.

use fairstep::cli::format_report;
use fairstep::metrics::EvaluationMode;
use fairstep::scenario::Scenario;
use fairstep::stepwise::Workspace;
use fairstep::synthpop::generate;

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let records = generate(&s.spec)?;
    let mut ws = Workspace::from_records(&records, &s.baseline, &s.maps, &s.banding, &s.groups)?;
    for mode in [
        EvaluationMode::InSample,
        EvaluationMode::CrossValidated { folds: 5, seed: 1 },
    ] {
        ws.prepare(mode)?;
        let report = ws.report(&ws.state(&s.baseline, mode)?)?;
        println!("{mode:?}");
        print!("{}", format_report(&report));
        println!();
    }
    Ok(())
}
