//! Builds the baseline design for a 20,000-person draw of the default
//! scenario and prints the least-squares fit with its naive p-values.

use fairstep::design::build_design;
use fairstep::ols::fit;
use fairstep::scenario::Scenario;
use fairstep::synthpop::generate;

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let mut spec = s.spec.clone();
    spec.n = 20_000;
    let records = generate(&spec)?;
    let x = build_design(&records, &s.baseline, &s.maps, &s.banding)?;
    let y: Vec<f64> = records.iter().map(|r| r.spend()).collect();
    println!("design: {} rows x {} columns", x.n(), x.p());
    let f = fit(&x, &y)?;
    print!("{f}");
    println!("significant at 0.05: {}", f.significant(0.05).len());
    Ok(())
}
