//! Generates the default scenario population and prints its calibration
//! statistics next to the target bands.

use std::time::Instant;

use fairstep::scenario::Scenario;
use fairstep::synthpop::{calibration_report, generate, CalibrationTargets};

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let mut spec = s.spec.clone();
    if let Some(seed) = std::env::args().nth(1) {
        spec.seed = seed.parse().expect("seed must be an integer");
    }
    let t = Instant::now();
    let records = generate(&spec)?;
    println!("generated {} records in {:.2?}", records.len(), t.elapsed());
    let report = calibration_report(&records, &s.maps, s.target_group(), &s.baseline, &s.banding)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let misses = CalibrationTargets::published().misses(&report);
    if misses.is_empty() {
        println!("all calibration targets met");
    } else {
        println!("missed: {}", misses.join(", "));
    }
    println!("elapsed {:.2?}", t.elapsed());
    Ok(())
}
