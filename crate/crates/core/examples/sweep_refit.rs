//! Adds and removes a block of HCCs on a swept cross-product matrix and
//! checks the result against a fit from scratch, timing both.

use std::time::Instant;

use fairstep::design::build_design;
use fairstep::ols::{cross_product, fit, SweepState};
use fairstep::scenario::Scenario;
use fairstep::synthpop::generate;

fn main() -> fairstep::Result<()> {
    let s = Scenario::default_scenario();
    let records = generate(&s.spec)?;
    let universe = s.universe()?;
    let x = build_design(&records, &universe, &s.maps, &s.banding)?;
    let y: Vec<f64> = records.iter().map(|r| r.spend()).collect();
    let mut state = SweepState::with_formula(cross_product(&x, &y)?, &s.baseline)?;
    let block = &s.pool.block("sud_pair").expect("scenario block").variables;

    let t = Instant::now();
    for v in block {
        state.add(v)?;
    }
    let swept = state.fit_result()?;
    let incremental = t.elapsed();

    let t = Instant::now();
    let formula = s.baseline.with_appended(block)?;
    let fresh = fit(&x.select_columns(formula.variables())?, &y)?;
    let scratch = t.elapsed();

    let worst = swept
        .coefficients()
        .iter()
        .zip(fresh.coefficients())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    println!("r2 incremental {:.10} fresh {:.10}", swept.r2, fresh.r2);
    println!("max coefficient difference {worst:.2e}");
    println!("incremental {incremental:.2?}, from scratch {scratch:.2?}");

    for v in block {
        state.remove(v)?;
    }
    println!("after removal r2 {:.10}", state.fit_result()?.r2);
    Ok(())
}
