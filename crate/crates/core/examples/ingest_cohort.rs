//! Ingests the small fixture file against the toy code maps, prints the
//! exclusion counts and each kept person's HCC and CCS sets, and writes a
//! bundle to a temporary directory.

use std::path::Path;

use fairstep::bundle::Bundle;
use fairstep::cohort::{assign_ccs, assign_hccs, ExclusionReason};

fn main() -> fairstep::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures");
    let bundle = Bundle::ingest(
        &dir.join("exclusions.csv"),
        &dir.join("toy_hcc_map.csv"),
        &dir.join("toy_ccs_map.csv"),
        Some(&dir.join("toy_hierarchy.csv")),
    )?;
    let ex = &bundle.exclusions;
    println!("input rows {}", ex.input);
    for reason in [
        ExclusionReason::MissingRegion,
        ExclusionReason::MissingClaims,
        ExclusionReason::NegativeClaims,
    ] {
        println!("  excluded for {:<16} {}", reason.as_str(), ex.count(reason));
    }
    for r in &bundle.records {
        let hccs: Vec<String> = assign_hccs(r, &bundle.maps).into_iter().collect();
        let ccs: Vec<String> = assign_ccs(r, &bundle.maps)?.into_iter().collect();
        println!("{:<4} hcc {:<20} ccs {}", r.person_id, hccs.join(","), ccs.join(","));
    }
    let out = std::env::temp_dir().join("fairstep-example-bundle");
    bundle.write(&out)?;
    println!("bundle written to {}", out.display());
    Ok(())
}
