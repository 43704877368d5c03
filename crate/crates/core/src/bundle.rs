//! Validated cohort bundles: a directory holding the cleaned enrollee
//! file, the code maps it was checked against, the exclusion report and
//! a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{
    apply_exclusions, assign_ccs, load_enrollees_file, write_enrollees, CodeMaps, EnrolleeRecord,
    ExclusionReport, CCS_MAP_FILE, HCC_MAP_FILE, HIERARCHY_FILE,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENROLLEES_FILE: &str = "enrollees.csv";
pub const EXCLUSIONS_FILE: &str = "exclusions.json";
pub const BUNDLE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub rows: usize,
    pub input_rows: usize,
    pub region_declared: bool,
    pub payment_hccs: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub records: Vec<EnrolleeRecord>,
    pub maps: CodeMaps,
    pub exclusions: ExclusionReport,
}

impl Bundle {
    /// Applies exclusions and checks every remaining diagnosis against the
    /// CCS map.
    pub fn build(records: Vec<EnrolleeRecord>, region_declared: bool, maps: CodeMaps) -> Result<Self> {
        let (records, exclusions) = apply_exclusions(records, region_declared);
        for r in &records {
            assign_ccs(r, &maps)?;
        }
        let manifest = Manifest {
            format: BUNDLE_FORMAT,
            rows: records.len(),
            input_rows: exclusions.input,
            region_declared,
            payment_hccs: maps.payment_hccs.len(),
            files: [ENROLLEES_FILE, HCC_MAP_FILE, CCS_MAP_FILE, HIERARCHY_FILE, EXCLUSIONS_FILE]
                .map(String::from)
                .to_vec(),
        };
        Ok(Bundle {
            manifest,
            records,
            maps,
            exclusions,
        })
    }

    /// Reads and validates raw inputs.
    pub fn ingest(enrollees: &Path, hcc_map: &Path, ccs_map: &Path, hierarchy: Option<&Path>) -> Result<Self> {
        let maps = CodeMaps::load(hcc_map, ccs_map, hierarchy)?;
        let file = load_enrollees_file(enrollees)?;
        Self::build(file.records, file.region_declared, maps)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| Error::File {
            path: dir.to_path_buf(),
            source,
        })?;
        let create = |name: &str| -> Result<fs::File> {
            let path = dir.join(name);
            fs::File::create(&path).map_err(|source| Error::File { path, source })
        };
        write_enrollees(&self.records, std::io::BufWriter::new(create(ENROLLEES_FILE)?))?;
        self.maps.write_dir(dir)?;
        serde_json::to_writer_pretty(create(EXCLUSIONS_FILE)?, &self.exclusions)?;
        serde_json::to_writer_pretty(create(MANIFEST_FILE)?, &self.manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| Error::File { path, source })
        };
        let manifest: Manifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::InvalidMaps(format!(
                "bundle format {} is not supported (expected {BUNDLE_FORMAT})",
                manifest.format
            )));
        }
        let maps = CodeMaps::load(
            &dir.join(HCC_MAP_FILE),
            &dir.join(CCS_MAP_FILE),
            Some(&dir.join(HIERARCHY_FILE)),
        )?;
        let file = load_enrollees_file(&dir.join(ENROLLEES_FILE))?;
        let exclusions: ExclusionReport = serde_json::from_str(&read(EXCLUSIONS_FILE)?)?;
        if file.records.len() != manifest.rows {
            return Err(Error::Ingest {
                row: 0,
                field: MANIFEST_FILE.into(),
                message: format!(
                    "manifest lists {} rows, enrollee file has {}",
                    manifest.rows,
                    file.records.len()
                ),
            });
        }
        Ok(Bundle {
            manifest,
            records: file.records,
            maps,
            exclusions,
        })
    }

    pub fn outcome(&self) -> Vec<f64> {
        self.records.iter().map(EnrolleeRecord::spend).collect()
    }
}

/// Canonical form of a bundle path, used as a cache key.
pub fn bundle_key(dir: &Path) -> PathBuf {
    dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf())
}
