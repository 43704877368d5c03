//! Enrollee ingestion, cohort exclusions and diagnosis grouping.
//!
//! Diagnoses arrive as ICD codes. Two mappings turn them into model
//! inputs: a *partial* ICD→HCC map (only payment-relevant diagnoses map,
//! and hierarchy rules drop milder categories when a dominant one is
//! present) and a *total* ICD→CCS map used to define groups such as
//! mental health and substance use disorders. Group membership therefore
//! sees diagnoses that the payment formula cannot.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
        }
    }
}

impl std::str::FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "F" | "f" => Ok(Sex::F),
            "M" | "m" => Ok(Sex::M),
            other => Err(format!("expected F or M, got `{other}`")),
        }
    }
}

/// One enrollee: demographics, diagnoses and annual spending (USD).
///
/// `spend_total` is `None` when the claims information is missing; such
/// records are removed by [`apply_exclusions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrolleeRecord {
    pub person_id: String,
    pub age: u8,
    pub sex: Sex,
    pub region: Option<String>,
    pub diagnosis_codes: BTreeSet<String>,
    pub spend_total: Option<f64>,
}

impl EnrolleeRecord {
    /// Spending with missing claims read as zero. Only meaningful after exclusions.
    pub fn spend(&self) -> f64 {
        self.spend_total.unwrap_or(0.0)
    }
}

/// Parsed enrollee file. `region_declared` records whether the header
/// carried a `region` column, which decides whether missing regions are
/// an exclusion reason.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrolleeFile {
    pub records: Vec<EnrolleeRecord>,
    pub region_declared: bool,
}

pub const ENROLLEE_HEADER: [&str; 6] = [
    "person_id",
    "age",
    "sex",
    "region",
    "diagnosis_codes",
    "spend_total",
];

pub const CODE_DELIMITER: char = ';';

/// Reads the enrollee CSV.
///
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn load_enrollees<R: Read>(source: R) -> Result<EnrolleeFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let without_region: Vec<&str> = ENROLLEE_HEADER
        .iter()
        .copied()
        .filter(|h| *h != "region")
        .collect();
    let region_declared = if names == ENROLLEE_HEADER {
        true
    } else if names == without_region {
        false
    } else {
        return Err(Error::ingest(
            1,
            "header",
            format!(
                "expected `{}` (region optional), got `{}`",
                ENROLLEE_HEADER.join(","),
                names.join(",")
            ),
        ));
    };
    let column = |name: &str| names.iter().position(|h| *h == name).expect("validated header");
    let (c_id, c_age, c_sex, c_codes, c_spend) = (
        column("person_id"),
        column("age"),
        column("sex"),
        column("diagnosis_codes"),
        column("spend_total"),
    );
    let c_region = region_declared.then(|| column("region"));

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let line = index + 2;
        let row = row.map_err(|e| Error::ingest(line, "row", e.to_string()))?;
        if row.len() != names.len() {
            return Err(Error::ingest(
                line,
                "row",
                format!("expected {} fields, found {}", names.len(), row.len()),
            ));
        }
        let person_id = row[c_id].trim().to_string();
        if person_id.is_empty() {
            return Err(Error::ingest(line, "person_id", "empty identifier"));
        }
        let age: i64 = row[c_age]
            .trim()
            .parse()
            .map_err(|_| Error::ingest(line, "age", format!("not an integer: `{}`", &row[c_age])))?;
        if !(0..=120).contains(&age) {
            return Err(Error::ingest(line, "age", format!("{age} outside [0, 120]")));
        }
        let sex = row[c_sex]
            .parse::<Sex>()
            .map_err(|m| Error::ingest(line, "sex", m))?;
        let region = c_region
            .map(|c| row[c].trim())
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        let diagnosis_codes = row[c_codes]
            .split(CODE_DELIMITER)
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        let raw_spend = row[c_spend].trim();
        let spend_total = if raw_spend.is_empty() {
            None
        } else {
            let value: f64 = raw_spend.parse().map_err(|_| {
                Error::ingest(line, "spend_total", format!("not a number: `{raw_spend}`"))
            })?;
            if !value.is_finite() {
                return Err(Error::ingest(line, "spend_total", "not finite"));
            }
            Some(value)
        };
        if !seen.insert(person_id.clone()) {
            return Err(Error::DuplicatePerson(person_id));
        }
        records.push(EnrolleeRecord {
            person_id,
            age: age as u8,
            sex,
            region,
            diagnosis_codes,
            spend_total,
        });
    }
    Ok(EnrolleeFile {
        records,
        region_declared,
    })
}

pub fn load_enrollees_file(path: &Path) -> Result<EnrolleeFile> {
    load_enrollees(open(path)?)
}

/// Writes records in the enrollee CSV format.
pub fn write_enrollees<W: std::io::Write>(records: &[EnrolleeRecord], sink: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(sink);
    writer.write_record(ENROLLEE_HEADER)?;
    for r in records {
        let codes = r
            .diagnosis_codes
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(";");
        let spend = r.spend_total.map(|s| format!("{s:.2}")).unwrap_or_default();
        writer.write_record([
            r.person_id.as_str(),
            &r.age.to_string(),
            r.sex.as_str(),
            r.region.as_deref().unwrap_or(""),
            &codes,
            &spend,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingRegion,
    MissingClaims,
    NegativeClaims,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::MissingRegion => "missing_region",
            ExclusionReason::MissingClaims => "missing_claims",
            ExclusionReason::NegativeClaims => "negative_claims",
        }
    }
}

/// Counts of removed records by reason. Only non-zero reasons appear.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input: usize,
    pub kept: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
}

impl ExclusionReport {
    pub fn total_excluded(&self) -> usize {
        self.excluded.values().sum()
    }

    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.excluded.get(&reason).copied().unwrap_or(0)
    }
}

/// Drops records with missing region (only when `require_region`), missing
/// claims or negative spending. Order of kept records is preserved; the
/// first applicable reason is charged.
pub fn apply_exclusions(
    records: Vec<EnrolleeRecord>,
    require_region: bool,
) -> (Vec<EnrolleeRecord>, ExclusionReport) {
    let mut report = ExclusionReport {
        input: records.len(),
        ..Default::default()
    };
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| {
            let reason = if require_region && r.region.is_none() {
                Some(ExclusionReason::MissingRegion)
            } else {
                match r.spend_total {
                    None => Some(ExclusionReason::MissingClaims),
                    Some(s) if s < 0.0 => Some(ExclusionReason::NegativeClaims),
                    Some(_) => None,
                }
            };
            if let Some(reason) = reason {
                *report.excluded.entry(reason).or_default() += 1;
            }
            reason.is_none()
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

/// A dominant HCC and the categories it suppresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyRule {
    pub dominant: String,
    pub suppressed: BTreeSet<String>,
}

/// ICD→HCC and ICD→CCS mappings plus hierarchy rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeMaps {
    pub icd_to_hcc: BTreeMap<String, String>,
    pub icd_to_ccs: BTreeMap<String, String>,
    pub hierarchies: Vec<HierarchyRule>,
    /// HCCs allowed in formulas, in first-appearance order of the HCC map.
    pub payment_hccs: Vec<String>,
    #[serde(skip)]
    closure: BTreeMap<String, BTreeSet<String>>,
}

impl CodeMaps {
    /// Assembles and validates maps. `hcc_pairs` keeps file order so the
    /// payment HCC list is deterministic.
    pub fn new(
        hcc_pairs: Vec<(String, String)>,
        ccs_pairs: Vec<(String, String)>,
        hierarchy_pairs: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut icd_to_hcc = BTreeMap::new();
        let mut payment_hccs = Vec::new();
        let mut hcc_space = BTreeSet::new();
        for (icd, hcc) in hcc_pairs {
            if let Some(prev) = icd_to_hcc.insert(icd.clone(), hcc.clone()) {
                if prev != hcc {
                    return Err(Error::InvalidMaps(format!(
                        "ICD `{icd}` maps to both `{prev}` and `{hcc}`"
                    )));
                }
            }
            if hcc_space.insert(hcc.clone()) {
                payment_hccs.push(hcc);
            }
        }
        let mut icd_to_ccs = BTreeMap::new();
        for (icd, ccs) in ccs_pairs {
            if let Some(prev) = icd_to_ccs.insert(icd.clone(), ccs.clone()) {
                if prev != ccs {
                    return Err(Error::InvalidMaps(format!(
                        "ICD `{icd}` maps to both CCS `{prev}` and `{ccs}`"
                    )));
                }
            }
        }
        let mut hierarchies: Vec<HierarchyRule> = Vec::new();
        for (dominant, suppressed) in hierarchy_pairs {
            match hierarchies.iter_mut().find(|r| r.dominant == dominant) {
                Some(rule) => {
                    rule.suppressed.insert(suppressed);
                }
                None => hierarchies.push(HierarchyRule {
                    dominant,
                    suppressed: BTreeSet::from([suppressed]),
                }),
            }
        }
        Self::from_parts(icd_to_hcc, icd_to_ccs, hierarchies, payment_hccs)
    }

    pub fn from_parts(
        icd_to_hcc: BTreeMap<String, String>,
        icd_to_ccs: BTreeMap<String, String>,
        hierarchies: Vec<HierarchyRule>,
        payment_hccs: Vec<String>,
    ) -> Result<Self> {
        let mut maps = CodeMaps {
            icd_to_hcc,
            icd_to_ccs,
            hierarchies,
            payment_hccs,
            closure: BTreeMap::new(),
        };
        maps.validate()?;
        maps.closure = maps.suppression_closure();
        Ok(maps)
    }

    fn validate(&self) -> Result<()> {
        for icd in self.icd_to_hcc.keys() {
            if !self.icd_to_ccs.contains_key(icd) {
                return Err(Error::InvalidMaps(format!(
                    "ICD `{icd}` has an HCC but no CCS mapping"
                )));
            }
        }
        let hcc_space: BTreeSet<&String> = self.icd_to_hcc.values().collect();
        for hcc in &self.payment_hccs {
            if !hcc_space.contains(hcc) {
                return Err(Error::InvalidMaps(format!(
                    "payment HCC `{hcc}` is not produced by any ICD"
                )));
            }
        }
        for rule in &self.hierarchies {
            if rule.suppressed.contains(&rule.dominant) {
                return Err(Error::InvalidMaps(format!(
                    "HCC `{}` suppresses itself",
                    rule.dominant
                )));
            }
            for hcc in std::iter::once(&rule.dominant).chain(&rule.suppressed) {
                if !hcc_space.contains(hcc) {
                    return Err(Error::InvalidMaps(format!(
                        "hierarchy references unknown HCC `{hcc}`"
                    )));
                }
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(
            node: &'a str,
            maps: &'a CodeMaps,
            state: &mut BTreeMap<&'a str, u8>,
        ) -> Result<()> {
            match state.get(node) {
                Some(1) => {
                    return Err(Error::InvalidMaps(format!(
                        "hierarchy rules form a cycle through `{node}`"
                    )))
                }
                Some(2) => return Ok(()),
                _ => {}
            }
            state.insert(node, 1);
            for rule in maps.hierarchies.iter().filter(|r| r.dominant == node) {
                for next in &rule.suppressed {
                    visit(next, maps, state)?;
                }
            }
            state.insert(node, 2);
            Ok(())
        }
        for rule in &self.hierarchies {
            visit(&rule.dominant, self, &mut state)?;
        }
        Ok(())
    }

    /// For every dominant HCC, everything reachable through suppression edges.
    fn suppression_closure(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut closure = BTreeMap::new();
        for rule in &self.hierarchies {
            let mut reach: BTreeSet<String> = BTreeSet::new();
            let mut frontier: Vec<&String> = rule.suppressed.iter().collect();
            while let Some(hcc) = frontier.pop() {
                if reach.insert(hcc.clone()) {
                    for next in self.hierarchies.iter().filter(|r| &r.dominant == hcc) {
                        frontier.extend(next.suppressed.iter());
                    }
                }
            }
            closure
                .entry(rule.dominant.clone())
                .or_insert_with(BTreeSet::new)
                .extend(reach);
        }
        closure
    }

    pub fn hcc_space(&self) -> BTreeSet<&str> {
        self.icd_to_hcc.values().map(String::as_str).collect()
    }

    pub fn ccs_space(&self) -> BTreeSet<&str> {
        self.icd_to_ccs.values().map(String::as_str).collect()
    }

    pub fn is_payment_hcc(&self, hcc: &str) -> bool {
        self.payment_hccs.iter().any(|h| h == hcc)
    }

    pub fn load(hcc_map: &Path, ccs_map: &Path, hierarchy: Option<&Path>) -> Result<Self> {
        let hcc = read_pairs(hcc_map, ["icd", "hcc"])?;
        let ccs = read_pairs(ccs_map, ["icd", "ccs"])?;
        let rules = match hierarchy {
            Some(path) => read_pairs(path, ["dominant_hcc", "suppressed_hcc"])?,
            None => Vec::new(),
        };
        Self::new(hcc, ccs, rules)
    }

    pub fn from_readers<A: Read, B: Read, C: Read>(hcc: A, ccs: B, hierarchy: C) -> Result<Self> {
        Self::new(
            parse_pairs(hcc, ["icd", "hcc"])?,
            parse_pairs(ccs, ["icd", "ccs"])?,
            parse_pairs(hierarchy, ["dominant_hcc", "suppressed_hcc"])?,
        )
    }

    /// Writes the three map files into `dir` using the canonical names.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let mut hcc = csv::Writer::from_path(dir.join(HCC_MAP_FILE))?;
        hcc.write_record(["icd", "hcc"])?;
        // payment order first so a reload reproduces payment_hccs
        for target in &self.payment_hccs {
            for (icd, h) in self.icd_to_hcc.iter().filter(|(_, h)| *h == target) {
                hcc.write_record([icd, h])?;
            }
        }
        for (icd, h) in self.icd_to_hcc.iter().filter(|(_, h)| !self.is_payment_hcc(h)) {
            hcc.write_record([icd, h])?;
        }
        hcc.flush()?;
        let mut ccs = csv::Writer::from_path(dir.join(CCS_MAP_FILE))?;
        ccs.write_record(["icd", "ccs"])?;
        for (icd, c) in &self.icd_to_ccs {
            ccs.write_record([icd, c])?;
        }
        ccs.flush()?;
        let mut rules = csv::Writer::from_path(dir.join(HIERARCHY_FILE))?;
        rules.write_record(["dominant_hcc", "suppressed_hcc"])?;
        for rule in &self.hierarchies {
            for s in &rule.suppressed {
                rules.write_record([&rule.dominant, s])?;
            }
        }
        rules.flush()?;
        Ok(())
    }
}

pub const HCC_MAP_FILE: &str = "hcc_map.csv";
pub const CCS_MAP_FILE: &str = "ccs_map.csv";
pub const HIERARCHY_FILE: &str = "hierarchy.csv";

pub(crate) fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(String, String)>> {
    parse_pairs(open(path)?, header)
}

fn parse_pairs<R: Read>(source: R, header: [&str; 2]) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let got: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got != header {
        return Err(Error::ingest(
            1,
            "header",
            format!("expected `{}`, got `{}`", header.join(","), got.join(",")),
        ));
    }
    let mut pairs = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let line = index + 2;
        let row = row.map_err(|e| Error::ingest(line, "row", e.to_string()))?;
        if row.len() != 2 {
            return Err(Error::ingest(line, "row", "expected two fields"));
        }
        let (a, b) = (row[0].trim(), row[1].trim());
        if a.is_empty() || b.is_empty() {
            let field = if a.is_empty() { header[0] } else { header[1] };
            return Err(Error::ingest(line, field, "empty value"));
        }
        pairs.push((a.to_string(), b.to_string()));
    }
    Ok(pairs)
}

/// HCC flags for one record: the image of its ICD codes under the HCC map,
/// minus everything a present dominant HCC suppresses (directly or through
/// a chain of rules). Dominance is judged on the unfiltered image, which
/// makes the result independent of rule order.
pub fn assign_hccs(record: &EnrolleeRecord, maps: &CodeMaps) -> BTreeSet<String> {
    let image: BTreeSet<&String> = record
        .diagnosis_codes
        .iter()
        .filter_map(|icd| maps.icd_to_hcc.get(icd))
        .collect();
    let suppressed: BTreeSet<&String> = image
        .iter()
        .filter_map(|hcc| maps.closure.get(hcc.as_str()))
        .flatten()
        .collect();
    image
        .into_iter()
        .filter(|h| !suppressed.contains(h))
        .cloned()
        .collect()
}

pub fn assign_ccs(record: &EnrolleeRecord, maps: &CodeMaps) -> Result<BTreeSet<String>> {
    record
        .diagnosis_codes
        .iter()
        .map(|icd| {
            maps.icd_to_ccs
                .get(icd)
                .cloned()
                .ok_or_else(|| Error::UnmappedIcd(icd.clone()))
        })
        .collect()
}

/// A population subgroup defined by CCS categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub group_id: String,
    pub ccs_categories: BTreeSet<String>,
}

impl GroupDefinition {
    pub fn validate(&self, maps: &CodeMaps) -> Result<()> {
        if self.group_id.trim().is_empty() {
            return Err(Error::InvalidGroup("empty group_id".into()));
        }
        if self.ccs_categories.is_empty() {
            return Err(Error::InvalidGroup(format!(
                "group `{}` has no CCS categories",
                self.group_id
            )));
        }
        let space = maps.ccs_space();
        if let Some(unknown) = self.ccs_categories.iter().find(|c| !space.contains(c.as_str())) {
            return Err(Error::InvalidGroup(format!(
                "group `{}` references unknown CCS category `{unknown}`",
                self.group_id
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroupDocument {
    One(GroupDefinition),
    Many(Vec<GroupDefinition>),
}

/// Parses a group document: a single definition or a list of them.
pub fn parse_groups(text: &str) -> Result<Vec<GroupDefinition>> {
    let groups = match serde_json::from_str::<GroupDocument>(text)? {
        GroupDocument::One(g) => vec![g],
        GroupDocument::Many(gs) => gs,
    };
    let mut ids = BTreeSet::new();
    for g in &groups {
        if !ids.insert(&g.group_id) {
            return Err(Error::InvalidGroup(format!("duplicate group `{}`", g.group_id)));
        }
    }
    Ok(groups)
}

pub fn load_groups(path: &Path, maps: &CodeMaps) -> Result<Vec<GroupDefinition>> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let groups = parse_groups(&text)?;
    for g in &groups {
        g.validate(maps)?;
    }
    Ok(groups)
}

/// `true` for records with at least one diagnosis in the group's CCS set.
pub fn group_membership(
    records: &[EnrolleeRecord],
    def: &GroupDefinition,
    maps: &CodeMaps,
) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| {
            let ccs = assign_ccs(r, maps)?;
            Ok(ccs.iter().any(|c| def.ccs_categories.contains(c)))
        })
        .collect()
}
