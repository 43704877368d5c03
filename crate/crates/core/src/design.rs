//! Indicator design matrices for main-terms risk-adjustment formulas.
//!
//! Every column except the intercept is a 0/1 indicator (an age-sex cell or
//! an HCC flag), and most are sparse, so columns are stored as sorted row
//! index lists. The intercept column is implicit. Derived matrices share
//! unchanged column storage.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cohort::{assign_hccs, CodeMaps, EnrolleeRecord, Sex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Intercept,
    AgeSexCell,
    Hcc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariableId {
    pub kind: VariableKind,
    pub key: String,
}

impl VariableId {
    pub const INTERCEPT_KEY: &'static str = "1";

    pub fn intercept() -> Self {
        VariableId {
            kind: VariableKind::Intercept,
            key: Self::INTERCEPT_KEY.to_string(),
        }
    }

    pub fn cell(label: impl Into<String>) -> Self {
        VariableId {
            kind: VariableKind::AgeSexCell,
            key: label.into(),
        }
    }

    pub fn hcc(id: impl Into<String>) -> Self {
        VariableId {
            kind: VariableKind::Hcc,
            key: id.into(),
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.kind == VariableKind::Intercept
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            VariableKind::Intercept => f.write_str("(intercept)"),
            VariableKind::AgeSexCell => write!(f, "cell:{}", self.key),
            VariableKind::Hcc => write!(f, "hcc:{}", self.key),
        }
    }
}

/// Age bands crossed with sex. The default is 5-year bands up to 80–84
/// plus an open 85+ band: 18 bands × 2 sexes = 36 cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBanding {
    pub band_width: u8,
    pub top_band_start: u8,
}

impl Default for AgeBanding {
    fn default() -> Self {
        AgeBanding {
            band_width: 5,
            top_band_start: 85,
        }
    }
}

impl AgeBanding {
    fn band_label(&self, age: u8) -> String {
        if age >= self.top_band_start {
            format!("{:02}_PLUS", self.top_band_start)
        } else {
            let lo = age / self.band_width * self.band_width;
            format!("{:02}_{:02}", lo, lo + self.band_width - 1)
        }
    }

    pub fn cell(&self, age: i64, sex: Sex) -> Result<String> {
        if !(0..=120).contains(&age) {
            return Err(Error::AgeOutOfRange(age));
        }
        Ok(format!("{}_{}", sex.as_str(), self.band_label(age as u8)))
    }

    /// All cell labels, females first, ascending age.
    pub fn cells(&self) -> Vec<String> {
        let mut starts: Vec<u8> = (0..self.top_band_start)
            .step_by(self.band_width as usize)
            .collect();
        starts.push(self.top_band_start);
        [Sex::F, Sex::M]
            .into_iter()
            .flat_map(|sex| {
                starts
                    .iter()
                    .map(move |&a| format!("{}_{}", sex.as_str(), self.band_label(a)))
            })
            .collect()
    }
}

/// Cell label under the default banding.
pub fn age_sex_cell(age: i64, sex: Sex) -> Result<String> {
    AgeBanding::default().cell(age, sex)
}

/// Ordered right-hand side of a formula. The intercept comes first, exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<VariableId>", into = "Vec<VariableId>")]
pub struct Formula {
    variables: Vec<VariableId>,
}

impl Formula {
    pub fn new(variables: Vec<VariableId>) -> Result<Self> {
        match variables.first() {
            Some(v) if v.is_intercept() && v.key == VariableId::INTERCEPT_KEY => {}
            Some(v) if v.is_intercept() => {
                return Err(Error::InvalidFormula(format!(
                    "intercept key must be `1`, got `{}`",
                    v.key
                )))
            }
            _ => return Err(Error::InvalidFormula("intercept must come first".into())),
        }
        let mut seen = BTreeSet::new();
        for v in &variables {
            if !seen.insert(v) {
                return Err(Error::InvalidFormula(format!("duplicate variable {v}")));
            }
        }
        if variables.iter().skip(1).any(VariableId::is_intercept) {
            return Err(Error::InvalidFormula("intercept appears more than once".into()));
        }
        Ok(Formula { variables })
    }

    pub fn intercept_only() -> Self {
        Formula {
            variables: vec![VariableId::intercept()],
        }
    }

    /// Intercept, every cell except `reference_cell`, then the HCCs.
    pub fn standard<I, S>(banding: &AgeBanding, reference_cell: &str, hccs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut variables = vec![VariableId::intercept()];
        variables.extend(
            banding
                .cells()
                .into_iter()
                .filter(|c| c != reference_cell)
                .map(VariableId::cell),
        );
        variables.extend(hccs.into_iter().map(VariableId::hcc));
        let formula = Formula::new(variables)?;
        formula.validate_cells(banding)?;
        Ok(formula)
    }

    pub fn variables(&self) -> &[VariableId] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn contains(&self, v: &VariableId) -> bool {
        self.variables.contains(v)
    }

    pub fn position(&self, v: &VariableId) -> Option<usize> {
        self.variables.iter().position(|x| x == v)
    }

    pub fn hccs(&self) -> impl Iterator<Item = &VariableId> {
        self.variables.iter().filter(|v| v.kind == VariableKind::Hcc)
    }

    /// The omitted reference cell, if the cells form a partition minus one.
    pub fn validate_cells(&self, banding: &AgeBanding) -> Result<String> {
        let all = banding.cells();
        let present: BTreeSet<&str> = self
            .variables
            .iter()
            .filter(|v| v.kind == VariableKind::AgeSexCell)
            .map(|v| v.key.as_str())
            .collect();
        if let Some(unknown) = present.iter().find(|c| !all.iter().any(|a| a == *c)) {
            return Err(Error::InvalidFormula(format!("unknown age-sex cell `{unknown}`")));
        }
        let missing: Vec<&String> = all.iter().filter(|c| !present.contains(c.as_str())).collect();
        match missing.as_slice() {
            [reference] => Ok((*reference).clone()),
            _ => Err(Error::InvalidFormula(format!(
                "age-sex cells must cover all {} cells but one; {} missing",
                all.len(),
                missing.len()
            ))),
        }
    }

    pub fn with_appended(&self, vars: &[VariableId]) -> Result<Self> {
        let mut variables = self.variables.clone();
        variables.extend(vars.iter().cloned());
        Formula::new(variables)
    }

    pub fn without(&self, vars: &[VariableId]) -> Result<Self> {
        for v in vars {
            if v.is_intercept() {
                return Err(Error::RemoveIntercept);
            }
            if !self.contains(v) {
                return Err(Error::UnknownColumn(v.to_string()));
            }
        }
        Formula::new(
            self.variables
                .iter()
                .filter(|v| !vars.contains(v))
                .cloned()
                .collect(),
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("formula serializes")
    }
}

impl TryFrom<Vec<VariableId>> for Formula {
    type Error = Error;

    fn try_from(v: Vec<VariableId>) -> Result<Self> {
        Formula::new(v)
    }
}

impl From<Formula> for Vec<VariableId> {
    fn from(f: Formula) -> Self {
        f.variables
    }
}

/// Column of a design matrix: either the implicit all-ones intercept or a
/// sorted list of the rows where the indicator is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Column {
    Ones,
    Rows(Arc<Vec<u32>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignMatrix {
    n: usize,
    columns: Vec<VariableId>,
    data: Vec<Column>,
    support: Vec<usize>,
}

impl DesignMatrix {
    /// Builds a matrix from explicit indicator columns. Row lists need not
    /// be sorted; duplicates are rejected.
    pub fn from_indicator_columns(
        n: usize,
        intercept: bool,
        columns: Vec<(VariableId, Vec<u32>)>,
    ) -> Result<Self> {
        let mut out = DesignMatrix {
            n,
            columns: Vec::new(),
            data: Vec::new(),
            support: Vec::new(),
        };
        if intercept {
            out.columns.push(VariableId::intercept());
            out.data.push(Column::Ones);
            out.support.push(n);
        }
        for (id, rows) in columns {
            out = out.with_indicator(id, rows)?;
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[VariableId] {
        &self.columns
    }

    pub fn column_index(&self, v: &VariableId) -> Option<usize> {
        self.columns.iter().position(|c| c == v)
    }

    /// Number of ones in each column.
    pub fn column_support(&self) -> &[usize] {
        &self.support
    }

    /// Rows where column `c` is 1; `None` for the intercept (all rows).
    pub fn column_rows(&self, c: usize) -> Option<&[u32]> {
        match &self.data[c] {
            Column::Ones => None,
            Column::Rows(r) => Some(r),
        }
    }

    pub fn is_ones(&self, c: usize) -> bool {
        matches!(self.data[c], Column::Ones)
    }

    pub fn get(&self, row: usize, c: usize) -> u8 {
        match &self.data[c] {
            Column::Ones => 1,
            Column::Rows(r) => r.binary_search(&(row as u32)).is_ok() as u8,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.p()]; self.n];
        for c in 0..self.p() {
            match &self.data[c] {
                Column::Ones => m.iter_mut().for_each(|row| row[c] = 1.0),
                Column::Rows(rows) => rows.iter().for_each(|&r| m[r as usize][c] = 1.0),
            }
        }
        m
    }

    /// Row-major view: for every row, the indices of its non-intercept ones.
    pub fn row_lists(&self) -> Vec<Vec<u32>> {
        let mut rows = vec![Vec::new(); self.n];
        for (c, col) in self.data.iter().enumerate() {
            if let Column::Rows(r) = col {
                for &i in r.iter() {
                    rows[i as usize].push(c as u32);
                }
            }
        }
        rows
    }

    /// Appends an explicit indicator column.
    pub fn with_indicator(&self, v: VariableId, mut rows: Vec<u32>) -> Result<Self> {
        if self.column_index(&v).is_some() {
            return Err(Error::DuplicateVariable(v.to_string()));
        }
        if v.is_intercept() {
            return Err(Error::InvalidFormula("intercept cannot be appended".into()));
        }
        rows.sort_unstable();
        if rows.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidFormula(format!("column {v} lists a row twice")));
        }
        if let Some(&last) = rows.last() {
            if last as usize >= self.n {
                return Err(Error::LengthMismatch {
                    what: "indicator row index",
                    got: last as usize + 1,
                    expected: self.n,
                });
            }
        }
        let mut out = self.clone();
        out.support.push(rows.len());
        out.columns.push(v);
        out.data.push(Column::Rows(Arc::new(rows)));
        Ok(out)
    }

    /// Appends the column for `v` computed from the cohort.
    pub fn with_column(
        &self,
        v: &VariableId,
        records: &[EnrolleeRecord],
        maps: &CodeMaps,
        banding: &AgeBanding,
    ) -> Result<Self> {
        if records.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "records",
                got: records.len(),
                expected: self.n,
            });
        }
        let rows = indicator_rows(v, records, maps, banding)?;
        self.with_indicator(v.clone(), rows)
    }

    pub fn without_column(&self, v: &VariableId) -> Result<Self> {
        if v.is_intercept() {
            return Err(Error::RemoveIntercept);
        }
        let c = self
            .column_index(v)
            .ok_or_else(|| Error::UnknownColumn(v.to_string()))?;
        let mut out = self.clone();
        out.columns.remove(c);
        out.data.remove(c);
        out.support.remove(c);
        Ok(out)
    }

    /// Columns reordered/subset to `vars`.
    pub fn select_columns(&self, vars: &[VariableId]) -> Result<Self> {
        let mut out = DesignMatrix {
            n: self.n,
            columns: Vec::with_capacity(vars.len()),
            data: Vec::with_capacity(vars.len()),
            support: Vec::with_capacity(vars.len()),
        };
        for v in vars {
            let c = self
                .column_index(v)
                .ok_or_else(|| Error::UnknownColumn(v.to_string()))?;
            out.columns.push(v.clone());
            out.data.push(self.data[c].clone());
            out.support.push(self.support[c]);
        }
        Ok(out)
    }

    /// Submatrix of the given rows, renumbered in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut new_index = vec![u32::MAX; self.n];
        for (k, &r) in rows.iter().enumerate() {
            new_index[r] = k as u32;
        }
        let mut out = DesignMatrix {
            n: rows.len(),
            columns: self.columns.clone(),
            data: Vec::with_capacity(self.p()),
            support: Vec::with_capacity(self.p()),
        };
        for col in &self.data {
            match col {
                Column::Ones => {
                    out.data.push(Column::Ones);
                    out.support.push(rows.len());
                }
                Column::Rows(r) => {
                    let mut kept: Vec<u32> = r
                        .iter()
                        .map(|&i| new_index[i as usize])
                        .filter(|&k| k != u32::MAX)
                        .collect();
                    kept.sort_unstable();
                    out.support.push(kept.len());
                    out.data.push(Column::Rows(Arc::new(kept)));
                }
            }
        }
        out
    }
}

fn indicator_rows(
    v: &VariableId,
    records: &[EnrolleeRecord],
    maps: &CodeMaps,
    banding: &AgeBanding,
) -> Result<Vec<u32>> {
    match v.kind {
        VariableKind::Intercept => Err(Error::InvalidFormula("intercept is implicit".into())),
        VariableKind::AgeSexCell => {
            let mut rows = Vec::new();
            for (i, r) in records.iter().enumerate() {
                if banding.cell(r.age as i64, r.sex)? == v.key {
                    rows.push(i as u32);
                }
            }
            Ok(rows)
        }
        VariableKind::Hcc => {
            if !maps.is_payment_hcc(&v.key) {
                return Err(Error::UnknownHcc(v.key.clone()));
            }
            Ok(records
                .iter()
                .enumerate()
                .filter(|(_, r)| assign_hccs(r, maps).contains(&v.key))
                .map(|(i, _)| i as u32)
                .collect())
        }
    }
}

/// Builds the design matrix for `formula` over `records`.
pub fn build_design(
    records: &[EnrolleeRecord],
    formula: &Formula,
    maps: &CodeMaps,
    banding: &AgeBanding,
) -> Result<DesignMatrix> {
    if records.is_empty() {
        return Err(Error::InvalidFormula("no records".into()));
    }
    formula.validate_cells(banding)?;
    for v in formula.hccs() {
        if !maps.is_payment_hcc(&v.key) {
            return Err(Error::UnknownHcc(v.key.clone()));
        }
    }
    let index: HashMap<&VariableId, usize> = formula
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); formula.len()];
    for (i, r) in records.iter().enumerate() {
        let cell = VariableId::cell(banding.cell(r.age as i64, r.sex)?);
        if let Some(&c) = index.get(&cell) {
            rows[c].push(i as u32);
        }
        for hcc in assign_hccs(r, maps) {
            if let Some(&c) = index.get(&VariableId::hcc(hcc)) {
                rows[c].push(i as u32);
            }
        }
    }
    let n = records.len();
    let mut out = DesignMatrix {
        n,
        columns: Vec::with_capacity(formula.len()),
        data: Vec::with_capacity(formula.len()),
        support: Vec::with_capacity(formula.len()),
    };
    for (v, r) in formula.variables().iter().zip(rows) {
        out.columns.push(v.clone());
        if v.is_intercept() {
            out.data.push(Column::Ones);
            out.support.push(n);
        } else {
            out.support.push(r.len());
            out.data.push(Column::Rows(Arc::new(r)));
        }
    }
    Ok(out)
}
