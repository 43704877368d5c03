//! The sweep operator and an incremental least-squares state built on it.
//!
//! Sweeping pivot `k` of the augmented Gram matrix brings column `k` into
//! the regression; after sweeping a set of predictors the swept block holds
//! `-(XᵀX)⁻¹`, the outcome column holds the coefficients and the outcome
//! corner holds the residual sum of squares. The reverse sweep takes a
//! column back out. Both cost O(p²).

use serde::{Deserialize, Serialize};

use crate::design::{Formula, VariableId};
use crate::error::{Error, Result};

use super::gram::CrossProduct;

/// A column is aliased when its pivot falls below this fraction of its
/// original diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::LengthMismatch {
                what: "matrix entries",
                got: data.len(),
                expected: dim * dim,
            });
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Forward sweep on pivot `k`. Fails without touching anything when
    /// `|M[k][k]| <= tolerance`.
    pub fn sweep(&self, k: usize, tolerance: f64) -> Result<SquareMatrix> {
        let mut out = self.clone();
        sweep_in_place(&mut out.data, out.dim, k, tolerance, Direction::Forward)?;
        Ok(out)
    }

    /// Reverse sweep on pivot `k`; undoes a forward sweep of the same pivot.
    pub fn reverse_sweep(&self, k: usize, tolerance: f64) -> Result<SquareMatrix> {
        let mut out = self.clone();
        sweep_in_place(&mut out.data, out.dim, k, tolerance, Direction::Reverse)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Reverse,
}

fn sweep_in_place(m: &mut [f64], dim: usize, k: usize, tol: f64, dir: Direction) -> Result<()> {
    let d = m[k * dim + k];
    if !(d.abs() > tol) {
        return Err(Error::AliasedPivot(k));
    }
    // Reverse sweep differs only in the sign applied to row/column k.
    let edge = match dir {
        Direction::Forward => 1.0 / d,
        Direction::Reverse => -1.0 / d,
    };
    let pivot_row: Vec<f64> = m[k * dim..(k + 1) * dim].to_vec();
    for i in 0..dim {
        if i == k {
            continue;
        }
        let mik = m[i * dim + k];
        if mik == 0.0 {
            continue;
        }
        let f = mik / d;
        let row = &mut m[i * dim..(i + 1) * dim];
        for j in 0..dim {
            if j != k {
                row[j] -= f * pivot_row[j];
            }
        }
    }
    for i in 0..dim {
        if i != k {
            m[i * dim + k] *= edge;
            m[k * dim + i] *= edge;
        }
    }
    m[k * dim + k] = -1.0 / d;
    Ok(())
}

/// Outcome of bringing a column into the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddOutcome {
    Swept,
    Aliased,
}

/// Incremental least-squares state over a fixed universe of columns.
///
/// The active formula is the ordered list of columns brought in so far;
/// a column whose pivot is numerically zero given the earlier ones stays
/// in the formula but is marked aliased and left unswept.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    columns: Vec<VariableId>,
    dim: usize,
    m: Vec<f64>,
    original_diagonal: Vec<f64>,
    swept: Vec<bool>,
    aliased: Vec<bool>,
    active: Vec<usize>,
    n: usize,
    sum_y: f64,
    tss: f64,
}

impl SweepState {
    /// Nothing swept yet; every column of `cp` is available.
    pub fn new(cp: CrossProduct) -> Self {
        let tss = cp.tss();
        let (columns, n, sum_y, m) = cp.into_parts();
        let dim = columns.len() + 1;
        let original_diagonal = (0..dim).map(|i| m[i * dim + i]).collect();
        SweepState {
            swept: vec![false; dim - 1],
            aliased: vec![false; dim - 1],
            active: Vec::new(),
            columns,
            dim,
            m,
            original_diagonal,
            n,
            sum_y,
            tss,
        }
    }

    /// State with `formula` brought in, in order.
    pub fn with_formula(cp: CrossProduct, formula: &Formula) -> Result<Self> {
        let mut s = Self::new(cp);
        for v in formula.variables() {
            s.add(v)?;
        }
        Ok(s)
    }

    pub fn universe(&self) -> &[VariableId] {
        &self.columns
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tss(&self) -> f64 {
        self.tss
    }

    pub fn sum_y(&self) -> f64 {
        self.sum_y
    }

    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    pub fn is_swept(&self, c: usize) -> bool {
        self.swept[c]
    }

    pub fn is_active(&self, v: &VariableId) -> bool {
        self.index_of(v).is_some_and(|c| self.active.contains(&c))
    }

    fn index_of(&self, v: &VariableId) -> Option<usize> {
        self.columns.iter().position(|c| c == v)
    }

    /// Active columns in formula order, as universe indices.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn formula(&self) -> Result<Formula> {
        Formula::new(self.active.iter().map(|&c| self.columns[c].clone()).collect())
    }

    pub fn rss(&self) -> f64 {
        self.m[self.dim * self.dim - 1].max(0.0)
    }

    /// Coefficient of universe column `c` (zero unless swept).
    pub fn coefficient(&self, c: usize) -> f64 {
        if self.swept[c] {
            self.m[c * self.dim + self.dim - 1]
        } else {
            0.0
        }
    }

    /// `[(XᵀX)⁻¹]_cc` for a swept column.
    pub fn inverse_diagonal(&self, c: usize) -> Option<f64> {
        self.swept[c].then(|| -self.m[c * self.dim + c])
    }

    pub fn is_aliased(&self, c: usize) -> bool {
        self.aliased[c]
    }

    pub fn swept_count(&self) -> usize {
        self.swept.iter().filter(|&&s| s).count()
    }

    fn try_sweep(&mut self, c: usize) -> bool {
        let threshold = PIVOT_TOLERANCE * self.original_diagonal[c];
        let pivot = self.m[c * self.dim + c];
        if pivot <= threshold || pivot <= 0.0 {
            return false;
        }
        sweep_in_place(&mut self.m, self.dim, c, 0.0, Direction::Forward)
            .expect("pivot checked");
        self.swept[c] = true;
        true
    }

    /// Brings `v` into the formula (appended at the end).
    pub fn add(&mut self, v: &VariableId) -> Result<AddOutcome> {
        let c = self
            .index_of(v)
            .ok_or_else(|| Error::UnknownColumn(v.to_string()))?;
        if self.active.contains(&c) {
            return Err(Error::DuplicateVariable(v.to_string()));
        }
        self.active.push(c);
        if self.try_sweep(c) {
            self.aliased[c] = false;
            Ok(AddOutcome::Swept)
        } else {
            self.aliased[c] = true;
            Ok(AddOutcome::Aliased)
        }
    }

    /// Takes `v` out of the formula. Columns that were aliased are retried
    /// afterwards, in formula order, since the span they depended on shrank.
    pub fn remove(&mut self, v: &VariableId) -> Result<()> {
        if v.is_intercept() {
            return Err(Error::RemoveIntercept);
        }
        let c = self
            .index_of(v)
            .ok_or_else(|| Error::UnknownColumn(v.to_string()))?;
        let pos = self
            .active
            .iter()
            .position(|&a| a == c)
            .ok_or_else(|| Error::UnknownColumn(v.to_string()))?;
        if self.swept[c] {
            sweep_in_place(&mut self.m, self.dim, c, 0.0, Direction::Reverse)?;
            self.swept[c] = false;
        }
        self.aliased[c] = false;
        self.active.remove(pos);
        let retry: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&a| self.aliased[a])
            .collect();
        for a in retry {
            if self.try_sweep(a) {
                self.aliased[a] = false;
            }
        }
        Ok(())
    }

    /// Toggles pivot `c` directly, without formula bookkeeping: forward
    /// sweep if unswept, reverse sweep if swept. Sweeping the same pivot
    /// twice returns the matrix to its previous value.
    pub fn toggle_pivot(&mut self, c: usize) -> Result<()> {
        let dir = if self.swept[c] {
            Direction::Reverse
        } else {
            Direction::Forward
        };
        let threshold = PIVOT_TOLERANCE * self.original_diagonal[c].abs();
        sweep_in_place(&mut self.m, self.dim, c, threshold, dir)?;
        self.swept[c] = !self.swept[c];
        Ok(())
    }
}
