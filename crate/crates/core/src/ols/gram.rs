use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, VariableId};
use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Exact integer co-occurrence counts plus compensated outcome sums for one
/// row partition. Partitions merge by elementwise addition.
#[derive(Debug, Clone, PartialEq)]
pub struct GramAccumulator {
    p: usize,
    n: usize,
    counts: Vec<u64>,
    xty: Vec<CompensatedSum>,
    yty: CompensatedSum,
    sum_y: CompensatedSum,
}

impl GramAccumulator {
    pub fn empty(p: usize) -> Self {
        GramAccumulator {
            p,
            n: 0,
            counts: vec![0; p * p],
            xty: vec![CompensatedSum::default(); p],
            yty: CompensatedSum::default(),
            sum_y: CompensatedSum::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Adds `other` into `self`. Merge order is the caller's responsibility
    /// when bitwise reproducibility matters.
    pub fn merge(&mut self, other: &GramAccumulator) {
        assert_eq!(self.p, other.p, "merging accumulators of different width");
        self.n += other.n;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            a.merge(b);
        }
        self.yty.merge(&other.yty);
        self.sum_y.merge(&other.sum_y);
    }

    pub fn finish(&self, columns: Vec<VariableId>) -> CrossProduct {
        let p = self.p;
        let dim = p + 1;
        let mut m = vec![0.0; dim * dim];
        for a in 0..p {
            for b in a..p {
                let c = self.counts[a * p + b] as f64;
                m[a * dim + b] = c;
                m[b * dim + a] = c;
            }
            let s = self.xty[a].value();
            m[a * dim + p] = s;
            m[p * dim + a] = s;
        }
        m[p * dim + p] = self.yty.value();
        CrossProduct {
            columns,
            n: self.n,
            sum_y: self.sum_y.value(),
            m,
        }
    }
}

/// Gram accumulators for each row partition. `labels[i]` names the
/// partition of row `i` (values in `0..parts`). Summation runs in row-index
/// order inside every partition.
pub fn partial_grams(
    x: &DesignMatrix,
    y: &[f64],
    labels: &[usize],
    parts: usize,
) -> Result<Vec<GramAccumulator>> {
    if y.len() != x.n() {
        return Err(Error::LengthMismatch {
            what: "outcome",
            got: y.len(),
            expected: x.n(),
        });
    }
    if labels.len() != x.n() {
        return Err(Error::LengthMismatch {
            what: "partition labels",
            got: labels.len(),
            expected: x.n(),
        });
    }
    let p = x.p();
    let mut acc = vec![GramAccumulator::empty(p); parts];
    for (i, (&yi, &part)) in y.iter().zip(labels).enumerate() {
        if part >= parts {
            return Err(Error::InvalidFolds(format!(
                "row {i} labelled {part}, only {parts} partitions"
            )));
        }
        let a = &mut acc[part];
        a.n += 1;
        a.yty.add(yi * yi);
        a.sum_y.add(yi);
    }
    for c in 0..p {
        match x.column_rows(c) {
            None => {
                for (&yi, &part) in y.iter().zip(labels) {
                    acc[part].xty[c].add(yi);
                }
            }
            Some(rows) => {
                for &r in rows {
                    let r = r as usize;
                    acc[labels[r]].xty[c].add(y[r]);
                }
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            match (x.column_rows(a), x.column_rows(b)) {
                (None, None) => {
                    for &part in labels {
                        acc[part].counts[a * p + b] += 1;
                    }
                }
                (Some(rows), None) | (None, Some(rows)) => {
                    for &r in rows {
                        acc[labels[r as usize]].counts[a * p + b] += 1;
                    }
                }
                (Some(ra), Some(rb)) => {
                    let (mut i, mut j) = (0, 0);
                    while i < ra.len() && j < rb.len() {
                        match ra[i].cmp(&rb[j]) {
                            std::cmp::Ordering::Less => i += 1,
                            std::cmp::Ordering::Greater => j += 1,
                            std::cmp::Ordering::Equal => {
                                acc[labels[ra[i] as usize]].counts[a * p + b] += 1;
                                i += 1;
                                j += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Augmented cross-product matrix `[X|y]ᵀ[X|y]`, outcome slot last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossProduct {
    columns: Vec<VariableId>,
    n: usize,
    sum_y: f64,
    m: Vec<f64>,
}

impl CrossProduct {
    pub fn columns(&self) -> &[VariableId] {
        &self.columns
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Side length, predictors plus the outcome slot.
    pub fn dim(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim() + j]
    }

    pub fn sum_y(&self) -> f64 {
        self.sum_y
    }

    pub fn yty(&self) -> f64 {
        let d = self.dim();
        self.m[d * d - 1]
    }

    /// Total sum of squares about the mean.
    pub fn tss(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.yty() - self.sum_y * self.sum_y / self.n as f64).max(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub(crate) fn into_parts(self) -> (Vec<VariableId>, usize, f64, Vec<f64>) {
        (self.columns, self.n, self.sum_y, self.m)
    }
}

/// Exact augmented Gram matrix of `x` and `y`.
pub fn cross_product(x: &DesignMatrix, y: &[f64]) -> Result<CrossProduct> {
    let labels = vec![0; x.n()];
    let acc = partial_grams(x, y, &labels, 1)?;
    Ok(acc[0].finish(x.columns().to_vec()))
}
