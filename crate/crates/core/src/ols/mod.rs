//! Least squares on indicator designs, with sweep-based incremental refits.

mod gram;
mod sweep;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, Formula, VariableId};
use crate::error::{Error, Result};

pub use gram::{cross_product, partial_grams, CompensatedSum, CrossProduct, GramAccumulator};
pub use sweep::{AddOutcome, SquareMatrix, SweepState, PIVOT_TOLERANCE};

/// Estimate and naive inference for one formula term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub variable: VariableId,
    pub coefficient: f64,
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub aliased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub formula: Formula,
    /// One entry per formula variable, in formula order. Inference fields
    /// are absent for the intercept and for aliased columns.
    pub terms: Vec<Term>,
    pub n: usize,
    pub rss: f64,
    pub tss: f64,
    pub df_resid: usize,
    pub sigma2: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub aliased: Vec<VariableId>,
}

impl FitResult {
    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    pub fn term(&self, v: &VariableId) -> Option<&Term> {
        self.terms.iter().find(|t| &t.variable == v)
    }

    /// Non-aliased, non-intercept columns.
    pub fn p_effective(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| !t.aliased && !t.variable.is_intercept())
            .count()
    }

    /// Non-intercept terms whose naive p-value is below `alpha`.
    pub fn significant(&self, alpha: f64) -> Vec<&VariableId> {
        self.terms
            .iter()
            .filter(|t| t.p_value.is_some_and(|p| p < alpha))
            .map(|t| &t.variable)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, df_resid = {}", self.n, self.df_resid)?;
        writeln!(f, "rss = {:e}", self.rss)?;
        writeln!(f, "tss = {:e}", self.tss)?;
        writeln!(f, "r2 = {:e}", self.r2)?;
        writeln!(f, "adj_r2 = {:e}", self.adj_r2)?;
        writeln!(
            f,
            "{:<24} {:>24} {:>24} {:>24} {:>24}",
            "variable", "coefficient", "std_error", "t_stat", "p_value (naive)"
        )?;
        let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:e}"));
        for t in &self.terms {
            writeln!(
                f,
                "{:<24} {:>24} {:>24} {:>24} {:>24}",
                t.variable.to_string(),
                format!("{:e}", t.coefficient),
                opt(t.std_error),
                opt(t.t_stat),
                opt(t.p_value)
            )?;
        }
        if !self.aliased.is_empty() {
            let names: Vec<String> = self.aliased.iter().map(|v| v.to_string()).collect();
            writeln!(f, "aliased: {}", names.join(", "))?;
        }
        Ok(())
    }
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom.
pub fn t_p_value(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

impl SweepState {
    /// Statistics for the current formula.
    pub fn fit_result(&self) -> Result<FitResult> {
        let formula = self.formula()?;
        let n = self.n();
        let tss = self.tss();
        let yty = {
            let m = self.matrix();
            m[m.len() - 1]
        };
        if !(tss > 1e-12 * yty) {
            return Err(Error::DegenerateOutcome);
        }
        let swept = self.swept_count();
        if n <= swept {
            return Err(Error::Underdetermined { n, p: swept });
        }
        let df_resid = n - swept;
        let rss = self.rss();
        let sigma2 = rss / df_resid as f64;
        let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
        let mut terms = Vec::with_capacity(formula.len());
        let mut aliased = Vec::new();
        for &c in self.active() {
            let variable = self.universe()[c].clone();
            let is_aliased = self.is_aliased(c);
            if is_aliased {
                aliased.push(variable.clone());
            }
            let coefficient = self.coefficient(c);
            let (std_error, t_stat, p_value) = match self.inverse_diagonal(c) {
                Some(inv) if !variable.is_intercept() => {
                    let se = (sigma2 * inv.max(0.0)).sqrt();
                    if se > 0.0 {
                        let t = coefficient / se;
                        (Some(se), Some(t), Some(t_p_value(t, df_resid as f64)))
                    } else {
                        (Some(se), None, None)
                    }
                }
                _ => (None, None, None),
            };
            terms.push(Term {
                variable,
                coefficient,
                std_error,
                t_stat,
                p_value,
                aliased: is_aliased,
            });
        }
        let p_eff = terms
            .iter()
            .filter(|t| !t.aliased && !t.variable.is_intercept())
            .count();
        let adj_den = n as f64 - p_eff as f64 - 1.0;
        let adj_r2 = if adj_den > 0.0 {
            1.0 - (1.0 - r2) * (n as f64 - 1.0) / adj_den
        } else {
            f64::NAN
        };
        Ok(FitResult {
            formula,
            terms,
            n,
            rss,
            tss,
            df_resid,
            sigma2,
            r2,
            adj_r2,
            aliased,
        })
    }

    /// Fit after appending `vars`, leaving `self` untouched.
    pub fn refit_add(&self, vars: &[VariableId]) -> Result<(FitResult, Vec<AddOutcome>)> {
        let mut s = self.clone();
        let outcomes = vars.iter().map(|v| s.add(v)).collect::<Result<Vec<_>>>()?;
        Ok((s.fit_result()?, outcomes))
    }

    /// Fit after removing `vars`, leaving `self` untouched.
    pub fn refit_remove(&self, vars: &[VariableId]) -> Result<FitResult> {
        let mut s = self.clone();
        for v in vars {
            s.remove(v)?;
        }
        s.fit_result()
    }
}

/// Fits `y` on every column of `x`, in column order.
pub fn fit(x: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    let formula = Formula::new(x.columns().to_vec())?;
    let state = SweepState::with_formula(cross_product(x, y)?, &formula)?;
    state.fit_result()
}

/// `ŷ = X·b`, matching columns of `x` to the fit's variables by id.
pub fn predict(fit: &FitResult, x: &DesignMatrix) -> Result<Vec<f64>> {
    let mut yhat = vec![0.0; x.n()];
    for t in &fit.terms {
        let c = x
            .column_index(&t.variable)
            .ok_or_else(|| Error::UnknownColumn(t.variable.to_string()))?;
        if t.coefficient == 0.0 {
            continue;
        }
        match x.column_rows(c) {
            None => yhat.iter_mut().for_each(|v| *v += t.coefficient),
            Some(rows) => rows.iter().for_each(|&r| yhat[r as usize] += t.coefficient),
        }
    }
    Ok(yhat)
}
