use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cohort::{CohortTable, DesignOptions, DX_COLUMN};
use super::regression::{huber_fit_with, wls_fit_with, HuberOptions, RegressionResult, WeightMode};
use crate::error::{Error, Result};

/// A way of fitting the group model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    /// Ordinary least squares.
    None,
    InvCv,
    InvOneMinusDice,
    Huber,
}

impl AnalysisMode {
    pub const ALL: [AnalysisMode; 4] = [
        AnalysisMode::None,
        AnalysisMode::InvCv,
        AnalysisMode::InvOneMinusDice,
        AnalysisMode::Huber,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisMode::None => "none",
            AnalysisMode::InvCv => "inv_cv",
            AnalysisMode::InvOneMinusDice => "inv_one_minus_dice",
            AnalysisMode::Huber => "huber",
        }
    }
}

impl fmt::Display for AnalysisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for AnalysisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnalysisMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown mode {s:?}; expected one of none, inv_cv, inv_one_minus_dice, huber"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOptions {
    /// z-score volume and age before fitting.
    pub standardize: bool,
    pub design: DesignOptions,
    pub huber: HuberOptions,
}

impl Default for GroupOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            design: DesignOptions::default(),
            huber: HuberOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub mode: AnalysisMode,
    pub beta_d: f64,
    pub se_d: f64,
    pub t_d: f64,
    pub p_d: f64,
    pub df: usize,
    pub n_used: usize,
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAnalysis {
    pub structure: String,
    pub standardized: bool,
    pub rows: Vec<GroupRow>,
    pub fits: Vec<RegressionResult>,
}

/// Diagnosis effect `(β_D, p_D)` on one structure's volume under each mode.
pub fn group_analysis(
    table: &CohortTable,
    structure: &str,
    modes: &[AnalysisMode],
    opts: &GroupOptions,
) -> Result<GroupAnalysis> {
    let prepared;
    let table = if opts.standardize {
        prepared = table.standardized();
        &prepared
    } else {
        table
    };
    let mut rows = Vec::with_capacity(modes.len());
    let mut fits = Vec::with_capacity(modes.len());
    for &mode in modes {
        let fit = match mode {
            AnalysisMode::None => wls_fit_with(table, &WeightMode::None, &opts.design)?,
            AnalysisMode::InvCv => wls_fit_with(table, &WeightMode::InvCv, &opts.design)?,
            AnalysisMode::InvOneMinusDice => wls_fit_with(table, &WeightMode::InvOneMinusDice, &opts.design)?,
            AnalysisMode::Huber => huber_fit_with(table, &opts.design, opts.huber)?,
        };
        let dx = fit.coefficient(DX_COLUMN).expect("design always has a dx column");
        rows.push(GroupRow {
            mode,
            beta_d: dx.beta,
            se_d: dx.se,
            t_d: dx.t,
            p_d: dx.p,
            df: fit.df,
            n_used: fit.n_used,
            n_dropped: fit.n_dropped,
        });
        fits.push(fit);
    }
    Ok(GroupAnalysis {
        structure: structure.to_string(),
        standardized: opts.standardize,
        rows,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::cohort::CohortRow;

    fn table(dx: impl Fn(usize) -> u8) -> CohortTable {
        let rows = (0..20)
            .map(|i| CohortRow {
                subject_id: format!("s{i}"),
                age: 30.0 + i as f64,
                sex: (i % 2) as u8,
                dx: dx(i),
                site: None,
                volume: 4.0 + 0.01 * i as f64 + dx(i) as f64 + 0.05 * ((i * 7) % 5) as f64,
                cv: Some(0.02 + 0.01 * (i % 4) as f64),
                mc_dice: None,
            })
            .collect();
        CohortTable::new(rows, true, false).unwrap()
    }

    #[test]
    fn constant_dx_is_collinear_with_intercept() {
        let err = group_analysis(&table(|_| 1), "hippocampus", &[AnalysisMode::None], &GroupOptions::default())
            .unwrap_err();
        match err {
            Error::Singular { columns, .. } => {
                assert!(columns.contains(&"dx".to_string()) && columns.contains(&"intercept".to_string()))
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn one_row_per_mode() {
        let g = group_analysis(
            &table(|i| (i % 3 == 0) as u8),
            "hippocampus",
            &[AnalysisMode::None, AnalysisMode::InvCv, AnalysisMode::Huber],
            &GroupOptions::default(),
        )
        .unwrap();
        assert_eq!(g.rows.len(), 3);
        assert!(g.rows.iter().all(|r| r.beta_d > 0.0 && (0.0..=1.0).contains(&r.p_d)));
        assert!(group_analysis(
            &table(|i| (i % 3 == 0) as u8),
            "h",
            &[AnalysisMode::InvOneMinusDice],
            &GroupOptions::default()
        )
        .is_err());
    }

    #[test]
    fn parse_modes() {
        assert_eq!("inv_cv".parse::<AnalysisMode>().unwrap(), AnalysisMode::InvCv);
        assert!("weighted".parse::<AnalysisMode>().is_err());
    }
}
