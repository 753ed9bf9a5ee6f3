use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: covariates, the structure volume and its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub subject_id: String,
    /// Years.
    pub age: f64,
    /// 0/1 code.
    pub sex: u8,
    /// 0/1 diagnosis code.
    pub dx: u8,
    pub site: Option<String>,
    pub volume: f64,
    /// Structure CV of this subject's segmentation, `None` when absent-flagged.
    pub cv: Option<f64>,
    /// Structure MC Dice of this subject's segmentation, `None` when absent-flagged.
    pub mc_dice: Option<f64>,
}

/// Per-subject table for one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    rows: Vec<CohortRow>,
    has_cv: bool,
    has_mc_dice: bool,
}

impl CohortTable {
    /// `has_cv` / `has_mc_dice` record whether the columns exist at all;
    /// individual rows may still carry `None` in an existing column.
    pub fn new(rows: Vec<CohortRow>, has_cv: bool, has_mc_dice: bool) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let bad = |what: &str| {
                Err(Error::InvalidInput(format!(
                    "cohort row {i} ({}): {what}",
                    r.subject_id
                )))
            };
            if !r.age.is_finite() {
                return bad("age must be finite");
            }
            if r.sex > 1 || r.dx > 1 {
                return bad("sex and dx must be coded 0 or 1");
            }
            if !r.volume.is_finite() {
                return bad("volume must be finite");
            }
            for w in [r.cv, r.mc_dice].into_iter().flatten() {
                if !(w.is_finite() && w >= 0.0) {
                    return bad("cv and mc_dice must be finite and ≥ 0");
                }
            }
            if (r.cv.is_some() && !has_cv) || (r.mc_dice.is_some() && !has_mc_dice) {
                return bad("weight value present without its column");
            }
        }
        let with_site = rows.iter().filter(|r| r.site.is_some()).count();
        if with_site != 0 && with_site != rows.len() {
            return Err(Error::InvalidInput(format!(
                "site given for {with_site} of {} rows; it must be given for all or none",
                rows.len()
            )));
        }
        Ok(Self {
            rows,
            has_cv,
            has_mc_dice,
        })
    }

    pub fn rows(&self) -> &[CohortRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_cv(&self) -> bool {
        self.has_cv
    }

    pub fn has_mc_dice(&self) -> bool {
        self.has_mc_dice
    }

    pub fn has_site(&self) -> bool {
        self.rows.first().is_some_and(|r| r.site.is_some())
    }

    /// Sorted distinct site codes.
    pub fn sites(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.site.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Copy with volume and age z-scored (sample standard deviation);
    /// binary and categorical columns untouched.
    pub fn standardized(&self) -> CohortTable {
        let (vm, vs) = mean_std(self.rows.iter().map(|r| r.volume));
        let (am, as_) = mean_std(self.rows.iter().map(|r| r.age));
        let z = |x: f64, m: f64, s: f64| if s > 0.0 { (x - m) / s } else { 0.0 };
        let rows = self
            .rows
            .iter()
            .map(|r| CohortRow {
                volume: z(r.volume, vm, vs),
                age: z(r.age, am, as_),
                ..r.clone()
            })
            .collect();
        CohortTable { rows, ..*self }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DesignOptions {
    /// Reference site level; defaults to the lexicographically first site.
    pub site_reference: Option<String>,
}

/// Regression design `[1, age, sex, dx, site dummies…]` with its response.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<String>,
}

pub const DX_COLUMN: &str = "dx";

impl Design {
    /// Builds the design over the given rows of `table`.
    pub fn build(table: &CohortTable, rows: &[usize], opts: &DesignOptions) -> Result<Self> {
        let mut columns: Vec<String> = ["intercept", "age", "sex", DX_COLUMN].map(String::from).to_vec();
        let mut dummies = Vec::new();
        if table.has_site() {
            let sites = table.sites();
            let reference = match &opts.site_reference {
                Some(s) if sites.contains(s) => s.clone(),
                Some(s) => return Err(Error::InvalidInput(format!("reference site {s:?} not in cohort"))),
                None => sites[0].clone(),
            };
            for s in sites.into_iter().filter(|s| *s != reference) {
                columns.push(format!("site[{s}]"));
                dummies.push(s);
            }
        }
        let p = columns.len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| {
            let r = &table.rows[rows[i]];
            match j {
                0 => 1.0,
                1 => r.age,
                2 => r.sex as f64,
                3 => r.dx as f64,
                _ => (r.site.as_deref() == Some(dummies[j - 4].as_str())) as u8 as f64,
            }
        });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| table.rows[i].volume));
        Ok(Self { x, y, columns })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}
