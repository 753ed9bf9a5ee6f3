//! Weighted least squares and Huber IRLS with t-based coefficient inference.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use super::cohort::{CohortTable, Design, DesignOptions};
use super::special::student_t_two_sided_p;
use crate::error::{Error, Result};

/// Floor applied to CV and `1 − d^MC` before inverting them into weights.
pub const WEIGHT_FLOOR: f64 = 1e-4;

/// Condition estimate above which the weighted design counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Wls,
    Huber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub method: Method,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    /// Residual degrees of freedom `n − p`.
    pub df: usize,
    /// `Σ ω_i r_i²`.
    pub weighted_rss: f64,
    pub n_used: usize,
    /// Cohort rows dropped because their weight was absent-flagged.
    pub n_dropped: usize,
    /// IRLS iterations (1 for direct solves).
    pub iterations: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<Coefficient> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(Coefficient {
            beta: self.beta[i],
            se: self.se[i],
            t: self.t[i],
            p: self.p[i],
        })
    }
}

/// Weighted least squares `argmin Σ ω_i (y_i − x_i β)²` with inference
/// `σ̂² = Σ ω_i r_i² / (n − p)`, `Var(β̂) = σ̂² (XᵀWX)⁻¹`.
///
/// Solved through an SVD of the column-equilibrated `√W·X`; the design is
/// rejected as singular when its condition estimate exceeds [`MAX_CONDITION`].
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    columns: &[String],
) -> Result<RegressionResult> {
    let (n, p) = x.shape();
    if y.len() != n || weights.len() != n || columns.len() != p {
        return Err(Error::InvalidInput(format!(
            "regression shapes disagree: X {n}×{p}, y {}, weights {}, {} column names",
            y.len(),
            weights.len(),
            columns.len()
        )));
    }
    if n < p + 1 {
        return Err(Error::InsufficientData { needed: p + 1, got: n });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidInput(format!("weight {w} is not finite and ≥ 0")));
    }
    if let Some(v) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value {v} in regression data")));
    }

    let sqrt_w = weights.map(f64::sqrt);
    let mut a = x.clone();
    for (mut row, &sw) in a.row_iter_mut().zip(sqrt_w.iter()) {
        row *= sw;
    }
    let b = y.component_mul(&sqrt_w);

    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&d| d == 0.0) {
        return Err(Error::Singular {
            columns: vec![columns[j].clone()],
            condition: f64::INFINITY,
        });
    }
    for (mut col, &d) in a.column_iter_mut().zip(&norms) {
        col /= d;
    }

    let svd = SVD::new(a, true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let sv = &svd.singular_values;
    let (mut i_min, mut s_max) = (0usize, 0.0f64);
    for (i, &s) in sv.iter().enumerate() {
        if s < sv[i_min] {
            i_min = i;
        }
        s_max = s_max.max(s);
    }
    let condition = s_max / sv[i_min];
    if !(condition <= MAX_CONDITION) {
        let v = v_t.row(i_min);
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let involved = v
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() >= 0.1 * peak)
            .map(|(j, _)| columns[j].clone())
            .collect();
        return Err(Error::Singular {
            columns: involved,
            condition,
        });
    }

    // β_z = V Σ⁻¹ Uᵀ b, then undo the column scaling.
    let utb = u.transpose() * &b;
    let scaled = DVector::from_iterator(p, utb.iter().zip(sv.iter()).map(|(c, s)| c / s));
    let beta_z = v_t.transpose() * scaled;
    let beta: Vec<f64> = beta_z.iter().zip(&norms).map(|(bz, d)| bz / d).collect();

    let fitted = x * DVector::from_column_slice(&beta);
    let weighted_rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .zip(weights.iter())
        .map(|((yi, fi), wi)| wi * (yi - fi) * (yi - fi))
        .sum();
    let df = n - p;
    let sigma2 = weighted_rss / df as f64;

    // (ZᵀZ)⁻¹ = V Σ⁻² Vᵀ; (XᵀWX)⁻¹ = D⁻¹ (ZᵀZ)⁻¹ D⁻¹
    let mut se = Vec::with_capacity(p);
    for j in 0..p {
        let var_z: f64 = (0..p).map(|k| (v_t[(k, j)] / sv[k]).powi(2)).sum();
        se.push((sigma2 * var_z).sqrt() / norms[j]);
    }
    let t: Vec<f64> = beta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| match (b == 0.0, s == 0.0) {
            (true, true) => 0.0,
            (false, true) => b.signum() * f64::INFINITY,
            _ => b / s,
        })
        .collect();
    let p_values = t.iter().map(|&ti| student_t_two_sided_p(ti, df as f64)).collect();

    Ok(RegressionResult {
        method: Method::Wls,
        columns: columns.to_vec(),
        beta,
        se,
        t,
        p: p_values,
        df,
        weighted_rss,
        n_used: n,
        n_dropped: 0,
        iterations: 1,
        notes: Vec::new(),
    })
}

/// Observation weights for [`wls_fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    /// Unit weights (ordinary least squares).
    None,
    /// `1 / max(CV, ε_w)`
    InvCv,
    /// `1 / max(1 − d^MC, ε_w)`
    InvOneMinusDice,
    /// One weight per cohort row.
    Explicit(Vec<f64>),
}

/// Rows used for `mode` with their weights, and the number dropped.
fn weights_for(table: &CohortTable, mode: &WeightMode) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    let pick = |get: fn(&super::cohort::CohortRow) -> Option<f64>, f: fn(f64) -> f64| {
        let mut rows = Vec::new();
        let mut w = Vec::new();
        for (i, r) in table.rows().iter().enumerate() {
            if let Some(v) = get(r) {
                rows.push(i);
                w.push(f(v));
            }
        }
        let dropped = table.len() - rows.len();
        (rows, w, dropped)
    };
    Ok(match mode {
        WeightMode::None => ((0..table.len()).collect(), vec![1.0; table.len()], 0),
        WeightMode::InvCv => {
            if !table.has_cv() {
                return Err(Error::InvalidInput("inv_cv weighting needs a cv column".into()));
            }
            pick(|r| r.cv, |cv| 1.0 / cv.max(WEIGHT_FLOOR))
        }
        WeightMode::InvOneMinusDice => {
            if !table.has_mc_dice() {
                return Err(Error::InvalidInput(
                    "inv_one_minus_dice weighting needs an mc_dice column".into(),
                ));
            }
            pick(|r| r.mc_dice, |d| 1.0 / (1.0 - d).max(WEIGHT_FLOOR))
        }
        WeightMode::Explicit(w) => {
            if w.len() != table.len() {
                return Err(Error::InvalidInput(format!(
                    "{} explicit weights for {} cohort rows",
                    w.len(),
                    table.len()
                )));
            }
            ((0..table.len()).collect(), w.clone(), 0)
        }
    })
}

/// Weighted regression of volume on `[1, age, sex, dx, site dummies]`.
pub fn wls_fit(table: &CohortTable, mode: &WeightMode) -> Result<RegressionResult> {
    wls_fit_with(table, mode, &DesignOptions::default())
}

pub fn wls_fit_with(table: &CohortTable, mode: &WeightMode, opts: &DesignOptions) -> Result<RegressionResult> {
    let (rows, w, dropped) = weights_for(table, mode)?;
    let design = Design::build(table, &rows, opts)?;
    let mut res = weighted_least_squares(&design.x, &design.y, &DVector::from_vec(w), &design.columns)?;
    res.method = if *mode == WeightMode::None { Method::Ols } else { Method::Wls };
    res.n_dropped = dropped;
    if dropped > 0 {
        res.notes.push(format!("{dropped} row(s) dropped: absent-flagged weight"));
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberOptions {
    /// `k = tuning × scale`.
    pub tuning: f64,
    pub max_iter: usize,
    /// Convergence threshold on `max |Δβ|`.
    pub tol: f64,
}

impl Default for HuberOptions {
    fn default() -> Self {
        Self {
            tuning: 1.345,
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normalized median absolute deviation `median(|r − median(r)|) / 0.6745`.
pub fn mad_scale(residuals: &[f64]) -> f64 {
    let mut r = residuals.to_vec();
    let m = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev) / 0.6745
}

fn residuals(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64]) -> Vec<f64> {
    (y - x * DVector::from_column_slice(beta)).iter().copied().collect()
}

/// Huber M-estimation by iteratively reweighted least squares, starting from OLS.
///
/// Each iteration sets `k = tuning × MAD(r)/0.6745` and weights
/// `ω_i = min(1, k/|r_i|)`. Inference comes from the final weighted fit.
pub fn huber_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    columns: &[String],
    opts: HuberOptions,
) -> Result<RegressionResult> {
    let n = x.nrows();
    if n < x.ncols() + 2 {
        return Err(Error::InsufficientData {
            needed: x.ncols() + 2,
            got: n,
        });
    }
    let ols = weighted_least_squares(x, y, &DVector::from_element(n, 1.0), columns)?;
    let r = residuals(x, y, &ols.beta);
    let y_scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if r.iter().all(|ri| ri.abs() <= 1e-12 * y_scale) {
        return Ok(RegressionResult {
            method: Method::Huber,
            notes: vec!["all residuals zero: exact fit, OLS result returned".into()],
            ..ols
        });
    }

    let mut beta = ols.beta.clone();
    let mut notes = Vec::new();
    let mut fit = ols;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let r = residuals(x, y, &beta);
        let mut scale = mad_scale(&r);
        if scale == 0.0 {
            let m = r.iter().sum::<f64>() / n as f64;
            scale = (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            if notes.is_empty() {
                notes.push("zero MAD: residual standard deviation used as scale".to_string());
            }
        }
        let k = opts.tuning * scale;
        let w = DVector::from_iterator(
            n,
            r.iter().map(|ri| if ri.abs() <= k { 1.0 } else { k / ri.abs() }),
        );
        fit = weighted_least_squares(x, y, &w, columns)?;
        let delta = fit
            .beta
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta.clone_from(&fit.beta);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        notes.push(format!("IRLS stopped after {iterations} iterations without converging"));
    }
    Ok(RegressionResult {
        method: Method::Huber,
        iterations,
        notes,
        ..fit
    })
}

/// Huber regression of volume on the cohort design.
pub fn huber_fit(table: &CohortTable) -> Result<RegressionResult> {
    huber_fit_with(table, &DesignOptions::default(), HuberOptions::default())
}

pub fn huber_fit_with(table: &CohortTable, design: &DesignOptions, opts: HuberOptions) -> Result<RegressionResult> {
    let rows: Vec<usize> = (0..table.len()).collect();
    let d = Design::build(table, &rows, design)?;
    huber_regression(&d.x, &d.y, &d.columns, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn recovers_exact_linear_model() {
        let beta = [1.0, 0.5, -2.0, 3.0];
        let x = DMatrix::from_fn(12, 4, |i, j| match j {
            0 => 1.0,
            1 => 20.0 + 5.0 * i as f64,
            2 => (i % 2) as f64,
            _ => ((i / 2) % 2) as f64,
        });
        let y = &x * DVector::from_column_slice(&beta);
        let res = weighted_least_squares(&x, &y, &DVector::from_element(12, 1.0), &names(4)).unwrap();
        for (b, t) in res.beta.iter().zip(beta) {
            assert!((b - t).abs() < 1e-10);
        }
        assert_eq!(res.df, 8);
    }

    #[test]
    fn singular_designs_name_columns() {
        let x = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 1.0,
        });
        let y = DVector::from_fn(10, |i, _| i as f64);
        match weighted_least_squares(&x, &y, &DVector::from_element(10, 1.0), &names(3)) {
            Err(Error::Singular { columns, .. }) => assert_eq!(columns, ["c0", "c2"]),
            other => panic!("expected singular, got {other:?}"),
        }
        let zero = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { 0.0 * i as f64 });
        assert!(matches!(
            weighted_least_squares(&zero, &y, &DVector::from_element(10, 1.0), &names(2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_element(3, 3, 1.0);
        let y = DVector::from_element(3, 1.0);
        assert!(matches!(
            weighted_least_squares(&x, &y, &DVector::from_element(3, 1.0), &names(3)),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn mad_of_known_values() {
        // median 3, deviations {2,1,0,1,6} → median 1
        assert!((mad_scale(&[1.0, 2.0, 3.0, 4.0, 9.0]) - 1.0 / 0.6745).abs() < 1e-15);
    }

    #[test]
    fn huber_exact_fit_returns_ols() {
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(8, |i, _| 2.0 + 0.5 * i as f64);
        let res = huber_regression(&x, &y, &names(2), HuberOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.method, Method::Huber);
        assert!(!res.notes.is_empty());
        assert!((res.beta[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn huber_fixed_point_when_no_residual_exceeds_k() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(20, |i, _| 1.0 + 0.3 * i as f64 + if i % 3 == 0 { 0.2 } else { -0.1 });
        let ols = weighted_least_squares(&x, &y, &DVector::from_element(20, 1.0), &names(2)).unwrap();
        let opts = HuberOptions {
            tuning: 1e6,
            ..Default::default()
        };
        let hub = huber_regression(&x, &y, &names(2), opts).unwrap();
        assert_eq!(hub.beta, ols.beta);
        assert_eq!(hub.iterations, 1);
    }
}
