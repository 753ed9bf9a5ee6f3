use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StructureReport;

/// Pearson correlation coefficient of two equally long vectors.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "pearson: vectors differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ConstantVector("xs"));
    }
    if syy == 0.0 {
        return Err(Error::ConstantVector("ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n_used: usize,
    pub n_dropped: usize,
}

/// Pearson r over the pairs where both values are present.
pub fn pearson_paired(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "pearson: vectors differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    let r = pearson(&a, &b)?;
    Ok(Correlation {
        r,
        n_used: a.len(),
        n_dropped: xs.len() - a.len(),
    })
}

/// Correlation of each structure-wise uncertainty with segmentation accuracy,
/// pooled over every (scan, structure) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCorrelation {
    /// r(mean voxel uncertainty, Dice)
    pub r_mean_unc: f64,
    /// r(CV, Dice)
    pub r_cv: f64,
    /// r(MC Dice agreement, Dice)
    pub r_mc_dice: f64,
    pub n_pairs: usize,
    /// Pairs with at least one absent metric or no reference Dice.
    pub n_dropped: usize,
    pub mean_gt_dice: f64,
    pub mean_cv: f64,
}

/// Pools the (scan, structure) pairs of all reports that have every metric
/// and a reference Dice, then correlates each uncertainty type with Dice.
pub fn correlate_uncertainty_accuracy(reports: &[StructureReport]) -> Result<UncertaintyCorrelation> {
    let mut unc = Vec::new();
    let mut cv = Vec::new();
    let mut agreement = Vec::new();
    let mut dice = Vec::new();
    let mut total = 0usize;
    for rec in reports.iter().flat_map(|r| &r.structures) {
        total += 1;
        if let (Some(u), Some(c), Some(d), Some(g)) = (rec.mean_unc, rec.cv, rec.mc_dice, rec.gt_dice) {
            unc.push(u);
            cv.push(c);
            agreement.push(d);
            dice.push(g);
        }
    }
    let n = dice.len();
    let r_mean_unc = pearson(&unc, &dice)?;
    let r_cv = pearson(&cv, &dice)?;
    let r_mc_dice = pearson(&agreement, &dice)?;
    Ok(UncertaintyCorrelation {
        r_mean_unc,
        r_cv,
        r_mc_dice,
        n_pairs: n,
        n_dropped: total - n,
        mean_gt_dice: dice.iter().sum::<f64>() / n as f64,
        mean_cv: cv.iter().sum::<f64>() / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_relations() {
        let xs = [0.3, 1.7, 2.2, 5.0, -1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_example() {
        // means 2.5; Σdxdy = 4, Σdx² = Σdy² = 5
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantVector("xs"))));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), Err(Error::ConstantVector("ys"))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::InsufficientData { .. })));
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn paired_drops_absent_values() {
        let xs = [Some(1.0), None, Some(2.0), Some(3.0), Some(4.0)];
        let ys = [Some(1.0), Some(9.0), Some(3.0), None, Some(4.0)];
        let c = pearson_paired(&xs, &ys).unwrap();
        assert_eq!((c.n_used, c.n_dropped), (3, 2));
        assert!((c.r - pearson(&[1.0, 2.0, 4.0], &[1.0, 3.0, 4.0]).unwrap()).abs() < 1e-15);
    }
}
