//! Huber IRLS against ordinary least squares on a line with one gross outlier.

use nalgebra::{DMatrix, DVector};
use segqc::stats::{huber_regression, weighted_least_squares, HuberOptions};

fn main() -> segqc::Result<()> {
    let n = 21;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let y = DVector::from_fn(n, |i, _| {
        if i == n - 1 {
            200.0
        } else {
            2.0 + 3.0 * i as f64 + 0.1 * ((i * 7 % 5) as f64 - 2.0)
        }
    });
    let cols = ["intercept".to_string(), "slope".to_string()];
    let ols = weighted_least_squares(&x, &y, &DVector::from_element(n, 1.0), &cols)?;
    let hub = huber_regression(&x, &y, &cols, HuberOptions::default())?;
    println!("true slope 3.0");
    println!("OLS   slope {:.4} (se {:.4})", ols.beta[1], ols.se[1]);
    println!("Huber slope {:.4} (se {:.4}, {} iterations)", hub.beta[1], hub.se[1], hub.iterations);
    Ok(())
}
