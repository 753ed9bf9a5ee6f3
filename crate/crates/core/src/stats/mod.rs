//! Correlation of uncertainty with accuracy and uncertainty-weighted group analysis.

mod cohort;
mod correlation;
mod group;
mod regression;
pub mod special;

pub use cohort::{CohortRow, CohortTable, Design, DesignOptions, DX_COLUMN};
pub use correlation::{correlate_uncertainty_accuracy, pearson, pearson_paired, Correlation, UncertaintyCorrelation};
pub use group::{group_analysis, AnalysisMode, GroupAnalysis, GroupOptions, GroupRow};
pub use regression::{
    huber_fit, huber_fit_with, huber_regression, mad_scale, weighted_least_squares, wls_fit, wls_fit_with,
    Coefficient, HuberOptions, Method, RegressionResult, WeightMode, MAX_CONDITION, WEIGHT_FLOOR,
};
pub use special::{student_t_cdf, student_t_two_sided_p};
