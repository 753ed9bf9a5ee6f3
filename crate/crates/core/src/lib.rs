//! Segmentation quality control from Monte Carlo segmentation samples.
//!
//! - [`volume`]: grids, label volumes, probability maps, sample sets.
//! - [`metrics`]: voxel-wise uncertainty, consensus, Dice and per-structure reports.
//! - [`stats`]: correlation, weighted and robust regression, group analysis.
//! - [`synth`]: phantoms, a perturbation sampler and cohort simulation.
//! - [`io`]: NIfTI-1, JSON and CSV files.
//! - [`cli`]: the `segqc` command line.

pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod stats;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::{
    analyze_scan, consensus_segmentation, dice_vs_gt, mc_dice, structure_report, voxel_uncertainty, EntropyOptions,
    ReportOptions, StructureRecord, StructureReport, UncertaintyVolume,
};
pub use volume::{
    LabelId, LabelVolume, McSample, McSampleSet, ProbMapStack, Structure, StructureRegistry, VoxelGeometry,
};
