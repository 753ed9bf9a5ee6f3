//! Voxel-wise and structure-wise uncertainty from Monte Carlo segmentations.
//!
//! * voxel-wise: entropy summed over samples and structures ([`voxel_uncertainty`])
//! * type 1: coefficient of variation of the structure volume ([`cv_volume`])
//! * type 2: mean pairwise Dice between samples ([`mc_dice`])
//! * type 3: mean voxel-wise uncertainty inside the consensus structure
//!   ([`mean_structure_uncertainty`])
//!
//! Reductions run in a fixed order (row-major voxels, ascending sample index,
//! pairs `i < j` lexicographically), so parallel and sequential runs give
//! bit-identical results.

mod consensus;
mod dice;
mod entropy;
mod report;

pub use consensus::consensus_segmentation;
pub use dice::{dice_all, dice_from_counts, dice_vs_gt, mc_dice};
pub use entropy::{neg_p_ln_p, voxel_uncertainty, EntropyOptions, UncertaintySummary, UncertaintyVolume};
pub use report::{
    analyze_scan, cv_volume, mean_structure_uncertainty, structure_report, volume_stats, ReportOptions,
    ScanAnalysis, StructureRecord, StructureReport, VolumeStats,
};
