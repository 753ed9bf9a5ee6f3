use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::nifti::{write_nifti, NiftiVolume};
use crate::error::{Error, Result};
use crate::metrics::{StructureRecord, StructureReport};
use crate::volume::LabelVolume;

/// Structure-wise metric painted into a heat-map volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapMetric {
    McDice,
    Cv,
    MeanUnc,
}

impl HeatmapMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            HeatmapMetric::McDice => "mc_dice",
            HeatmapMetric::Cv => "cv",
            HeatmapMetric::MeanUnc => "mean_unc",
        }
    }

    pub fn value(self, r: &StructureRecord) -> Option<f64> {
        match self {
            HeatmapMetric::McDice => r.mc_dice,
            HeatmapMetric::Cv => r.cv,
            HeatmapMetric::MeanUnc => r.mean_unc,
        }
    }
}

impl fmt::Display for HeatmapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for HeatmapMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [HeatmapMetric::McDice, HeatmapMetric::Cv, HeatmapMetric::MeanUnc]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown heat-map metric {s:?}; expected mc_dice, cv or mean_unc")))
    }
}

/// Voxel values of the heat map: each consensus voxel carries its
/// structure's metric; background and absent-flagged structures are 0.
pub fn heatmap_values(consensus: &LabelVolume, report: &StructureReport, metric: HeatmapMetric) -> Vec<f32> {
    let mut lut = vec![0f32; u16::MAX as usize + 1];
    for r in &report.structures {
        lut[r.label as usize] = metric.value(r).unwrap_or(0.0) as f32;
    }
    consensus.data().iter().map(|&l| lut[l as usize]).collect()
}

pub fn write_heatmap_volume(
    consensus: &LabelVolume,
    report: &StructureReport,
    metric: HeatmapMetric,
    path: impl AsRef<Path>,
) -> Result<()> {
    let v = NiftiVolume::from_f32(*consensus.geometry(), heatmap_values(consensus, report, metric))?;
    write_nifti(&v, path)
}
