use serde::{Deserialize, Serialize};

use super::consensus::consensus_unchecked;
use super::dice::{dice_all, mc_dice_all};
use super::entropy::{voxel_uncertainty_unchecked, EntropyOptions, UncertaintySummary, UncertaintyVolume};
use crate::error::Result;
use crate::volume::{LabelId, LabelVolume, McSampleSet, StructureRegistry};

/// Per-structure quality-control metrics of one scan.
///
/// `cv`, `mc_dice` and `mean_unc` are `None` (the absent flag) exactly when
/// the voxel or sample set defining them is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub label: LabelId,
    pub name: String,
    /// Mean of the per-sample volumes, mm³.
    pub mean_volume: f64,
    /// Sample standard deviation (divisor N−1) of the per-sample volumes, mm³.
    pub std_volume: f64,
    /// Coefficient of variation of the volume across samples.
    pub cv: Option<f64>,
    /// Mean pairwise Dice across samples.
    pub mc_dice: Option<f64>,
    /// Mean voxel-wise uncertainty over the consensus voxels of the structure.
    pub mean_unc: Option<f64>,
    /// Dice of the consensus against a reference segmentation, when one was given.
    pub gt_dice: Option<f64>,
    pub consensus_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub n_samples: usize,
    pub entropy_normalized: bool,
    pub uncertainty: UncertaintySummary,
    pub structures: Vec<StructureRecord>,
}

impl StructureReport {
    pub fn get(&self, label: LabelId) -> Option<&StructureRecord> {
        self.structures.iter().find(|r| r.label == label)
    }

    pub fn by_name(&self, name: &str) -> Option<&StructureRecord> {
        self.structures.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeStats {
    pub mean: f64,
    pub std: f64,
    /// `std / mean`; `None` when the mean is zero.
    pub cv: Option<f64>,
}

/// Mean, sample standard deviation and coefficient of variation of a volume list.
pub fn volume_stats(volumes: &[f64]) -> VolumeStats {
    let n = volumes.len() as f64;
    let mean = volumes.iter().sum::<f64>() / n;
    let ss: f64 = volumes.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = if volumes.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    let cv = (mean != 0.0).then(|| std / mean);
    VolumeStats { mean, std, cv }
}

/// Coefficient of variation of structure `s`'s volume over the samples, each
/// sample contributing the volume of its own labels.
pub fn cv_volume(set: &McSampleSet, s: LabelId) -> Result<Option<f64>> {
    set.ensure_valid()?;
    let index = set.registry().require(s)?;
    Ok(per_sample_volume_stats(set)[index].cv)
}

/// Volume statistics for every registry entry. Computed on voxel counts so
/// that identical samples give a standard deviation of exactly zero.
fn per_sample_volume_stats(set: &McSampleSet) -> Vec<VolumeStats> {
    let registry = set.registry();
    let vv = set.geometry().expect("validated set is non-empty").voxel_volume();
    let counts: Vec<Vec<usize>> = set
        .hard_labels()
        .iter()
        .map(|v| v.label_counts(registry))
        .collect();
    stats_from_counts(&counts, registry.len(), vv)
}

fn stats_from_counts(counts: &[Vec<usize>], n_entries: usize, voxel_volume: f64) -> Vec<VolumeStats> {
    (0..n_entries)
        .map(|s| {
            let c: Vec<f64> = counts.iter().map(|c| c[s] as f64).collect();
            let st = volume_stats(&c);
            VolumeStats {
                mean: st.mean * voxel_volume,
                std: st.std * voxel_volume,
                cv: st.cv,
            }
        })
        .collect()
}

/// Mean of `u` over the voxels the consensus assigns to `s`; `None` if there are none.
pub fn mean_structure_uncertainty(
    set: &McSampleSet,
    consensus: &LabelVolume,
    u: &UncertaintyVolume,
    s: LabelId,
) -> Result<Option<f64>> {
    if let Some(g) = set.geometry() {
        g.ensure_same(consensus.geometry(), "sample set vs consensus")?;
    }
    consensus.geometry().ensure_same(u.geometry(), "consensus vs uncertainty")?;
    set.registry().require(s)?;
    let (sum, count) = consensus
        .data()
        .iter()
        .zip(u.values())
        .filter(|(&l, _)| l == s)
        .fold((0.0, 0usize), |(sum, n), (_, &v)| (sum + v, n + 1));
    Ok((count > 0).then(|| sum / count as f64))
}

/// Row-major sums of `u` per consensus label, with voxel counts.
fn uncertainty_sums(consensus: &LabelVolume, u: &UncertaintyVolume, registry: &StructureRegistry) -> (Vec<f64>, Vec<usize>) {
    let lut = registry.lut();
    let mut sums = vec![0.0; registry.len()];
    let mut counts = vec![0usize; registry.len()];
    for (&l, &v) in consensus.data().iter().zip(u.values()) {
        let i = lut[l as usize] as usize;
        sums[i] += v;
        counts[i] += 1;
    }
    (sums, counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub entropy: EntropyOptions,
}

/// Everything computed for one scan.
#[derive(Debug, Clone)]
pub struct ScanAnalysis {
    pub consensus: LabelVolume,
    pub uncertainty: UncertaintyVolume,
    pub report: StructureReport,
}

/// Consensus, voxel-wise uncertainty and the per-structure report of a sample set.
pub fn analyze_scan(set: &McSampleSet, gt: Option<&LabelVolume>, opts: ReportOptions) -> Result<ScanAnalysis> {
    set.ensure_valid()?;
    let registry = set.registry();
    let geometry = *set.geometry().expect("validated set is non-empty");
    if let Some(gt) = gt {
        geometry.ensure_same(gt.geometry(), "sample set vs ground truth")?;
        gt.validate_against(registry)?;
    }

    let consensus = consensus_unchecked(set);
    let uncertainty = voxel_uncertainty_unchecked(set, opts.entropy);

    let labels = set.hard_labels();
    let label_refs: Vec<&LabelVolume> = labels.iter().map(|c| c.as_ref()).collect();
    let counts: Vec<Vec<usize>> = label_refs.iter().map(|v| v.label_counts(registry)).collect();
    let vstats = stats_from_counts(&counts, registry.len(), geometry.voxel_volume());
    let agreement = mc_dice_all(&label_refs, registry);
    drop(labels);

    let (unc_sums, consensus_counts) = uncertainty_sums(&consensus, &uncertainty, registry);
    let gt_dice = gt.map(|gt| dice_all(&consensus, gt, registry)).transpose()?;

    let structures = (0..registry.len())
        .filter(|&s| s != registry.background_index())
        .map(|s| {
            let entry = &registry.entries()[s];
            StructureRecord {
                label: entry.id,
                name: entry.name.clone(),
                mean_volume: vstats[s].mean,
                std_volume: vstats[s].std,
                cv: vstats[s].cv,
                mc_dice: agreement[s],
                mean_unc: (consensus_counts[s] > 0).then(|| unc_sums[s] / consensus_counts[s] as f64),
                gt_dice: gt_dice.as_ref().map(|d| d[s]),
                consensus_volume: consensus_counts[s] as f64 * geometry.voxel_volume(),
            }
        })
        .collect();

    let report = StructureReport {
        n_samples: set.n(),
        entropy_normalized: opts.entropy.normalize,
        uncertainty: uncertainty.summary(),
        structures,
    };
    Ok(ScanAnalysis {
        consensus,
        uncertainty,
        report,
    })
}

/// Per-structure report; see [`analyze_scan`] for the volumes behind it.
pub fn structure_report(set: &McSampleSet, gt: Option<&LabelVolume>, opts: ReportOptions) -> Result<StructureReport> {
    analyze_scan(set, gt, opts).map(|a| a.report)
}
