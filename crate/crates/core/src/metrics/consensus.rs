use rayon::prelude::*;

use crate::error::Result;
use crate::volume::{ids_ascending, LabelId, LabelVolume, McSampleSet, SampleKind};

/// Final segmentation of a sample set: per voxel, the label maximising the
/// mean probability over samples. For label-only sets this is a majority
/// vote. Ties go to the lowest label id.
pub fn consensus_segmentation(set: &McSampleSet) -> Result<LabelVolume> {
    set.ensure_valid()?;
    Ok(consensus_unchecked(set))
}

pub(crate) fn consensus_unchecked(set: &McSampleSet) -> LabelVolume {
    match set.kind() {
        Some(SampleKind::Labels) => majority_vote(set),
        _ => mean_probability_argmax(set),
    }
}

fn majority_vote(set: &McSampleSet) -> LabelVolume {
    let geometry = *set.geometry().expect("validated set is non-empty");
    let volumes: Vec<&[LabelId]> = set
        .samples()
        .iter()
        .map(|s| s.labels().expect("label samples").data())
        .collect();
    let slice = geometry.slice_len();
    let mut data = vec![0 as LabelId; geometry.n_voxels()];
    data.par_chunks_mut(slice).enumerate().for_each(|(z, out)| {
        let offset = z * slice;
        let mut votes = vec![0 as LabelId; volumes.len()];
        for (k, o) in out.iter_mut().enumerate() {
            for (v, vol) in votes.iter_mut().zip(&volumes) {
                *v = vol[offset + k];
            }
            *o = mode_lowest(&mut votes);
        }
    });
    LabelVolume::new(geometry, data).expect("geometry preserved")
}

/// Most frequent value; ties resolved towards the smallest value.
fn mode_lowest(votes: &mut [LabelId]) -> LabelId {
    votes.sort_unstable();
    let mut best = votes[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < votes.len() {
        let mut j = i + 1;
        while j < votes.len() && votes[j] == votes[i] {
            j += 1;
        }
        if j - i > best_count {
            best = votes[i];
            best_count = j - i;
        }
        i = j;
    }
    best
}

fn mean_probability_argmax(set: &McSampleSet) -> LabelVolume {
    let registry = set.registry();
    let geometry = *set.geometry().expect("validated set is non-empty");
    let stacks: Vec<_> = set
        .samples()
        .iter()
        .map(|s| s.probs().expect("probability samples"))
        .collect();
    let order = ids_ascending(registry);
    let slice = geometry.slice_len();
    let mut data = vec![0 as LabelId; geometry.n_voxels()];
    data.par_chunks_mut(slice).enumerate().for_each(|(z, out)| {
        let offset = z * slice;
        let len = out.len();
        // Σ_i p_s^i in ascending sample order; dividing by N does not move the argmax.
        let sums: Vec<Vec<f64>> = (0..registry.len())
            .map(|s| {
                let mut acc = vec![0.0f64; len];
                for stack in &stacks {
                    for (a, &p) in acc.iter_mut().zip(&stack.map(s)[offset..offset + len]) {
                        *a += p as f64;
                    }
                }
                acc
            })
            .collect();
        for (k, o) in out.iter_mut().enumerate() {
            let mut best = order[0];
            for &s in &order[1..] {
                if sums[s][k] > sums[best][k] {
                    best = s;
                }
            }
            *o = registry.id_at(best);
        }
    });
    LabelVolume::new(geometry, data).expect("geometry preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{labels_to_onehot_probs, McSample, StructureRegistry, VoxelGeometry};

    fn registry() -> StructureRegistry {
        StructureRegistry::from_pairs([(0, "bg"), (7, "b"), (2, "a")], 0).unwrap()
    }

    fn voxel(label: LabelId) -> LabelVolume {
        LabelVolume::filled(VoxelGeometry::isotropic([1, 1, 1]).unwrap(), label)
    }

    #[test]
    fn identical_samples() {
        let g = VoxelGeometry::isotropic([3, 2, 2]).unwrap();
        let v = LabelVolume::new(g, vec![0, 2, 7, 7, 2, 0, 0, 0, 2, 2, 7, 0]).unwrap();
        let set = McSampleSet::from_label_volumes(registry(), vec![v.clone(), v.clone(), v.clone()]);
        assert_eq!(consensus_segmentation(&set).unwrap(), v);
    }

    #[test]
    fn majority_and_tie_break() {
        let set = McSampleSet::from_label_volumes(registry(), vec![voxel(2), voxel(2), voxel(7)]);
        assert_eq!(consensus_segmentation(&set).unwrap().data(), &[2]);
        let tie = McSampleSet::from_label_volumes(registry(), vec![voxel(7), voxel(2)]);
        assert_eq!(consensus_segmentation(&tie).unwrap().data(), &[2]);
    }

    #[test]
    fn onehot_probabilities_agree_with_vote() {
        let r = registry();
        let labels = [7, 2, 7, 0, 2];
        let votes = McSampleSet::from_label_volumes(r.clone(), labels.iter().map(|&l| voxel(l)).collect());
        let probs = McSampleSet::new(
            r.clone(),
            labels
                .iter()
                .map(|&l| McSample::from_probs(labels_to_onehot_probs(&voxel(l), &r).unwrap()))
                .collect(),
        );
        assert_eq!(
            consensus_segmentation(&votes).unwrap(),
            consensus_segmentation(&probs).unwrap()
        );
    }
}
