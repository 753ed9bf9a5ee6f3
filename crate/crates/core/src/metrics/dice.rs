use rayon::prelude::*;

use crate::error::Result;
use crate::volume::{LabelId, LabelVolume, McSampleSet, StructureRegistry};

/// `2|A∩B| / (|A|+|B|)`; two empty masks agree perfectly.
#[inline]
pub fn dice_from_counts(intersection: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * intersection as f64 / (a + b) as f64
    }
}

/// Dice overlap of structure `s` between a segmentation and a reference.
pub fn dice_vs_gt(seg: &LabelVolume, gt: &LabelVolume, s: LabelId) -> Result<f64> {
    seg.geometry().ensure_same(gt.geometry(), "segmentation vs ground truth")?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&x, &y) in seg.data().iter().zip(gt.data()) {
        let (in_a, in_b) = (x == s, y == s);
        a += in_a as usize;
        b += in_b as usize;
        inter += (in_a && in_b) as usize;
    }
    Ok(dice_from_counts(inter, a, b))
}

/// Dice of every registry entry (registry order) between two valid label maps.
pub fn dice_all(seg: &LabelVolume, gt: &LabelVolume, registry: &StructureRegistry) -> Result<Vec<f64>> {
    seg.geometry().ensure_same(gt.geometry(), "segmentation vs ground truth")?;
    for v in [seg, gt] {
        v.validate_against(registry)?;
    }
    let sizes_a = seg.label_counts(registry);
    let sizes_b = gt.label_counts(registry);
    let inter = intersection_counts(seg.data(), gt.data(), registry);
    Ok((0..registry.len())
        .map(|s| dice_from_counts(inter[s], sizes_a[s], sizes_b[s]))
        .collect())
}

fn intersection_counts(a: &[LabelId], b: &[LabelId], registry: &StructureRegistry) -> Vec<usize> {
    let lut = registry.lut();
    let mut inter = vec![0usize; registry.len()];
    for (&x, &y) in a.iter().zip(b) {
        if x == y {
            inter[lut[x as usize] as usize] += 1;
        }
    }
    inter
}

/// Mean pairwise Dice `d_s^MC` of structure `s` over all sample pairs.
///
/// `None` when the structure is empty in every sample.
pub fn mc_dice(set: &McSampleSet, s: LabelId) -> Result<Option<f64>> {
    set.ensure_valid()?;
    let index = set.registry().require(s)?;
    let labels = set.hard_labels();
    let refs: Vec<&LabelVolume> = labels.iter().map(|c| c.as_ref()).collect();
    Ok(mc_dice_all(&refs, set.registry())[index])
}

/// `d_s^MC` for every registry entry. Pairs `i < j` are visited in
/// lexicographic order and their Dice values summed in that order.
pub(crate) fn mc_dice_all(labels: &[&LabelVolume], registry: &StructureRegistry) -> Vec<Option<f64>> {
    let n = labels.len();
    assert!(n >= 2, "mc_dice needs at least two samples");
    let sizes: Vec<Vec<usize>> = labels.par_iter().map(|v| v.label_counts(registry)).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let inters: Vec<Vec<usize>> = pairs
        .par_iter()
        .map(|&(i, j)| intersection_counts(labels[i].data(), labels[j].data(), registry))
        .collect();
    (0..registry.len())
        .map(|s| {
            if sizes.iter().all(|c| c[s] == 0) {
                return None;
            }
            let total: f64 = pairs
                .iter()
                .zip(&inters)
                .map(|(&(i, j), inter)| dice_from_counts(inter[s], sizes[i][s], sizes[j][s]))
                .sum();
            Some(total / pairs.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::volume::VoxelGeometry;

    fn registry() -> StructureRegistry {
        StructureRegistry::from_pairs([(0, "bg"), (1, "s")], 0).unwrap()
    }

    /// Line of 10 voxels with `s` on the given positions.
    fn line(on: &[usize]) -> LabelVolume {
        let g = VoxelGeometry::isotropic([10, 1, 1]).unwrap();
        let mut v = LabelVolume::filled(g, 0);
        for &x in on {
            v.set(x, 0, 0, 1);
        }
        v
    }

    #[test]
    fn dice_vs_gt_examples() {
        let a = line(&[0, 1, 2, 3]);
        assert_eq!(dice_vs_gt(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(dice_vs_gt(&line(&[0, 1, 2, 3, 4]), &line(&[5, 6, 7, 8, 9]), 1).unwrap(), 0.0);
        // |A| = 4, |B| = 6, |A∩B| = 3
        let b = line(&[1, 2, 3, 5, 6, 7]);
        assert!((dice_vs_gt(&a, &b, 1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(dice_vs_gt(&line(&[]), &line(&[]), 1).unwrap(), 1.0);
        assert_eq!(dice_vs_gt(&line(&[]), &line(&[2]), 1).unwrap(), 0.0);
    }

    #[test]
    fn dice_vs_gt_rejects_mismatched_geometry() {
        let other = LabelVolume::filled(VoxelGeometry::isotropic([5, 2, 1]).unwrap(), 0);
        assert!(matches!(
            dice_vs_gt(&line(&[]), &other, 1),
            Err(Error::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn mc_dice_examples() {
        let a = line(&[0, 1, 2, 3]);
        let identical = McSampleSet::from_label_volumes(registry(), vec![a.clone(); 4]);
        assert_eq!(mc_dice(&identical, 1).unwrap(), Some(1.0));

        let pair = McSampleSet::from_label_volumes(registry(), vec![a.clone(), line(&[1, 2, 3, 5, 6, 7])]);
        assert!((mc_dice(&pair, 1).unwrap().unwrap() - 0.6).abs() < 1e-15);

        // A = B, Dice(A, C) = Dice(B, C) = 0.5
        let c = line(&[2, 3, 4, 5]);
        assert_eq!(dice_vs_gt(&a, &c, 1).unwrap(), 0.5);
        let three = McSampleSet::from_label_volumes(registry(), vec![a.clone(), a, c]);
        assert!((mc_dice(&three, 1).unwrap().unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let empty = McSampleSet::from_label_volumes(registry(), vec![line(&[]), line(&[])]);
        assert_eq!(mc_dice(&empty, 1).unwrap(), None);
        assert!(mc_dice(&empty, 4).is_err());
    }

    #[test]
    fn mc_dice_partial_absence() {
        // Pairs: (A,∅)=0, (A,∅)=0, (∅,∅)=1
        let set = McSampleSet::from_label_volumes(registry(), vec![line(&[3]), line(&[]), line(&[])]);
        assert!((mc_dice(&set, 1).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mc_dice_needs_two_samples() {
        let set = McSampleSet::from_label_volumes(registry(), vec![line(&[1])]);
        assert!(matches!(mc_dice(&set, 1), Err(Error::TooFewSamples(1))));
    }
}
