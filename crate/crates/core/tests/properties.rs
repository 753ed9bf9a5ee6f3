use proptest::prelude::*;

use segqc::io::{cohort_csv_string, encode_nifti, parse_cohort_csv, parse_nifti, NiftiVolume};
use segqc::metrics::{consensus_segmentation, dice_vs_gt, mc_dice, voxel_uncertainty, EntropyOptions};
use segqc::stats::{pearson, CohortRow, CohortTable};
use segqc::volume::{labels_to_onehot_probs, validate_sample_set};
use segqc::{LabelVolume, McSample, McSampleSet, StructureRegistry, VoxelGeometry};

const IDS: [u16; 4] = [0, 1, 2, 7];

fn registry() -> StructureRegistry {
    StructureRegistry::from_pairs(IDS.iter().map(|&i| (i, format!("l{i}"))), 0).unwrap()
}

fn geometry() -> VoxelGeometry {
    VoxelGeometry::new([4, 3, 2], [1.0, 0.5, 2.0]).unwrap()
}

fn volume() -> impl Strategy<Value = LabelVolume> {
    prop::collection::vec(prop::sample::select(IDS.to_vec()), 24)
        .prop_map(|d| LabelVolume::new(geometry(), d).unwrap())
}

fn naive_mc_dice(vols: &[LabelVolume], s: u16) -> Option<f64> {
    let count = |v: &LabelVolume| v.data().iter().filter(|&&l| l == s).count();
    if vols.iter().all(|v| count(v) == 0) {
        return None;
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..vols.len() {
        for j in i + 1..vols.len() {
            let inter = vols[i].data().iter().zip(vols[j].data()).filter(|(a, b)| **a == s && **b == s).count();
            let (a, b) = (count(&vols[i]), count(&vols[j]));
            total += if a + b == 0 { 1.0 } else { 2.0 * inter as f64 / (a + b) as f64 };
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}

proptest! {
    #[test]
    fn dice_is_symmetric(a in volume(), b in volume(), s in prop::sample::select(IDS.to_vec())) {
        let ab = dice_vs_gt(&a, &b, s).unwrap();
        prop_assert_eq!(ab, dice_vs_gt(&b, &a, s).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice_vs_gt(&a, &a, s).unwrap(), 1.0);
    }

    #[test]
    fn mc_dice_matches_brute_force_and_ignores_order(
        vols in prop::collection::vec(volume(), 2..6),
        rot in 0usize..5,
    ) {
        let set = McSampleSet::from_label_volumes(registry(), vols.clone());
        let mut rotated = vols.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let other = McSampleSet::from_label_volumes(registry(), rotated);
        for s in [1u16, 2, 7] {
            let d = mc_dice(&set, s).unwrap();
            prop_assert_eq!(d, naive_mc_dice(&vols, s));
            match (d, mc_dice(&other, s).unwrap()) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn onehot_round_trip(v in volume()) {
        let r = registry();
        let probs = labels_to_onehot_probs(&v, &r).unwrap();
        prop_assert!(probs.check(&r, 0.0).is_empty());
        prop_assert_eq!(probs.argmax_labels(&r), v);
    }

    #[test]
    fn onehot_samples_have_zero_uncertainty_and_vote_consensus(vols in prop::collection::vec(volume(), 2..5)) {
        let r = registry();
        let labels = McSampleSet::from_label_volumes(r.clone(), vols.clone());
        let probs = McSampleSet::new(
            r.clone(),
            vols.iter().map(|v| McSample::from_probs(labels_to_onehot_probs(v, &r).unwrap())).collect(),
        );
        let u = voxel_uncertainty(&probs, EntropyOptions::default()).unwrap();
        prop_assert!(u.values().iter().all(|&x| x == 0.0));
        prop_assert_eq!(consensus_segmentation(&labels).unwrap(), consensus_segmentation(&probs).unwrap());
    }

    #[test]
    fn identical_samples_are_their_own_consensus(v in volume(), n in 2usize..6) {
        let set = McSampleSet::from_label_volumes(registry(), vec![v.clone(); n]);
        prop_assert_eq!(consensus_segmentation(&set).unwrap(), v);
    }

    #[test]
    fn validation_is_pure(vols in prop::collection::vec(volume(), 1..4)) {
        let set = McSampleSet::from_label_volumes(registry(), vols);
        prop_assert_eq!(validate_sample_set(&set), validate_sample_set(&set));
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let Ok(r) = pearson(&xs, &ys) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - pearson(&ys, &xs).unwrap()).abs() <= 1e-12);
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((r - pearson(&scaled, &ys).unwrap()).abs() <= 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((r + pearson(&flipped, &ys).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn nifti_label_round_trip(data in prop::collection::vec(any::<u16>(), 24)) {
        let v = LabelVolume::new(geometry(), data).unwrap();
        let back = parse_nifti(&encode_nifti(&NiftiVolume::from_labels(&v))).unwrap();
        prop_assert_eq!(back.to_labels().unwrap(), v);
    }

    #[test]
    fn nifti_never_panics_on_damage(
        edits in prop::collection::vec((0usize..400, any::<u8>()), 1..20),
        cut in 0usize..420,
    ) {
        let v = LabelVolume::new(geometry(), (0..24).collect()).unwrap();
        let mut bytes = encode_nifti(&NiftiVolume::from_labels(&v));
        for (at, b) in edits {
            if at < bytes.len() {
                bytes[at] = b;
            }
        }
        bytes.truncate(cut);
        let _ = parse_nifti(&bytes);
    }

    #[test]
    fn cohort_csv_round_trip(
        rows in prop::collection::vec(
            (any::<f64>(), 0u8..2, 0u8..2, any::<f64>(), prop::option::of(0.0f64..1e3), prop::option::of(0.0f64..1.0)),
            1..20,
        ),
    ) {
        let rows: Vec<CohortRow> = rows
            .into_iter()
            .enumerate()
            .filter(|(_, r)| r.0.is_finite() && r.3.is_finite())
            .map(|(i, (age, sex, dx, volume, cv, mc_dice))| CohortRow {
                subject_id: format!("s{i}"),
                age,
                sex,
                dx,
                site: Some(format!("site_{}", i % 3)),
                volume,
                cv,
                mc_dice,
            })
            .collect();
        let t = CohortTable::new(rows, true, true).unwrap();
        prop_assert_eq!(parse_cohort_csv(cohort_csv_string(&t).as_bytes()).unwrap(), t);
    }
}
