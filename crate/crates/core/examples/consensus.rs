//! Consensus of label-only samples: per-voxel majority vote, ties to the lowest id.

use segqc::metrics::consensus_segmentation;
use segqc::{LabelVolume, McSampleSet, StructureRegistry, VoxelGeometry};

fn main() -> segqc::Result<()> {
    let registry = StructureRegistry::from_pairs([(0, "background"), (2, "a"), (7, "b")], 0)?;
    let g = VoxelGeometry::isotropic([4, 1, 1])?;
    let samples = vec![
        LabelVolume::new(g, vec![2, 7, 0, 7])?,
        LabelVolume::new(g, vec![2, 2, 0, 2])?,
        LabelVolume::new(g, vec![7, 7, 2, 0])?,
    ];
    let set = McSampleSet::from_label_volumes(registry, samples);
    let c = consensus_segmentation(&set)?;
    println!("consensus: {:?}", c.data());
    Ok(())
}
