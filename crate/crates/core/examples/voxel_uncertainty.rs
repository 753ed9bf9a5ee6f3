//! Voxel-wise uncertainty U(x) = −Σ_s Σ_i p ln p of a small probabilistic sample set.

use segqc::metrics::{voxel_uncertainty, EntropyOptions};
use segqc::{McSample, McSampleSet, ProbMapStack, StructureRegistry, VoxelGeometry};

fn main() -> segqc::Result<()> {
    let registry = StructureRegistry::from_pairs([(0, "background"), (1, "left"), (2, "right")], 0)?;
    let g = VoxelGeometry::isotropic([3, 1, 1])?;
    // voxel 0 certain, voxel 1 split between two labels, voxel 2 uniform
    let stack = |wobble: f32| {
        ProbMapStack::new(
            g,
            vec![
                vec![1.0, 0.0, 1.0 / 3.0],
                vec![0.0, 0.5 + wobble, 1.0 / 3.0],
                vec![0.0, 0.5 - wobble, 1.0 / 3.0],
            ],
        )
    };
    let set = McSampleSet::new(
        registry,
        vec![McSample::from_probs(stack(0.0)?), McSample::from_probs(stack(0.2)?)],
    );
    let u = voxel_uncertainty(&set, EntropyOptions::default())?;
    let un = voxel_uncertainty(&set, EntropyOptions { normalize: true })?;
    for (x, (a, b)) in u.values().iter().zip(un.values()).enumerate() {
        println!("voxel {x}: U = {a:.4}  U/N = {b:.4}");
    }
    println!("summary: {:?}", u.summary());
    Ok(())
}
