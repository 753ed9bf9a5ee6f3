use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{McSampleSet, SampleKind, VoxelGeometry};

/// Voxel-wise uncertainty `U(x) = Σ_s U_s(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyVolume {
    geometry: VoxelGeometry,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl UncertaintyVolume {
    pub fn zeros(geometry: VoxelGeometry) -> Self {
        Self {
            values: vec![0.0; geometry.n_voxels()],
            geometry,
        }
    }

    /// Wraps precomputed values; they must be finite and non-negative.
    pub fn from_values(geometry: VoxelGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.n_voxels() {
            return Err(Error::InvalidInput(format!(
                "uncertainty has {} voxels, geometry {geometry} needs {}",
                values.len(),
                geometry.n_voxels()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("uncertainty value {v} is not finite and ≥ 0")));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.geometry.index(x, y, z)]
    }

    /// Min, mean and max over all voxels (mean summed in row-major order).
    pub fn summary(&self) -> UncertaintySummary {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &u in &self.values {
            min = min.min(u);
            max = max.max(u);
            sum += u;
        }
        UncertaintySummary {
            min,
            mean: sum / self.values.len() as f64,
            max,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EntropyOptions {
    /// Divide `U` by N so values are comparable across sample counts.
    pub normalize: bool,
}

/// `−p ln p`, with `0 ln 0 = 0`.
#[inline]
pub fn neg_p_ln_p(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// Voxel-wise uncertainty of a Monte Carlo sample set:
///
/// `U(x) = Σ_s [ −Σ_{i=1..N} p_s^i(x) ln p_s^i(x) ]`
///
/// The inner sum runs over samples and is neither averaged nor taken over the
/// mean distribution. Label-only sets enter as one-hot maps, for which every
/// term vanishes.
pub fn voxel_uncertainty(set: &McSampleSet, opts: EntropyOptions) -> Result<UncertaintyVolume> {
    set.ensure_valid()?;
    Ok(voxel_uncertainty_unchecked(set, opts))
}

pub(crate) fn voxel_uncertainty_unchecked(set: &McSampleSet, opts: EntropyOptions) -> UncertaintyVolume {
    let geometry = *set.geometry().expect("validated set is non-empty");
    let mut out = UncertaintyVolume::zeros(geometry);
    if set.kind() == Some(SampleKind::Labels) {
        // p ∈ {0, 1} everywhere.
        return out;
    }
    let stacks: Vec<_> = set
        .samples()
        .iter()
        .map(|s| s.probs().expect("probability samples"))
        .collect();
    let n_maps = set.registry().len();
    let slice = geometry.slice_len();
    out.values
        .par_chunks_mut(slice)
        .enumerate()
        .for_each(|(z, u)| {
            let range = z * slice..z * slice + u.len();
            let mut u_s = vec![0.0f64; u.len()];
            for s in 0..n_maps {
                u_s.fill(0.0);
                for stack in &stacks {
                    for (acc, &p) in u_s.iter_mut().zip(&stack.map(s)[range.clone()]) {
                        *acc += neg_p_ln_p(p as f64);
                    }
                }
                for (acc, &v) in u.iter_mut().zip(&u_s) {
                    *acc += v;
                }
            }
        });
    if opts.normalize {
        let n = set.n() as f64;
        out.values.iter_mut().for_each(|u| *u /= n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LabelVolume, McSample, ProbMapStack, StructureRegistry};

    fn registry2() -> StructureRegistry {
        StructureRegistry::from_pairs([(0, "bg"), (1, "s")], 0).unwrap()
    }

    fn single_voxel_set(n: usize, p_bg: f32, p_s: f32) -> McSampleSet {
        let g = VoxelGeometry::isotropic([1, 1, 1]).unwrap();
        let samples = (0..n)
            .map(|_| McSample::from_probs(ProbMapStack::new(g, vec![vec![p_bg], vec![p_s]]).unwrap()))
            .collect();
        McSampleSet::new(registry2(), samples)
    }

    #[test]
    fn identical_onehot_samples_have_zero_uncertainty() {
        let u = voxel_uncertainty(&single_voxel_set(5, 0.0, 1.0), EntropyOptions::default()).unwrap();
        assert_eq!(u.values(), &[0.0]);
        let g = VoxelGeometry::isotropic([3, 3, 3]).unwrap();
        let labels = McSampleSet::from_label_volumes(
            registry2(),
            vec![LabelVolume::filled(g, 1), LabelVolume::filled(g, 0)],
        );
        let u = voxel_uncertainty(&labels, EntropyOptions::default()).unwrap();
        assert!(u.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_structures_at_one_half() {
        let u = voxel_uncertainty(&single_voxel_set(2, 0.5, 0.5), EntropyOptions::default()).unwrap();
        // −4·(0.5·ln 0.5) = 2 ln 2
        assert!((u.values()[0] - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((u.values()[0] - 1.386294).abs() < 1e-6);
        let norm = voxel_uncertainty(&single_voxel_set(2, 0.5, 0.5), EntropyOptions { normalize: true }).unwrap();
        assert!((norm.values()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn one_over_e_maximises_each_term() {
        // Structure at p = 1/e in all 15 samples; the remaining mass on background.
        let p = (-1.0f64).exp();
        let set = single_voxel_set(15, (1.0 - p) as f32, p as f32);
        let u_s: f64 = (0..15).map(|_| neg_p_ln_p(p as f32 as f64)).sum();
        assert!((u_s - 15.0 / std::f64::consts::E).abs() < 1e-6);
        assert!((u_s - 5.5182).abs() < 1e-4);
        let u = voxel_uncertainty(&set, EntropyOptions::default()).unwrap();
        let u_bg: f64 = 15.0 * neg_p_ln_p((1.0 - p) as f32 as f64);
        assert!((u.values()[0] - (u_s + u_bg)).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_sample() {
        assert!(voxel_uncertainty(&single_voxel_set(1, 0.5, 0.5), EntropyOptions::default()).is_err());
    }
}
