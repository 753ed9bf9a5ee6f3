use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelId, LabelVolume, McSample, McSampleSet, ProbMapStack, StructureRegistry, VoxelGeometry};

/// Perturbation model standing in for dropout sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-structure probability that a boundary voxel swaps label.
    #[serde(default)]
    pub boundary_flip_prob: BTreeMap<LabelId, f64>,
    /// Flip probability of structures missing from `boundary_flip_prob`.
    #[serde(default)]
    pub default_flip_prob: f64,
    /// Radius (6-connected steps) of the per-sample erosion or dilation.
    #[serde(default)]
    pub erosion_dilation_radius: u32,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Emit per-sample probability maps alongside the labels.
    #[serde(default = "default_true")]
    pub soft_probabilities: bool,
    /// Boundary-flip passes applied once per scan before sampling: a shared
    /// error that every sample inherits, so the consensus itself deviates
    /// from the ground truth in proportion to the flip probabilities.
    #[serde(default)]
    pub shared_flip_passes: u32,
}

fn default_true() -> bool {
    true
}

impl NoiseSpec {
    /// Same flip probability for every structure.
    pub fn uniform(flip_prob: f64, radius: u32, n_samples: usize, seed: u64) -> Self {
        Self {
            boundary_flip_prob: BTreeMap::new(),
            default_flip_prob: flip_prob,
            erosion_dilation_radius: radius,
            n_samples,
            seed,
            soft_probabilities: true,
            shared_flip_passes: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::TooFewSamples(self.n_samples));
        }
        for (&label, &p) in self
            .boundary_flip_prob
            .iter()
            .chain(std::iter::once((&0, &self.default_flip_prob)))
        {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "flip probability {p} (label {label}) outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn flip_prob(&self, label: LabelId, registry: &StructureRegistry) -> f64 {
        if label == registry.background() {
            0.0
        } else {
            *self.boundary_flip_prob.get(&label).unwrap_or(&self.default_flip_prob)
        }
    }
}

const STREAM_JITTER: u64 = 1;
const STREAM_FLIP: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one (seed, sample, label, purpose) tuple.
///
/// Every random draw of a sample comes from one of these streams, so samples
/// can be generated in any order or in parallel with identical results.
pub fn substream(seed: u64, sample: usize, label: LabelId, purpose: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [sample as u64, label as u64, purpose] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Labels of the 6-connected in-volume neighbours of voxel `i`, in the order
/// −x, +x, −y, +y, −z, +z.
fn neighbours(g: &VoxelGeometry, data: &[LabelId], i: usize, out: &mut Vec<LabelId>) {
    out.clear();
    let [x, y, z] = g.coords(i);
    let [nx, ny, nz] = g.dims();
    let sx = 1;
    let sy = nx;
    let sz = nx * ny;
    if x > 0 {
        out.push(data[i - sx]);
    }
    if x + 1 < nx {
        out.push(data[i + sx]);
    }
    if y > 0 {
        out.push(data[i - sy]);
    }
    if y + 1 < ny {
        out.push(data[i + sy]);
    }
    if z > 0 {
        out.push(data[i - sz]);
    }
    if z + 1 < nz {
        out.push(data[i + sz]);
    }
}

fn jitter(labels: &mut LabelVolume, registry: &StructureRegistry, noise: &NoiseSpec, sample: usize) {
    if noise.erosion_dilation_radius == 0 {
        return;
    }
    let g = *labels.geometry();
    let background = registry.background();
    let mut nb = Vec::with_capacity(6);
    for s in registry.structures().map(|s| s.id) {
        let dilate = substream(noise.seed, sample, s, STREAM_JITTER).random_bool(0.5);
        for _ in 0..noise.erosion_dilation_radius {
            let snapshot = labels.data().to_vec();
            let out = labels.data_mut();
            for (i, &l) in snapshot.iter().enumerate() {
                if dilate && l == background {
                    neighbours(&g, &snapshot, i, &mut nb);
                    if nb.contains(&s) {
                        out[i] = s;
                    }
                } else if !dilate && l == s {
                    neighbours(&g, &snapshot, i, &mut nb);
                    if let Some(&t) = nb.iter().find(|&&t| t != s) {
                        out[i] = t;
                    }
                }
            }
        }
    }
}

fn flip_boundaries(labels: &LabelVolume, registry: &StructureRegistry, noise: &NoiseSpec, sample: usize) -> LabelVolume {
    let g = *labels.geometry();
    let src = labels.data();
    let mut streams: Vec<ChaCha8Rng> = registry
        .entries()
        .iter()
        .map(|s| substream(noise.seed, sample, s.id, STREAM_FLIP))
        .collect();
    let flip: Vec<f64> = registry.entries().iter().map(|s| noise.flip_prob(s.id, registry)).collect();
    let mut out = labels.clone();
    let mut nb = Vec::with_capacity(6);
    for (i, &a) in src.iter().enumerate() {
        neighbours(&g, src, i, &mut nb);
        nb.retain(|&t| t != a);
        if nb.is_empty() {
            continue;
        }
        let ai = registry.index_of(a).expect("validated labels");
        let rng = &mut streams[ai];
        let u: f64 = rng.random();
        let t = nb[rng.random_range(0..nb.len())];
        let p = flip[ai].max(flip[registry.index_of(t).expect("validated labels")]);
        if u < p {
            out.data_mut()[i] = t;
        }
    }
    out
}

/// Soft probabilities of one sample: one-hot labels blended with the 3×3×3
/// neighbourhood label frequencies, weighted by the largest flip probability
/// among the neighbourhood's labels. Zero-noise neighbourhoods stay one-hot.
fn soft_probabilities(labels: &LabelVolume, registry: &StructureRegistry, flip: &[f64]) -> ProbMapStack {
    let g = *labels.geometry();
    let [nx, ny, nz] = g.dims();
    let data = labels.data();
    let lut = |l: LabelId| registry.index_of(l).expect("validated labels");
    let mut maps = vec![vec![0.0f32; g.n_voxels()]; registry.len()];
    let mut counts = vec![0u32; registry.len()];
    let mut seen = Vec::with_capacity(27);
    for (i, &l) in data.iter().enumerate() {
        let [x, y, z] = g.coords(i);
        seen.clear();
        let mut total = 0u32;
        for zz in z.saturating_sub(1)..=(z + 1).min(nz - 1) {
            for yy in y.saturating_sub(1)..=(y + 1).min(ny - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(nx - 1) {
                    let s = lut(data[g.index(xx, yy, zz)]);
                    if counts[s] == 0 {
                        seen.push(s);
                    }
                    counts[s] += 1;
                    total += 1;
                }
            }
        }
        let own = lut(l);
        let blend = seen.iter().map(|&s| flip[s]).fold(0.0f64, f64::max);
        if seen.len() == 1 || blend == 0.0 {
            maps[own][i] = 1.0;
        } else {
            for &s in &seen {
                let hard = if s == own { 1.0 - blend } else { 0.0 };
                maps[s][i] = (hard + blend * counts[s] as f64 / total as f64) as f32;
            }
        }
        for &s in &seen {
            counts[s] = 0;
        }
    }
    ProbMapStack::new(g, maps).expect("maps sized from geometry")
}

/// Draws `noise.n_samples` perturbed segmentations of `gt`.
///
/// Each sample starts from `gt` (after any shared flip passes), gets a random
/// erosion or dilation of every structure, then
/// boundary voxels swap to a random differing 6-neighbour's label with the
/// larger flip probability of the two labels. With `soft_probabilities`,
/// samples also carry probability maps.
pub fn sample_mc(gt: &LabelVolume, registry: &StructureRegistry, noise: &NoiseSpec) -> Result<McSampleSet> {
    noise.validate()?;
    gt.validate_against(registry)?;
    let flip: Vec<f64> = registry.entries().iter().map(|s| noise.flip_prob(s.id, registry)).collect();
    let mut base = gt.clone();
    for pass in 0..noise.shared_flip_passes as usize {
        base = flip_boundaries(&base, registry, noise, usize::MAX - pass);
    }
    let samples: Vec<McSample> = (0..noise.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut labels = base.clone();
            jitter(&mut labels, registry, noise, i);
            let labels = flip_boundaries(&labels, registry, noise, i);
            if noise.soft_probabilities {
                let probs = soft_probabilities(&labels, registry, &flip);
                McSample::with_both(labels, probs)
            } else {
                McSample::from_labels(labels)
            }
        })
        .collect();
    Ok(McSampleSet::new(registry.clone(), samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dice_vs_gt;
    use crate::synth::phantom::{make_phantom, PhantomSpec};

    fn phantom() -> (LabelVolume, StructureRegistry) {
        let g = VoxelGeometry::isotropic([24, 24, 24]).unwrap();
        let spec = PhantomSpec::random(g, 3, 3.0, 5.0, 5).unwrap();
        (make_phantom(&spec).unwrap(), spec.registry().unwrap())
    }

    #[test]
    fn zero_noise_reproduces_ground_truth() {
        let (gt, r) = phantom();
        let set = sample_mc(&gt, &r, &NoiseSpec::uniform(0.0, 0, 4, 9)).unwrap();
        assert!(set.validate().is_empty());
        for s in set.samples() {
            assert_eq!(s.labels().unwrap(), &gt);
            assert!(s.probs().unwrap().maps().iter().flatten().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (gt, r) = phantom();
        let noise = NoiseSpec::uniform(0.2, 1, 3, 77);
        let a = sample_mc(&gt, &r, &noise).unwrap();
        let b = sample_mc(&gt, &r, &noise).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = sample_mc(&gt, &r, &NoiseSpec { seed: 78, ..noise }).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn higher_flip_probability_lowers_accuracy() {
        let (gt, r) = phantom();
        let mean_dice = |p: f64| {
            let mut total = 0.0;
            for seed in 0..20 {
                let set = sample_mc(&gt, &r, &NoiseSpec::uniform(p, 0, 2, seed)).unwrap();
                total += dice_vs_gt(set.samples()[0].labels().unwrap(), &gt, 1).unwrap();
            }
            total / 20.0
        };
        assert!(mean_dice(0.4) < mean_dice(0.05));
    }

    #[test]
    fn rejects_bad_noise() {
        let (gt, r) = phantom();
        assert!(sample_mc(&gt, &r, &NoiseSpec::uniform(0.1, 0, 1, 0)).is_err());
        assert!(sample_mc(&gt, &r, &NoiseSpec::uniform(1.0, 0, 3, 0)).is_err());
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(1, 0, 1, STREAM_FLIP).random();
        let b: u64 = substream(1, 1, 1, STREAM_FLIP).random();
        let c: u64 = substream(1, 0, 2, STREAM_FLIP).random();
        assert!(a != b && a != c && b != c);
    }
}
