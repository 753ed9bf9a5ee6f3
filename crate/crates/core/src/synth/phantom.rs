use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelId, LabelVolume, Structure, StructureRegistry, VoxelGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Ellipsoid with semi-axes `size`.
    Sphere,
    /// Axis-aligned box with half-extents `size`.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomStructure {
    pub id: LabelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub shape: Shape,
    /// Centre in voxel coordinates (voxel centres sit on integers).
    pub center: [f64; 3],
    /// Semi-axes or half-extents in voxels.
    pub size: [f64; 3],
}

impl PhantomStructure {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("structure_{}", self.id))
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        let d = [0, 1, 2].map(|a| (p[a] - self.center[a]) / self.size[a]);
        match self.shape {
            Shape::Sphere => d.iter().map(|x| x * x).sum::<f64>() <= 1.0,
            Shape::Box => d.iter().all(|x| x.abs() <= 1.0),
        }
    }

    /// Inclusive voxel-index bounding box.
    fn bounds(&self) -> [(usize, usize); 3] {
        [0, 1, 2].map(|a| {
            let lo = (self.center[a] - self.size[a]).ceil().max(0.0) as usize;
            let hi = (self.center[a] + self.size[a]).floor().max(0.0) as usize;
            (lo, hi)
        })
    }
}

/// Synthetic ground truth: shapes painted in list order; earlier shapes win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: VoxelGeometry,
    #[serde(default)]
    pub background: LabelId,
    pub structures: Vec<PhantomStructure>,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = self.geometry.dims();
        for s in &self.structures {
            if s.id == self.background {
                return Err(Error::InvalidInput(format!("structure id {} equals the background id", s.id)));
            }
            if s.size.iter().any(|&r| !(r.is_finite() && r > 0.0)) || s.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("structure {}: size must be positive and finite", s.id)));
            }
            for a in 0..3 {
                if s.center[a] - s.size[a] < -0.5 || s.center[a] + s.size[a] > dims[a] as f64 - 0.5 {
                    return Err(Error::InvalidInput(format!(
                        "structure {} extends outside the volume along axis {a}",
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Background plus every structure, in list order.
    pub fn registry(&self) -> Result<StructureRegistry> {
        let mut entries = vec![Structure {
            id: self.background,
            name: "background".into(),
        }];
        entries.extend(self.structures.iter().map(|s| Structure {
            id: s.id,
            name: s.display_name(),
        }));
        StructureRegistry::new(entries, self.background)
    }

    /// A layout of `n` non-touching spheres and boxes with sizes between
    /// `min_size` and `max_size` voxels, drawn from `seed`.
    pub fn random(geometry: VoxelGeometry, n: usize, min_size: f64, max_size: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = geometry.dims();
        let mut structures: Vec<PhantomStructure> = Vec::with_capacity(n);
        let mut attempts = 0;
        while structures.len() < n {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidInput(format!(
                    "could not place {n} structures of size ≤ {max_size} in {geometry}"
                )));
            }
            let shape = if structures.len().is_multiple_of(2) { Shape::Sphere } else { Shape::Box };
            let size = [0; 3].map(|_| rng.random_range(min_size..=max_size));
            let mut center = [0.0; 3];
            for a in 0..3 {
                let lo = size[a] - 0.5;
                let hi = dims[a] as f64 - 0.5 - size[a];
                if lo > hi {
                    return Err(Error::InvalidInput(format!("size {max_size} does not fit in {geometry}")));
                }
                center[a] = rng.random_range(lo..=hi);
            }
            let candidate = PhantomStructure {
                id: structures.len() as LabelId + 1,
                name: None,
                shape,
                center,
                size,
            };
            // Keep at least one background voxel between bounding boxes.
            let clear = structures.iter().all(|s| {
                (0..3).any(|a| (s.center[a] - candidate.center[a]).abs() > s.size[a] + candidate.size[a] + 1.5)
            });
            if clear {
                structures.push(candidate);
            }
        }
        Ok(Self {
            geometry,
            background: 0,
            structures,
            seed,
        })
    }
}

/// Rasterizes the phantom: each voxel takes the first shape containing its centre.
pub fn make_phantom(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let g = spec.geometry;
    let mut v = LabelVolume::filled(g, spec.background);
    let mut painted = vec![false; g.n_voxels()];
    for s in &spec.structures {
        let [(x0, x1), (y0, y1), (z0, z1)] = s.bounds();
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = g.index(x, y, z);
                    if !painted[i] && s.contains([x as f64, y as f64, z as f64]) {
                        painted[i] = true;
                        v.data_mut()[i] = s.id;
                    }
                }
            }
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(id: LabelId, center: [f64; 3], r: f64) -> PhantomStructure {
        PhantomStructure {
            id,
            name: None,
            shape: Shape::Sphere,
            center,
            size: [r; 3],
        }
    }

    fn spec(structures: Vec<PhantomStructure>) -> PhantomSpec {
        PhantomSpec {
            geometry: VoxelGeometry::isotropic([32, 32, 32]).unwrap(),
            background: 0,
            structures,
            seed: 1,
        }
    }

    #[test]
    fn sphere_volume_close_to_analytic() {
        let s = spec(vec![sphere(1, [15.5, 15.5, 15.5], 5.0)]);
        let v = make_phantom(&s).unwrap();
        let r = s.registry().unwrap();
        let vol = v.structure_volume(&r, 1).unwrap();
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 125.0;
        // independent count: lattice points inside the sphere
        let mut count = 0;
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let d2 = [x, y, z].iter().map(|&c| (c as f64 - 15.5).powi(2)).sum::<f64>();
                    count += (d2 <= 25.0) as usize;
                }
            }
        }
        assert_eq!(vol, count as f64);
        assert!((vol - analytic).abs() / analytic < 0.15, "{vol} vs {analytic}");
    }

    #[test]
    fn empty_list_gives_background() {
        let v = make_phantom(&spec(vec![])).unwrap();
        assert!(v.data().iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic_and_first_wins() {
        let s = spec(vec![sphere(1, [10.0, 10.0, 10.0], 4.0), sphere(2, [13.0, 10.0, 10.0], 4.0)]);
        let a = make_phantom(&s).unwrap();
        assert_eq!(a, make_phantom(&s).unwrap());
        assert_eq!(a.get(12, 10, 10), 1);
        assert_eq!(a.get(15, 10, 10), 2);
    }

    #[test]
    fn rejects_out_of_bounds() {
        assert!(make_phantom(&spec(vec![sphere(1, [2.0, 16.0, 16.0], 5.0)])).is_err());
        assert!(make_phantom(&spec(vec![sphere(0, [16.0, 16.0, 16.0], 5.0)])).is_err());
    }

    #[test]
    fn random_layouts_are_disjoint() {
        let g = VoxelGeometry::isotropic([40, 40, 40]).unwrap();
        let s = PhantomSpec::random(g, 8, 3.0, 6.0, 42).unwrap();
        assert_eq!(s, PhantomSpec::random(g, 8, 3.0, 6.0, 42).unwrap());
        let v = make_phantom(&s).unwrap();
        let r = s.registry().unwrap();
        for st in r.structures() {
            assert!(v.structure_volume(&r, st.id).unwrap() > 0.0);
        }
    }
}
