//! Write and re-read label and float volumes as NIfTI-1, plain and gzipped.

use segqc::io::{read_label_volume, read_nifti, write_label_volume, write_nifti, NiftiVolume};
use segqc::{LabelVolume, VoxelGeometry};

fn main() -> segqc::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| segqc::Error::InvalidInput(e.to_string()))?;
    let g = VoxelGeometry::new([8, 8, 4], [1.0, 1.0, 2.5])?;
    let labels = LabelVolume::new(g, (0..g.n_voxels()).map(|i| (i % 5) as u16 * 100).collect())?;
    for name in ["labels.nii", "labels.nii.gz"] {
        let p = dir.path().join(name);
        write_label_volume(&labels, &p)?;
        let back = read_label_volume(&p)?;
        println!("{name}: {} bytes, round trip equal: {}", std::fs::metadata(&p).map_or(0, |m| m.len()), back == labels);
    }
    let p = dir.path().join("map.nii");
    let values: Vec<f32> = (0..g.n_voxels()).map(|i| i as f32 / 10.0).collect();
    write_nifti(&NiftiVolume::from_f32(g, values.clone())?, &p)?;
    let v = read_nifti(&p)?;
    println!("float map: {:?} geometry {}, equal: {}", v.header.datatype, v.geometry()?, v.to_f32() == values);
    Ok(())
}
