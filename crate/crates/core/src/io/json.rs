//! JSON files: structure registry, metric reports, configs and sample manifests.
//!
//! Registry:
//! ```json
//! {"background": 0, "structures": [{"id": 0, "name": "background"}, {"id": 17, "name": "hippocampus"}]}
//! ```
//! The background entry may be omitted from `structures`; it is then added
//! with the name `"background"`.
//!
//! Manifest (paths relative to the manifest's directory):
//! ```json
//! {"samples": [{"labels": "s0.nii", "probs": ["s0_p0.nii", "s0_p1.nii"]}]}
//! ```
//! `probs` lists one map per registry entry, in registry order.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::nifti::{read_label_volume, read_nifti};
use super::staging::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::{StructureRecord, StructureReport, UncertaintySummary};
use crate::volume::{LabelId, LabelVolume, McSample, McSampleSet, ProbMapStack, Structure, StructureRegistry};

pub const REPORT_SCHEMA_VERSION: &str = "1";

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryFile {
    pub background: LabelId,
    pub structures: Vec<Structure>,
}

impl RegistryFile {
    pub fn into_registry(self) -> Result<StructureRegistry> {
        let mut entries = self.structures;
        if !entries.iter().any(|s| s.id == self.background) {
            entries.insert(
                0,
                Structure {
                    id: self.background,
                    name: "background".into(),
                },
            );
        }
        StructureRegistry::new(entries, self.background)
    }
}

impl From<&StructureRegistry> for RegistryFile {
    fn from(r: &StructureRegistry) -> Self {
        Self {
            background: r.background(),
            structures: r.entries().to_vec(),
        }
    }
}

pub fn read_registry(path: impl AsRef<Path>) -> Result<StructureRegistry> {
    let path = path.as_ref();
    read_json::<RegistryFile>(path)?
        .into_registry()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn write_registry(registry: &StructureRegistry, path: impl AsRef<Path>) -> Result<()> {
    write_json(&RegistryFile::from(registry), path)
}

/// On-disk metric report of one scan. Unknown fields are ignored on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportFile {
    pub schema_version: String,
    pub scan_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub n_samples: usize,
    pub entropy_normalized: bool,
    pub uncertainty: UncertaintySummary,
    pub structures: Vec<StructureRecord>,
}

impl MetricReportFile {
    pub fn new(report: StructureReport, scan_id: impl Into<String>, dataset: Option<String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            scan_id: scan_id.into(),
            dataset,
            n_samples: report.n_samples,
            entropy_normalized: report.entropy_normalized,
            uncertainty: report.uncertainty,
            structures: report.structures,
        }
    }

    pub fn report(&self) -> StructureReport {
        StructureReport {
            n_samples: self.n_samples,
            entropy_normalized: self.entropy_normalized,
            uncertainty: self.uncertainty,
            structures: self.structures.clone(),
        }
    }
}

pub fn write_report(report: &MetricReportFile, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricReportFile> {
    let path = path.as_ref();
    let file: MetricReportFile = read_json(path)?;
    if file.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported report schema_version {:?}",
            path.display(),
            file.schema_version
        )));
    }
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub samples: Vec<ManifestEntry>,
}

fn check_geometry(first: &mut Option<(crate::volume::VoxelGeometry, PathBuf)>, g: &crate::volume::VoxelGeometry, path: &Path) -> Result<()> {
    match first {
        None => {
            *first = Some((*g, path.to_path_buf()));
            Ok(())
        }
        Some((g0, p0)) if g0 != g => Err(Error::GeometryMismatch {
            context: format!("{} vs {}", path.display(), p0.display()),
            expected: g0.to_string(),
            found: g.to_string(),
        }),
        Some(_) => Ok(()),
    }
}

/// Reads hard-label samples, checking that all files share one grid.
pub fn load_label_samples(paths: &[PathBuf], registry: &StructureRegistry) -> Result<McSampleSet> {
    let mut first = None;
    let mut samples = Vec::with_capacity(paths.len());
    for p in paths {
        let v = read_label_volume(p)?;
        check_geometry(&mut first, v.geometry(), p)?;
        if let Some((_, l)) = v.first_unknown_label(registry) {
            return Err(Error::InvalidInput(format!("{}: label {l} is not in the registry", p.display())));
        }
        samples.push(McSample::from_labels(v));
    }
    Ok(McSampleSet::new(registry.clone(), samples))
}

/// Reads the samples listed in a manifest file.
pub fn load_manifest(path: impl AsRef<Path>, registry: &StructureRegistry) -> Result<McSampleSet> {
    let path = path.as_ref();
    let manifest: SampleManifest = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut first = None;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for (i, e) in manifest.samples.iter().enumerate() {
        let labels: Option<LabelVolume> = match &e.labels {
            Some(p) => {
                let p = base.join(p);
                let v = read_label_volume(&p)?;
                check_geometry(&mut first, v.geometry(), &p)?;
                Some(v)
            }
            None => None,
        };
        let probs = match &e.probs {
            Some(paths) => {
                if paths.len() != registry.len() {
                    return Err(Error::InvalidInput(format!(
                        "{}: sample {i} lists {} probability maps, registry has {} entries",
                        path.display(),
                        paths.len(),
                        registry.len()
                    )));
                }
                let mut maps = Vec::with_capacity(paths.len());
                let mut g = None;
                for p in paths {
                    let p = base.join(p);
                    let v = read_nifti(&p)?;
                    let geom = v.geometry()?;
                    check_geometry(&mut first, &geom, &p)?;
                    g = Some(geom);
                    maps.push(v.to_f32());
                }
                Some(ProbMapStack::new(g.expect("registry has ≥ 2 entries"), maps)?)
            }
            None => None,
        };
        samples.push(match (labels, probs) {
            (Some(l), Some(p)) => McSample::with_both(l, p),
            (Some(l), None) => McSample::from_labels(l),
            (None, Some(p)) => McSample::from_probs(p),
            (None, None) => {
                return Err(Error::InvalidInput(format!(
                    "{}: sample {i} has neither labels nor probs",
                    path.display()
                )))
            }
        });
    }
    Ok(McSampleSet::new(registry.clone(), samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_background_is_added() {
        let f: RegistryFile =
            serde_json::from_str(r#"{"background": 0, "structures": [{"id": 5, "name": "a"}]}"#).unwrap();
        let r = f.into_registry().unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.name_of(0), Some("background"));
        let back = RegistryFile::from(&r).into_registry().unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn report_round_trip_and_unknown_fields() {
        let file = MetricReportFile {
            schema_version: "1".into(),
            scan_id: "scan".into(),
            dataset: Some("d".into()),
            n_samples: 15,
            entropy_normalized: false,
            uncertainty: UncertaintySummary {
                min: 0.0,
                mean: 0.1 + 0.2,
                max: 1.0 / 3.0,
            },
            structures: vec![StructureRecord {
                label: 3,
                name: "x".into(),
                mean_volume: 1234.5678901234567,
                std_volume: 1e-300,
                cv: None,
                mc_dice: Some(0.987654321),
                mean_unc: Some(std::f64::consts::PI),
                gt_dice: None,
                consensus_volume: 7.0,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_report(&file, &p).unwrap();
        assert_eq!(read_report(&p).unwrap(), file);
        let mut v: serde_json::Value = serde_json::to_value(&file).unwrap();
        v["extra"] = serde_json::json!(1);
        std::fs::write(&p, v.to_string()).unwrap();
        assert_eq!(read_report(&p).unwrap(), file);
    }
}
