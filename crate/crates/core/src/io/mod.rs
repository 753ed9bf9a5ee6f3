//! Serialization: NIfTI-1 volumes, JSON registry/report/config files, cohort
//! CSV and heat-map volumes. Every writer is atomic.

pub mod csv;
pub mod heatmap;
pub mod json;
pub mod nifti;
pub mod staging;

pub use self::csv::{cohort_csv_string, parse_cohort_csv, read_cohort_csv, write_cohort_csv};
pub use heatmap::{heatmap_values, write_heatmap_volume, HeatmapMetric};
pub use json::{
    load_label_samples, load_manifest, read_json, read_registry, read_report, write_json, write_registry,
    write_report, ManifestEntry, MetricReportFile, RegistryFile, SampleManifest, REPORT_SCHEMA_VERSION,
};
pub use nifti::{
    encode_nifti, nifti_file_bytes, parse_nifti, read_label_volume, read_nifti, write_label_volume, write_nifti, Datatype,
    NiftiError, NiftiHeader, NiftiVolume, Orientation, VoxelData,
};
pub use staging::{write_atomic, Staging};
