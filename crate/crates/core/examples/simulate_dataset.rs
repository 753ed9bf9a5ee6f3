//! Simulate a scan with the bundled graded-noise configs and run `segqc
//! metrics` on it, as the command line would.

use std::path::Path;

use segqc::io::read_report;

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("sim");
    let p = |p: &Path| p.to_string_lossy().into_owned();
    let code = segqc::cli::run([
        "segqc".into(),
        "simulate".into(),
        "--phantom".into(),
        p(&data.join("phantom.json")),
        "--noise".into(),
        p(&data.join("noise.json")),
        "--out".into(),
        p(&out),
    ]);
    assert_eq!(code, 0);
    let report = dir.path().join("scan.json");
    let code = segqc::cli::run([
        "segqc".into(),
        "metrics".into(),
        "--manifest".into(),
        p(&out.join("manifest.json")),
        "--registry".into(),
        p(&out.join("registry.json")),
        "--gt".into(),
        p(&out.join("gt.nii")),
        "--out".into(),
        p(&report),
    ]);
    assert_eq!(code, 0);
    let r = read_report(&report).expect("report");
    println!("scan {:?}: {} structures, {} samples", r.scan_id, r.structures.len(), r.n_samples);
}
