use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segqc::io::{self, write_cohort_csv};
use segqc::metrics::consensus_segmentation;
use segqc::stats::{CohortRow, CohortTable};
use segqc::synth::{make_cohort, CohortSpec, NoiseSpec, PhantomSpec};
use segqc::VoxelGeometry;

fn segqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segqc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_configs(dir: &Path, flip: f64, seed: u64) -> (PathBuf, PathBuf) {
    let g = VoxelGeometry::isotropic([24, 24, 24]).unwrap();
    let phantom = PhantomSpec::random(g, 4, 3.0, 5.0, seed).unwrap();
    let noise = NoiseSpec {
        shared_flip_passes: 1,
        ..NoiseSpec::uniform(flip, 0, 5, seed)
    };
    let (p, n) = (dir.join(format!("phantom{seed}.json")), dir.join(format!("noise{seed}_{flip}.json")));
    io::write_json(&phantom, &p).unwrap();
    io::write_json(&noise, &n).unwrap();
    (p, n)
}

fn simulate(dir: &Path, flip: f64, seed: u64, name: &str) -> PathBuf {
    let (p, n) = write_configs(dir, flip, seed);
    let out = dir.join(name);
    let o = segqc(&["simulate", "--phantom", s(&p), "--noise", s(&n), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn dir_contents(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn simulate_zero_noise_reproduces_gt_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), 0.0, 3, "a");
    let gt = std::fs::read(a.join("gt.nii")).unwrap();
    for i in 0..5 {
        assert_eq!(std::fs::read(a.join(format!("samples/sample_{i:03}.nii"))).unwrap(), gt);
    }
    let b = simulate(dir.path(), 0.0, 3, "b");
    assert_eq!(dir_contents(&a), dir_contents(&b));

    // non-empty output directory is refused
    let (p, n) = write_configs(dir.path(), 0.0, 3);
    let o = segqc(&["simulate", "--phantom", s(&p), "--noise", s(&n), "--out", s(&a)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn metrics_report_and_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), 0.2, 4, "sim");
    let report = dir.path().join("r.json");
    let unc = dir.path().join("u.nii");
    let heat = dir.path().join("h.nii.gz");
    let o = segqc(&[
        "metrics",
        "--manifest",
        s(&sim.join("manifest.json")),
        "--registry",
        s(&sim.join("registry.json")),
        "--gt",
        s(&sim.join("gt.nii")),
        "--out",
        s(&report),
        "--uncertainty-out",
        s(&unc),
        "--heatmap-out",
        s(&heat),
        "--heatmap-metric",
        "mc_dice",
        "--dataset",
        "synthetic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = io::read_report(&report).unwrap();
    assert_eq!((r.scan_id.as_str(), r.n_samples, r.structures.len()), ("r", 5, 4));
    for rec in &r.structures {
        assert!(rec.cv.is_some() && rec.mc_dice.is_some() && rec.mean_unc.is_some() && rec.gt_dice.is_some());
        assert!(rec.mean_unc.unwrap() > 0.0);
    }
    assert!(r.uncertainty.max > 0.0);
    let h = io::read_nifti(&heat).unwrap().to_f32();
    let expected: Vec<f32> = r.structures.iter().map(|s| s.mc_dice.unwrap() as f32).collect();
    assert!(h.iter().all(|v| *v == 0.0 || expected.contains(v)));
    assert_eq!(io::read_nifti(&unc).unwrap().to_f32().len(), 24 * 24 * 24);

    // label files only, from the directory: U is identically zero
    let o = segqc(&[
        "metrics",
        s(&sim.join("samples")),
        "--registry",
        s(&sim.join("registry.json")),
        "--out",
        s(&dir.path().join("labels.json")),
        "--normalize-entropy",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = io::read_report(dir.path().join("labels.json")).unwrap();
    assert!(r.entropy_normalized && r.structures.iter().all(|s| s.mean_unc == Some(0.0) && s.gt_dice.is_none()));
}

#[test]
fn metrics_failures() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), 0.1, 5, "sim");
    let reg = sim.join("registry.json");
    let out = dir.path().join("r.json");

    let o = segqc(&["metrics", s(&sim.join("samples/sample_000.nii")), "--registry", s(&reg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("need N ≥ 2"), "{}", stderr(&o));

    let other = simulate(dir.path(), 0.1, 6, "other");
    // same labels, different grid
    let g = VoxelGeometry::isotropic([10, 10, 10]).unwrap();
    let small = dir.path().join("small.nii");
    io::write_label_volume(&segqc::LabelVolume::filled(g, 0), &small).unwrap();
    let first = sim.join("samples/sample_000.nii");
    let o = segqc(&["metrics", s(&first), s(&small), "--registry", s(&reg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("small.nii") && stderr(&o).contains("sample_000.nii"), "{}", stderr(&o));
    drop(other);

    // usage error before any file is touched
    let o = segqc(&["metrics", s(&first), s(&first), "--registry", s(&reg), "--out", s(&out), "--heatmap-out", "h.nii"]);
    assert_eq!(o.status.code(), Some(1));

    // I/O error: missing registry
    let o = segqc(&["metrics", s(&first), s(&first), "--registry", "/nonexistent/r.json", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    // a failing second output leaves no report behind
    let o = segqc(&[
        "metrics",
        s(&first),
        s(&sim.join("samples/sample_001.nii")),
        "--registry",
        s(&reg),
        "--out",
        s(&out),
        "--uncertainty-out",
        s(&dir.path().join("missing/u.nii")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn correlate_reports_sign_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (k, flip) in [0.03, 0.1, 0.18, 0.26, 0.34].into_iter().enumerate() {
        let sim = simulate(dir.path(), flip, 20 + k as u64, &format!("scan{k}"));
        let rep = dir.path().join(format!("reports/scan{k}.json"));
        std::fs::create_dir_all(rep.parent().unwrap()).unwrap();
        let o = segqc(&[
            "metrics",
            "--manifest",
            s(&sim.join("manifest.json")),
            "--registry",
            s(&sim.join("registry.json")),
            "--gt",
            s(&sim.join("gt.nii")),
            "--out",
            s(&rep),
            "--dataset",
            "synth",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(rep);
    }
    let csv = dir.path().join("corr.csv");
    let o = segqc(&["correlate", s(&dir.path().join("reports")), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    let row: Vec<String> = rdr.records().next().unwrap().unwrap().iter().map(String::from).collect();
    assert_eq!(row[0], "synth");
    let r = |i: usize| row[i].parse::<f64>().unwrap();
    assert!(r(4) > 0.0 && r(5) < 0.0 && r(6) < 0.0, "{row:?}");

    let o = segqc(&["correlate", s(&reports[0]), s(&reports[1]), "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn group_table_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (table, _) = make_cohort(&CohortSpec {
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let cohort = dir.path().join("cohort.csv");
    write_cohort_csv(&table, &cohort).unwrap();
    let out = dir.path().join("group.csv");
    let o = segqc(&[
        "group",
        s(&cohort),
        "--structure",
        "hippocampus",
        "--weight-mode",
        "none,inv_cv,inv_one_minus_dice,huber",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv::Reader::from_path(&out).unwrap().records().count();
    assert_eq!(rows, 4);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("inv_one_minus_dice") && stdout.contains("standardized"));

    // no cv column but inv_cv requested
    let no_cv = CohortTable::new(
        table.rows().iter().map(|r| CohortRow { cv: None, ..r.clone() }).collect(),
        false,
        true,
    )
    .unwrap();
    write_cohort_csv(&no_cv, &cohort).unwrap();
    let o = segqc(&["group", s(&cohort), "--weight-mode", "inv_cv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cv"));

    // constant diagnosis
    let constant = CohortTable::new(
        table.rows().iter().map(|r| CohortRow { dx: 1, ..r.clone() }).collect(),
        true,
        true,
    )
    .unwrap();
    write_cohort_csv(&constant, &cohort).unwrap();
    let o = segqc(&["group", s(&cohort), "--no-standardize"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("collinear"), "{}", stderr(&o));
}

#[test]
fn consensus_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), 0.3, 9, "sim");
    let out = dir.path().join("consensus.nii");
    let o = segqc(&[
        "consensus",
        s(&sim.join("samples")),
        "--registry",
        s(&sim.join("registry.json")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let registry = io::read_registry(sim.join("registry.json")).unwrap();
    let files: Vec<PathBuf> = (0..5).map(|i| sim.join(format!("samples/sample_{i:03}.nii"))).collect();
    let set = io::load_label_samples(&files, &registry).unwrap();
    assert_eq!(io::read_label_volume(&out).unwrap(), consensus_segmentation(&set).unwrap());
}

#[test]
fn help_and_bad_threads() {
    assert_eq!(segqc(&["--help"]).status.code(), Some(0));
    assert_eq!(segqc(&["frobnicate"]).status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_segqc"))
        .env("SEGQC_THREADS", "zero")
        .args(["group", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
