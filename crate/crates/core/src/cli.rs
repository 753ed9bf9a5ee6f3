//! The `segqc` command line.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
//! `SEGQC_THREADS` caps the worker threads.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::{self, HeatmapMetric, MetricReportFile, NiftiVolume, Staging};
use crate::metrics::{analyze_scan, consensus_segmentation, EntropyOptions, ReportOptions, StructureReport};
use crate::stats::{correlate_uncertainty_accuracy, group_analysis, AnalysisMode, DesignOptions, GroupOptions};
use crate::synth::{make_phantom, sample_mc, NoiseSpec, PhantomSpec};
use crate::volume::{McSampleSet, StructureRegistry};

#[derive(Debug, Parser)]
#[command(name = "segqc", version, about = "Segmentation quality control from Monte Carlo samples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Voxel-wise and structure-wise uncertainty of one scan.
    Metrics(MetricsArgs),
    /// Correlation of each uncertainty type with Dice, per dataset.
    Correlate(CorrelateArgs),
    /// Diagnosis effect on a structure volume under each weighting mode.
    Group(GroupArgs),
    /// Synthetic ground truth and Monte Carlo samples.
    Simulate(SimulateArgs),
    /// Consensus segmentation of a sample set.
    Consensus(ConsensusArgs),
}

#[derive(Debug, Args)]
pub struct SampleInput {
    /// Sample files, or one directory whose .nii/.nii.gz files are used in name order.
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    pub samples: Vec<PathBuf>,
    /// JSON manifest listing label and/or probability files per sample.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Structure registry JSON.
    #[arg(long)]
    pub registry: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub input: SampleInput,
    /// Reference segmentation for gt_dice.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel-wise uncertainty volume (float32 NIfTI).
    #[arg(long)]
    pub uncertainty_out: Option<PathBuf>,
    /// Structure-wise heat map (float32 NIfTI).
    #[arg(long, requires = "heatmap_metric")]
    pub heatmap_out: Option<PathBuf>,
    /// Metric painted into the heat map: mc_dice, cv or mean_unc.
    #[arg(long, requires = "heatmap_out", value_parser = parse_heatmap_metric)]
    pub heatmap_metric: Option<HeatmapMetric>,
    /// Divide the voxel uncertainty by the number of samples.
    #[arg(long)]
    pub normalize_entropy: bool,
    /// Scan identifier stored in the report (default: report file stem).
    #[arg(long)]
    pub scan_id: Option<String>,
    /// Dataset tag stored in the report; `correlate` groups by it.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Report JSON files, or a directory of them.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Cohort CSV.
    pub cohort: PathBuf,
    /// Structure name used in the output.
    #[arg(long, default_value = "structure")]
    pub structure: String,
    /// Comma-separated modes: none, inv_cv, inv_one_minus_dice, huber
    /// (default: none, every weight mode the CSV has columns for, huber).
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub weight_mode: Vec<AnalysisMode>,
    /// z-score volume and age before fitting (default).
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,
    #[arg(long, overrides_with = "standardize")]
    pub no_standardize: bool,
    /// Reference site level (default: first in sort order).
    #[arg(long)]
    pub site_reference: Option<String>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Phantom JSON config.
    #[arg(long)]
    pub phantom: PathBuf,
    /// Noise JSON config.
    #[arg(long)]
    pub noise: PathBuf,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the noise config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[command(flatten)]
    pub input: SampleInput,
    /// Consensus label volume (NIfTI).
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_heatmap_metric(s: &str) -> std::result::Result<HeatmapMetric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<AnalysisMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    match execute(&cli.command) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("SEGQC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("SEGQC_THREADS={value:?} is not a positive integer")))?;
    // A second call in the same process keeps the first pool; that is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one subcommand; returns the human-readable stdout text.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Metrics(a) => cmd_metrics(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Group(a) => cmd_group(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Consensus(a) => cmd_consensus(a),
    }
}

fn has_nifti_ext(p: &Path) -> bool {
    let name = p.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

fn list_dir(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && keep(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn expand_inputs(paths: &[PathBuf], keep: impl Fn(&Path) -> bool + Copy) -> Result<Vec<PathBuf>> {
    if let [single] = paths {
        if single.is_dir() {
            return list_dir(single, keep);
        }
    }
    Ok(paths.to_vec())
}

fn load_samples(input: &SampleInput) -> Result<(StructureRegistry, McSampleSet)> {
    let registry = io::read_registry(&input.registry)?;
    let set = match &input.manifest {
        Some(m) => io::load_manifest(m, &registry)?,
        None => {
            let files = expand_inputs(&input.samples, has_nifti_ext)?;
            if files.len() < 2 {
                return Err(Error::TooFewSamples(files.len()));
            }
            io::load_label_samples(&files, &registry)?
        }
    };
    set.ensure_valid()?;
    Ok((registry, set))
}

fn nifti_stage(staging: &mut Staging, v: &NiftiVolume, path: &Path) -> Result<()> {
    staging.add(path, &io::nifti_file_bytes(v, path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn report_table(report: &StructureReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6}  {:<24} {:>12} {:>8} {:>8} {:>9} {:>8}",
        "label", "name", "volume_mm3", "cv", "mc_dice", "mean_unc", "gt_dice"
    );
    for r in &report.structures {
        let _ = writeln!(
            s,
            "{:>6}  {:<24} {:>12.1} {:>8} {:>8} {:>9} {:>8}",
            r.label,
            r.name,
            r.mean_volume,
            fmt_opt(r.cv),
            fmt_opt(r.mc_dice),
            fmt_opt(r.mean_unc),
            fmt_opt(r.gt_dice)
        );
    }
    let u = report.uncertainty;
    let _ = writeln!(
        s,
        "samples: {}  voxel uncertainty min/mean/max: {:.4} / {:.4} / {:.4}",
        report.n_samples, u.min, u.mean, u.max
    );
    s
}

pub fn cmd_metrics(a: &MetricsArgs) -> Result<String> {
    let (_, set) = load_samples(&a.input)?;
    let gt = match &a.gt {
        Some(p) => {
            let v = io::read_label_volume(p)?;
            let g = set.geometry().expect("validated set");
            if v.geometry() != g {
                return Err(Error::GeometryMismatch {
                    context: format!("{} vs samples", p.display()),
                    expected: g.to_string(),
                    found: v.geometry().to_string(),
                });
            }
            Some(v)
        }
        None => None,
    };
    let opts = ReportOptions {
        entropy: EntropyOptions {
            normalize: a.normalize_entropy,
        },
    };
    let analysis = analyze_scan(&set, gt.as_ref(), opts)?;
    let scan_id = a.scan_id.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        stem.strip_suffix(".report").unwrap_or(&stem).to_string()
    });
    let table = report_table(&analysis.report);
    let file = MetricReportFile::new(analysis.report, scan_id, a.dataset.clone());

    let mut staging = Staging::new();
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    staging.add(&a.out, json.as_bytes())?;
    let g = *analysis.consensus.geometry();
    if let Some(p) = &a.uncertainty_out {
        let values = analysis.uncertainty.values().iter().map(|&u| u as f32).collect();
        nifti_stage(&mut staging, &NiftiVolume::from_f32(g, values)?, p)?;
    }
    if let (Some(p), Some(metric)) = (&a.heatmap_out, a.heatmap_metric) {
        let values = io::heatmap_values(&analysis.consensus, &file.report(), metric);
        nifti_stage(&mut staging, &NiftiVolume::from_f32(g, values)?, p)?;
    }
    staging.commit()?;
    Ok(table)
}

pub fn cmd_correlate(a: &CorrelateArgs) -> Result<String> {
    let files = expand_inputs(&a.reports, |p| p.extension().is_some_and(|e| e == "json"))?;
    let mut groups: BTreeMap<String, Vec<StructureReport>> = BTreeMap::new();
    for f in &files {
        let r = io::read_report(f)?;
        groups
            .entry(r.dataset.clone().unwrap_or_else(|| "default".into()))
            .or_default()
            .push(r.report());
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    let header = [
        "dataset", "n_reports", "n_pairs", "n_dropped", "r_mc_dice", "r_cv", "r_mean_unc", "mean_gt_dice", "mean_cv",
    ];
    csv.write_record(header).expect("in-memory write");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>8} {:>10} {:>8} {:>11}",
        "dataset", "reports", "pairs", "dropped", "r(mc_dice)", "r(cv)", "r(mean_unc)"
    );
    if groups.is_empty() {
        return Err(Error::InsufficientData { needed: 3, got: 0 });
    }
    for (dataset, reports) in &groups {
        if reports.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "dataset {dataset:?} has {} reports; need at least 3",
                reports.len()
            )));
        }
        let c = correlate_uncertainty_accuracy(reports)
            .map_err(|e| Error::InvalidInput(format!("dataset {dataset:?}: {e}")))?;
        csv.write_record([
            dataset.clone(),
            reports.len().to_string(),
            c.n_pairs.to_string(),
            c.n_dropped.to_string(),
            c.r_mc_dice.to_string(),
            c.r_cv.to_string(),
            c.r_mean_unc.to_string(),
            c.mean_gt_dice.to_string(),
            c.mean_cv.to_string(),
        ])
        .expect("in-memory write");
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8} {:>10.3} {:>8.3} {:>11.3}",
            dataset,
            reports.len(),
            c.n_pairs,
            c.n_dropped,
            c.r_mc_dice,
            c.r_cv,
            c.r_mean_unc
        );
    }
    io::write_atomic(&a.out, &csv.into_inner().expect("in-memory flush"))?;
    Ok(out)
}

pub fn cmd_group(a: &GroupArgs) -> Result<String> {
    let table = io::read_cohort_csv(&a.cohort)?;
    let modes = if a.weight_mode.is_empty() {
        let mut m = vec![AnalysisMode::None];
        if table.has_cv() {
            m.push(AnalysisMode::InvCv);
        }
        if table.has_mc_dice() {
            m.push(AnalysisMode::InvOneMinusDice);
        }
        m.push(AnalysisMode::Huber);
        m
    } else {
        a.weight_mode.clone()
    };
    for &m in &modes {
        let missing = match m {
            AnalysisMode::InvCv if !table.has_cv() => Some("cv"),
            AnalysisMode::InvOneMinusDice if !table.has_mc_dice() => Some("mc_dice"),
            _ => None,
        };
        if let Some(col) = missing {
            return Err(Error::InvalidInput(format!(
                "{}: mode {m} needs a {col} column",
                a.cohort.display()
            )));
        }
    }
    let opts = GroupOptions {
        standardize: !a.no_standardize,
        design: DesignOptions {
            site_reference: a.site_reference.clone(),
        },
        ..Default::default()
    };
    let g = group_analysis(&table, &a.structure, &modes, &opts)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "structure: {}  (volume and age {})",
        g.structure,
        if g.standardized { "standardized" } else { "raw" }
    );
    let _ = writeln!(
        out,
        "{:<20} {:>11} {:>10} {:>9} {:>10} {:>5} {:>5} {:>8}",
        "mode", "beta_d", "se", "t", "p_d", "df", "n", "dropped"
    );
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["structure", "mode", "beta_d", "se_d", "t_d", "p_d", "df", "n_used", "n_dropped"])
        .expect("in-memory write");
    for r in &g.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>11.5} {:>10.5} {:>9.3} {:>10.3e} {:>5} {:>5} {:>8}",
            r.mode.as_str(),
            r.beta_d,
            r.se_d,
            r.t_d,
            r.p_d,
            r.df,
            r.n_used,
            r.n_dropped
        );
        csv.write_record([
            g.structure.clone(),
            r.mode.to_string(),
            r.beta_d.to_string(),
            r.se_d.to_string(),
            r.t_d.to_string(),
            r.p_d.to_string(),
            r.df.to_string(),
            r.n_used.to_string(),
            r.n_dropped.to_string(),
        ])
        .expect("in-memory write");
    }
    for (r, fit) in g.rows.iter().zip(&g.fits) {
        for note in &fit.notes {
            let _ = writeln!(out, "note ({}): {note}", r.mode);
        }
    }
    if let Some(p) = &a.out {
        io::write_atomic(p, &csv.into_inner().expect("in-memory flush"))?;
    }
    Ok(out)
}

/// Names used by `simulate` inside its output directory.
pub mod layout {
    pub const GT: &str = "gt.nii";
    pub const REGISTRY: &str = "registry.json";
    pub const MANIFEST: &str = "manifest.json";
    pub const PHANTOM: &str = "phantom.json";
    pub const NOISE: &str = "noise.json";

    pub fn sample(i: usize) -> String {
        format!("samples/sample_{i:03}.nii")
    }

    pub fn prob(i: usize, label: u16) -> String {
        format!("probs/sample_{i:03}/label_{label:03}.nii")
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let phantom: PhantomSpec = io::read_json(&a.phantom)?;
    let mut noise: NoiseSpec = io::read_json(&a.noise)?;
    if let Some(seed) = a.seed {
        noise.seed = seed;
    }
    noise.validate()?;
    if a.out.exists() {
        let non_empty = std::fs::read_dir(&a.out).map_err(|e| Error::io(&a.out, e))?.next().is_some();
        if non_empty {
            return Err(Error::InvalidInput(format!(
                "{}: output directory is not empty",
                a.out.display()
            )));
        }
    }
    let registry = phantom.registry()?;
    let gt = make_phantom(&phantom)?;
    let set = sample_mc(&gt, &registry, &noise)?;

    let parent = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".segqc-simulate")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let root = tmp.path();
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&root.join("samples"))?;
    io::write_label_volume(&gt, root.join(layout::GT))?;
    io::write_registry(&registry, root.join(layout::REGISTRY))?;
    io::write_json(&phantom, root.join(layout::PHANTOM))?;
    io::write_json(&noise, root.join(layout::NOISE))?;
    let mut manifest = io::SampleManifest { samples: Vec::new() };
    for (i, s) in set.samples().iter().enumerate() {
        let labels = layout::sample(i);
        io::write_label_volume(s.labels().expect("sampler emits labels"), root.join(&labels))?;
        let probs = match s.probs() {
            Some(stack) => {
                mkdir(&root.join(format!("probs/sample_{i:03}")))?;
                let mut paths = Vec::with_capacity(registry.len());
                for (k, map) in stack.maps().iter().enumerate() {
                    let rel = layout::prob(i, registry.id_at(k));
                    let v = NiftiVolume::from_f32(*stack.geometry(), map.clone())?;
                    io::write_nifti(&v, root.join(&rel))?;
                    paths.push(PathBuf::from(rel));
                }
                Some(paths)
            }
            None => None,
        };
        manifest.samples.push(io::ManifestEntry {
            labels: Some(PathBuf::from(labels)),
            probs,
        });
    }
    io::write_json(&manifest, root.join(layout::MANIFEST))?;

    if a.out.exists() {
        std::fs::remove_dir(&a.out).map_err(|e| Error::io(&a.out, e))?;
    }
    let root = tmp.keep();
    std::fs::rename(&root, &a.out).map_err(|e| {
        let _ = std::fs::remove_dir_all(&root);
        Error::io(&a.out, e)
    })?;
    Ok(format!(
        "wrote {} samples of {} structures ({}) to {}\n",
        set.n(),
        registry.len() - 1,
        gt.geometry(),
        a.out.display()
    ))
}

pub fn cmd_consensus(a: &ConsensusArgs) -> Result<String> {
    let (registry, set) = load_samples(&a.input)?;
    let c = consensus_segmentation(&set)?;
    io::write_label_volume(&c, &a.out)?;
    let counts = c.label_counts(&registry);
    let mut out = String::new();
    let _ = writeln!(out, "{:>6}  {:<24} {:>10}", "label", "name", "voxels");
    for (k, s) in registry.entries().iter().enumerate() {
        if s.id != registry.background() {
            let _ = writeln!(out, "{:>6}  {:<24} {:>10}", s.id, s.name, counts[k]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn heatmap_out_requires_metric() {
        let r = Cli::try_parse_from([
            "segqc", "metrics", "a.nii", "b.nii", "--registry", "r.json", "--out", "o.json", "--heatmap-out", "h.nii",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn weight_modes_parse_as_list() {
        let cli = Cli::try_parse_from(["segqc", "group", "c.csv", "--weight-mode", "none,inv_cv,huber"]).unwrap();
        match cli.command {
            Command::Group(g) => assert_eq!(g.weight_mode.len(), 3),
            _ => unreachable!(),
        }
        assert!(Cli::try_parse_from(["segqc", "group", "c.csv", "--weight-mode", "weighted"]).is_err());
    }
}
