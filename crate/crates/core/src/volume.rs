//! Domain types for label maps, probability maps and Monte Carlo sample sets.
//!
//! Voxel data is stored densely in row-major order with x varying fastest:
//! `index = x + dims[0] * (y + dims[1] * z)`.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer label id as stored in segmentation volumes.
pub type LabelId = u16;

/// Tolerance on the per-voxel sum of a probability stack.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

const NO_INDEX: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct VoxelGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl TryFrom<RawGeometry> for VoxelGeometry {
    type Error = Error;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        VoxelGeometry::new(raw.dims, raw.spacing)
    }
}

impl From<VoxelGeometry> for RawGeometry {
    fn from(g: VoxelGeometry) -> Self {
        RawGeometry {
            dims: g.dims,
            spacing: g.spacing,
        }
    }
}

impl VoxelGeometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Geometry(format!("dims must be ≥ 1, got {dims:?}")));
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(Error::Geometry(format!("voxel count overflows for dims {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Geometry(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// Unit-spacing geometry.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Voxels per z-slice.
    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    pub(crate) fn ensure_same(&self, other: &VoxelGeometry, context: &str) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch {
                context: context.to_string(),
                expected: self.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for VoxelGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.dims;
        let [sx, sy, sz] = self.spacing;
        write!(f, "{x}×{y}×{z} @ {sx}×{sy}×{sz} mm")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub id: LabelId,
    pub name: String,
}

/// Ordered set of labelled structures plus the background label.
///
/// The registry order is the canonical structure order for every
/// per-structure output and for the maps of a [`ProbMapStack`].
#[derive(Clone)]
pub struct StructureRegistry {
    entries: Vec<Structure>,
    background: LabelId,
    lut: Arc<[u16]>,
}

impl fmt::Debug for StructureRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructureRegistry")
            .field("entries", &self.entries)
            .field("background", &self.background)
            .finish()
    }
}

impl PartialEq for StructureRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.background == other.background
    }
}

impl StructureRegistry {
    pub fn new(entries: Vec<Structure>, background: LabelId) -> Result<Self> {
        if entries.len() >= NO_INDEX as usize {
            return Err(Error::Registry(format!("too many entries ({})", entries.len())));
        }
        let mut lut = vec![NO_INDEX; LabelId::MAX as usize + 1];
        let mut names = std::collections::HashSet::new();
        for (i, s) in entries.iter().enumerate() {
            if lut[s.id as usize] != NO_INDEX {
                return Err(Error::Registry(format!("duplicate label id {}", s.id)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::Registry(format!("duplicate structure name {:?}", s.name)));
            }
            lut[s.id as usize] = i as u16;
        }
        if lut[background as usize] == NO_INDEX {
            return Err(Error::Registry(format!(
                "background id {background} is not listed among the entries"
            )));
        }
        if entries.len() < 2 {
            return Err(Error::Registry("need at least one non-background structure".into()));
        }
        Ok(Self {
            entries,
            background,
            lut: lut.into(),
        })
    }

    /// Convenience constructor from `(id, name)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (LabelId, S)>,
        background: LabelId,
    ) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .map(|(id, name)| Structure {
                id,
                name: name.into(),
            })
            .collect();
        Self::new(entries, background)
    }

    pub fn entries(&self) -> &[Structure] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn background(&self) -> LabelId {
        self.background
    }

    pub fn background_index(&self) -> usize {
        self.lut[self.background as usize] as usize
    }

    #[inline]
    pub fn index_of(&self, id: LabelId) -> Option<usize> {
        match self.lut[id as usize] {
            NO_INDEX => None,
            i => Some(i as usize),
        }
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn require(&self, id: LabelId) -> Result<usize> {
        self.index_of(id).ok_or(Error::UnknownLabel(id))
    }

    pub fn id_at(&self, index: usize) -> LabelId {
        self.entries[index].id
    }

    pub fn name_of(&self, id: LabelId) -> Option<&str> {
        self.index_of(id).map(|i| self.entries[i].name.as_str())
    }

    pub fn find_by_name(&self, name: &str) -> Option<&Structure> {
        self.entries.iter().find(|s| s.name == name)
    }

    /// Non-background structures in registry order.
    pub fn structures(&self) -> impl Iterator<Item = &Structure> + '_ {
        self.entries.iter().filter(move |s| s.id != self.background)
    }

    /// The raw id → index lookup table; unknown ids map to `u16::MAX`.
    #[inline]
    pub(crate) fn lut(&self) -> &[u16] {
        &self.lut
    }
}

/// Dense integer label map: one Monte Carlo sample, a consensus or a ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: VoxelGeometry,
    data: Vec<LabelId>,
}

impl LabelVolume {
    pub fn new(geometry: VoxelGeometry, data: Vec<LabelId>) -> Result<Self> {
        if data.len() != geometry.n_voxels() {
            return Err(Error::InvalidInput(format!(
                "label data has {} voxels, geometry {} needs {}",
                data.len(),
                geometry,
                geometry.n_voxels()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: VoxelGeometry, label: LabelId) -> Self {
        Self {
            data: vec![label; geometry.n_voxels()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[LabelId] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [LabelId] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<LabelId> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> LabelId {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: LabelId) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = label;
    }

    /// First voxel (index, label) whose label is not in the registry.
    pub fn first_unknown_label(&self, registry: &StructureRegistry) -> Option<(usize, LabelId)> {
        let lut = registry.lut();
        self.data
            .iter()
            .position(|&l| lut[l as usize] == NO_INDEX)
            .map(|i| (i, self.data[i]))
    }

    pub fn validate_against(&self, registry: &StructureRegistry) -> Result<()> {
        match self.first_unknown_label(registry) {
            Some((_, label)) => Err(Error::UnknownLabel(label)),
            None => Ok(()),
        }
    }

    /// Voxel count per registry entry, in registry order. Labels must be valid.
    pub fn label_counts(&self, registry: &StructureRegistry) -> Vec<usize> {
        let lut = registry.lut();
        let mut counts = vec![0usize; registry.len()];
        for &l in &self.data {
            counts[lut[l as usize] as usize] += 1;
        }
        counts
    }

    /// Volume of structure `s` in mm³: voxel count × voxel volume.
    pub fn structure_volume(&self, registry: &StructureRegistry, s: LabelId) -> Result<f64> {
        registry.require(s)?;
        let count = self.data.iter().filter(|&&l| l == s).count();
        Ok(count as f64 * self.geometry.voxel_volume())
    }
}

/// Per-structure probability maps of one Monte Carlo sample, one map per
/// registry entry (background included) in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMapStack {
    geometry: VoxelGeometry,
    maps: Vec<Vec<f32>>,
}

impl ProbMapStack {
    pub fn new(geometry: VoxelGeometry, maps: Vec<Vec<f32>>) -> Result<Self> {
        if let Some((i, m)) = maps
            .iter()
            .enumerate()
            .find(|(_, m)| m.len() != geometry.n_voxels())
        {
            return Err(Error::InvalidInput(format!(
                "probability map {i} has {} voxels, geometry {} needs {}",
                m.len(),
                geometry,
                geometry.n_voxels()
            )));
        }
        Ok(Self { geometry, maps })
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        &self.geometry
    }

    pub fn maps(&self) -> &[Vec<f32>] {
        &self.maps
    }

    pub fn map(&self, registry_index: usize) -> &[f32] {
        &self.maps[registry_index]
    }

    /// Checks map count, finiteness, the [0,1] range and the per-voxel sum
    /// `|Σ_s p_s − 1| ≤ eps`. Returns one message per broken rule.
    pub fn check(&self, registry: &StructureRegistry, eps: f64) -> Vec<(Rule, String)> {
        let mut issues = Vec::new();
        if self.maps.len() != registry.len() {
            issues.push((
                Rule::MapCount,
                format!(
                    "{} probability maps for {} registry entries",
                    self.maps.len(),
                    registry.len()
                ),
            ));
            return issues;
        }
        let mut non_finite = None;
        let mut out_of_range = None;
        for (s, map) in self.maps.iter().enumerate() {
            for (v, &p) in map.iter().enumerate() {
                if !p.is_finite() {
                    non_finite.get_or_insert((s, v, p));
                } else if !(0.0..=1.0).contains(&p) {
                    out_of_range.get_or_insert((s, v, p));
                }
            }
        }
        if let Some((s, v, p)) = non_finite {
            issues.push((
                Rule::NonFinite,
                format!("map of label {} has non-finite value {p} at voxel {v}", registry.id_at(s)),
            ));
        }
        if let Some((s, v, p)) = out_of_range {
            issues.push((
                Rule::OutOfRange,
                format!("map of label {} has value {p} outside [0,1] at voxel {v}", registry.id_at(s)),
            ));
        }
        let mut bad = 0usize;
        let mut first = None;
        for v in 0..self.geometry.n_voxels() {
            let sum: f64 = self.maps.iter().map(|m| m[v] as f64).sum();
            if !((sum - 1.0).abs() <= eps) {
                bad += 1;
                first.get_or_insert((v, sum));
            }
        }
        if let Some((v, sum)) = first {
            issues.push((
                Rule::Normalization,
                format!(
                    "{bad} voxel(s) with probability sum outside 1 ± ε (ε = {eps:e}); first at voxel {v} sums to {sum}"
                ),
            ));
        }
        issues
    }

    /// Per-voxel argmax label; ties go to the lowest label id.
    pub fn argmax_labels(&self, registry: &StructureRegistry) -> LabelVolume {
        let order = ids_ascending(registry);
        let data = (0..self.geometry.n_voxels())
            .map(|v| {
                let mut best = order[0];
                let mut best_p = self.maps[best][v];
                for &s in &order[1..] {
                    let p = self.maps[s][v];
                    if p > best_p {
                        best = s;
                        best_p = p;
                    }
                }
                registry.id_at(best)
            })
            .collect();
        LabelVolume {
            geometry: self.geometry,
            data,
        }
    }
}

/// Registry indices sorted by ascending label id (tie-break order).
pub(crate) fn ids_ascending(registry: &StructureRegistry) -> Vec<usize> {
    let mut order: Vec<usize> = (0..registry.len()).collect();
    order.sort_by_key(|&i| registry.id_at(i));
    order
}

/// One-hot probability stack of a label volume: `p_s(x) = 1` where `v(x) = s`.
pub fn labels_to_onehot_probs(v: &LabelVolume, registry: &StructureRegistry) -> Result<ProbMapStack> {
    v.validate_against(registry)?;
    let lut = registry.lut();
    let mut maps = vec![vec![0.0f32; v.data.len()]; registry.len()];
    for (i, &l) in v.data.iter().enumerate() {
        maps[lut[l as usize] as usize][i] = 1.0;
    }
    Ok(ProbMapStack {
        geometry: v.geometry,
        maps,
    })
}

/// One Monte Carlo segmentation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    labels: Option<LabelVolume>,
    probs: Option<ProbMapStack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Labels,
    Probs,
    Both,
}

impl McSample {
    pub fn from_labels(labels: LabelVolume) -> Self {
        Self {
            labels: Some(labels),
            probs: None,
        }
    }

    pub fn from_probs(probs: ProbMapStack) -> Self {
        Self {
            labels: None,
            probs: Some(probs),
        }
    }

    pub fn with_both(labels: LabelVolume, probs: ProbMapStack) -> Self {
        Self {
            labels: Some(labels),
            probs: Some(probs),
        }
    }

    pub fn labels(&self) -> Option<&LabelVolume> {
        self.labels.as_ref()
    }

    pub fn probs(&self) -> Option<&ProbMapStack> {
        self.probs.as_ref()
    }

    pub fn kind(&self) -> SampleKind {
        match (&self.labels, &self.probs) {
            (Some(_), Some(_)) => SampleKind::Both,
            (None, Some(_)) => SampleKind::Probs,
            _ => SampleKind::Labels,
        }
    }

    pub fn geometry(&self) -> &VoxelGeometry {
        match (&self.labels, &self.probs) {
            (Some(l), _) => l.geometry(),
            (None, Some(p)) => p.geometry(),
            (None, None) => unreachable!("McSample always holds labels or probabilities"),
        }
    }

    /// Hard labels: the stored label map, or the per-voxel argmax of the probabilities.
    pub fn hard_labels(&self, registry: &StructureRegistry) -> Cow<'_, LabelVolume> {
        match (&self.labels, &self.probs) {
            (Some(l), _) => Cow::Borrowed(l),
            (None, Some(p)) => Cow::Owned(p.argmax_labels(registry)),
            (None, None) => unreachable!("McSample always holds labels or probabilities"),
        }
    }
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    TooFewSamples,
    GeometryMismatch,
    MixedKind,
    UnknownLabel,
    MapCount,
    NonFinite,
    OutOfRange,
    Normalization,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::TooFewSamples => "too-few-samples",
            Rule::GeometryMismatch => "geometry-mismatch",
            Rule::MixedKind => "mixed-sample-kind",
            Rule::UnknownLabel => "unknown-label",
            Rule::MapCount => "map-count",
            Rule::NonFinite => "non-finite",
            Rule::OutOfRange => "out-of-range",
            Rule::Normalization => "normalization",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending sample index, `None` for set-level rules.
    pub sample: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sample {
            Some(i) => write!(f, "sample {i}: {}: {}", self.rule.as_str(), self.detail),
            None => write!(f, "set: {}: {}", self.rule.as_str(), self.detail),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Ordered collection of N Monte Carlo samples sharing one geometry and registry.
///
/// Construction does not validate; call [`McSampleSet::validate`] for a
/// diagnostic report. Every metric validates before computing.
#[derive(Debug, Clone)]
pub struct McSampleSet {
    registry: Arc<StructureRegistry>,
    samples: Vec<McSample>,
}

impl McSampleSet {
    pub fn new(registry: impl Into<Arc<StructureRegistry>>, samples: Vec<McSample>) -> Self {
        Self {
            registry: registry.into(),
            samples,
        }
    }

    pub fn from_label_volumes(
        registry: impl Into<Arc<StructureRegistry>>,
        volumes: Vec<LabelVolume>,
    ) -> Self {
        Self::new(registry, volumes.into_iter().map(McSample::from_labels).collect())
    }

    pub fn registry(&self) -> &StructureRegistry {
        &self.registry
    }

    pub fn registry_arc(&self) -> &Arc<StructureRegistry> {
        &self.registry
    }

    pub fn samples(&self) -> &[McSample] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// Geometry of the first sample.
    pub fn geometry(&self) -> Option<&VoxelGeometry> {
        self.samples.first().map(McSample::geometry)
    }

    pub fn kind(&self) -> Option<SampleKind> {
        self.samples.first().map(McSample::kind)
    }

    /// Checks every set invariant; an empty report means the set is usable.
    pub fn validate(&self) -> ValidationReport {
        validate_sample_set(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else if report.len() == 1 && report.violations[0].rule == Rule::TooFewSamples {
            Err(Error::TooFewSamples(self.n()))
        } else {
            Err(Error::InvalidSampleSet(report))
        }
    }

    /// Hard label maps of every sample, in sample order.
    pub fn hard_labels(&self) -> Vec<Cow<'_, LabelVolume>> {
        self.samples
            .iter()
            .map(|s| s.hard_labels(&self.registry))
            .collect()
    }
}

/// Diagnostic check of a sample set. Pure: repeated calls give identical reports.
pub fn validate_sample_set(set: &McSampleSet) -> ValidationReport {
    let mut violations = Vec::new();
    let registry = set.registry();
    if set.n() < 2 {
        violations.push(Violation {
            sample: None,
            rule: Rule::TooFewSamples,
            detail: format!("need N ≥ 2 samples, got {}", set.n()),
        });
    }
    let Some(first) = set.samples.first() else {
        return ValidationReport { violations };
    };
    let geometry = *first.geometry();
    let kind = first.kind();
    for (i, sample) in set.samples.iter().enumerate() {
        let mut push = |rule, detail| {
            violations.push(Violation {
                sample: Some(i),
                rule,
                detail,
            })
        };
        if sample.kind() != kind {
            push(
                Rule::MixedKind,
                format!("sample kind {:?} differs from the set's {:?}", sample.kind(), kind),
            );
        }
        if *sample.geometry() != geometry {
            push(
                Rule::GeometryMismatch,
                format!("geometry {} differs from sample 0 ({geometry})", sample.geometry()),
            );
            continue;
        }
        if let (Some(l), Some(p)) = (&sample.labels, &sample.probs) {
            if l.geometry != p.geometry {
                push(
                    Rule::GeometryMismatch,
                    format!(
                        "label geometry {} differs from probability geometry {}",
                        l.geometry, p.geometry
                    ),
                );
                continue;
            }
        }
        if let Some(l) = &sample.labels {
            if let Some((v, label)) = l.first_unknown_label(registry) {
                push(
                    Rule::UnknownLabel,
                    format!("label {label} at voxel {v} is not in the registry"),
                );
            }
        }
        if let Some(p) = &sample.probs {
            for (rule, detail) in p.check(registry, PROB_SUM_TOLERANCE) {
                push(rule, detail);
            }
        }
    }
    ValidationReport { violations }
}
