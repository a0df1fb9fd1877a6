//! Stage orchestration: forward -> backward -> exclusive -> sparse -> hard.
//!
//! The order is fixed. Each enabled stage appends a [`StageRecord`] to the
//! [`PipelineTrace`].

use std::fmt;

use serde::Serialize;

use crate::config_text::{parse_entries, Entry};
use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::matching::{
    backward_match, correspondence_matrix, forward_match, select_hard_negatives, streaming_extrema,
    CandidatePrompt, FeatureMap, HardMeanScope,
};
use crate::patching::{label_reference_patches, PatchGrid, PatchLabel};
use crate::scalar::Scalar;
use crate::spatial::{
    exclusive_sampling, merge_hard_negatives, sparse_sampling, PromptClass, PromptPoint,
    PromptScheme, RadiusBase, RadiusSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub forward: bool,
    pub backward: bool,
    pub exclusive: bool,
    pub sparse: bool,
    pub hard: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self::ALL
    }
}

impl Stages {
    pub const ALL: Stages = Stages {
        forward: true,
        backward: true,
        exclusive: true,
        sparse: true,
        hard: true,
    };

    /// The five cumulative ablation rows: forward only, then each later
    /// stage switched on in turn.
    pub fn cumulative() -> [Stages; 5] {
        let mut rows = [Stages {
            forward: true,
            backward: false,
            exclusive: false,
            sparse: false,
            hard: false,
        }; 5];
        for (k, row) in rows.iter_mut().enumerate() {
            row.backward = k >= 1;
            row.exclusive = k >= 2;
            row.sparse = k >= 3;
            row.hard = k >= 4;
        }
        rows
    }

    fn names(&self) -> Vec<&'static str> {
        [
            (self.forward, "forward"),
            (self.backward, "backward"),
            (self.exclusive, "exclusive"),
            (self.sparse, "sparse"),
            (self.hard, "hard"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

/// Which negatives end up in the final scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativeComposition {
    BackgroundOnly,
    HardOnly,
    #[default]
    BackgroundWithHard,
}

impl NegativeComposition {
    pub const ALL: [NegativeComposition; 3] = [
        NegativeComposition::BackgroundOnly,
        NegativeComposition::HardOnly,
        NegativeComposition::BackgroundWithHard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NegativeComposition::BackgroundOnly => "background_only",
            NegativeComposition::HardOnly => "hard_only",
            NegativeComposition::BackgroundWithHard => "background_with_hard",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match normalize(s).as_str() {
            "backgroundonly" => Some(Self::BackgroundOnly),
            "hardonly" => Some(Self::HardOnly),
            "backgroundwithhard" => Some(Self::BackgroundWithHard),
            _ => None,
        }
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| *c != '_' && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub d_exclusive: RadiusSpec,
    pub d_sparse_positive: RadiusSpec,
    pub d_sparse_negative: RadiusSpec,
    pub stages: Stages,
    pub negative_composition: NegativeComposition,
    pub hard_mean_scope: HardMeanScope,
    pub radius_base: RadiusBase,
    /// Merge hard negatives before negative sparsification, so they are
    /// thinned together with background negatives.
    pub sparsify_hard_negatives: bool,
    /// Compute row/column minima without materializing the matrix.
    pub streaming: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            stride: 16,
            d_exclusive: RadiusSpec::raw(0.25),
            d_sparse_positive: RadiusSpec::raw(0.0),
            d_sparse_negative: RadiusSpec::raw(0.125),
            stages: Stages::ALL,
            negative_composition: NegativeComposition::BackgroundWithHard,
            hard_mean_scope: HardMeanScope::PositiveExcludedOnly,
            radius_base: RadiusBase::Min,
            sparsify_hard_negatives: false,
            streaming: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_config(config: &PipelineConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let mut violate = |field, rule: String| out.push(ConfigViolation { field, rule });
    if config.patch_size == 0 {
        violate("patch_size", "must be at least 1".into());
    }
    if config.stride == 0 {
        violate("stride", "must be at least 1".into());
    } else if config.stride > config.patch_size {
        violate(
            "stride",
            format!("must not exceed patch_size ({})", config.patch_size),
        );
    }
    for (field, spec) in [
        ("d_exclusive", config.d_exclusive),
        ("d_sparse_positive", config.d_sparse_positive),
        ("d_sparse_negative", config.d_sparse_negative),
    ] {
        let f = spec.fraction();
        if !(0.0..=1.0).contains(&f) {
            violate(field, format!("fraction {f} must lie in [0, 1]"));
        }
    }
    let s = config.stages;
    if !s.forward {
        violate("stages", "forward matching must always be enabled".into());
    }
    if !s.backward {
        for (on, name) in [
            (s.exclusive, "exclusive"),
            (s.sparse, "sparse"),
            (s.hard, "hard"),
        ] {
            if on {
                violate("stages", format!("{name} requires backward"));
            }
        }
    }
    out
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 11] = [
        "patch_size",
        "stride",
        "d_exclusive",
        "d_sparse_positive",
        "d_sparse_negative",
        "stages",
        "negative_composition",
        "hard_mean_scope",
        "radius_base",
        "sparsify_hard_negatives",
        "streaming",
    ];

    /// Parses `key = value` lines on top of the defaults. Unknown keys are
    /// errors; range checks are left to [`validate_config`].
    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(&parse_entries(text, source_name)?, source_name)?;
        Ok(config)
    }

    /// Applies entries over the current values.
    pub fn apply(&mut self, entries: &[Entry], source_name: &str) -> Result<()> {
        for e in entries {
            match e.key.as_str() {
                "patch_size" => self.patch_size = e.parse(source_name)?,
                "stride" => self.stride = e.parse(source_name)?,
                "d_exclusive" => self.d_exclusive = RadiusSpec::raw(e.parse(source_name)?),
                "d_sparse_positive" => {
                    self.d_sparse_positive = RadiusSpec::raw(e.parse(source_name)?)
                }
                "d_sparse_negative" => {
                    self.d_sparse_negative = RadiusSpec::raw(e.parse(source_name)?)
                }
                "stages" => self.stages = parse_stages(e, source_name)?,
                "negative_composition" => {
                    self.negative_composition =
                        NegativeComposition::parse(&e.value).ok_or_else(|| {
                            e.error(
                                source_name,
                                format!("unknown negative_composition `{}`", e.value),
                            )
                        })?
                }
                "hard_mean_scope" => {
                    self.hard_mean_scope = match normalize(&e.value).as_str() {
                        "positiveexcludedonly" => HardMeanScope::PositiveExcludedOnly,
                        "allexcluded" => HardMeanScope::AllExcluded,
                        _ => {
                            return Err(e.error(
                                source_name,
                                format!("unknown hard_mean_scope `{}`", e.value),
                            ))
                        }
                    }
                }
                "radius_base" => {
                    self.radius_base = match normalize(&e.value).as_str() {
                        "min" => RadiusBase::Min,
                        "max" => RadiusBase::Max,
                        "geometricmean" | "geomean" => RadiusBase::GeometricMean,
                        _ => {
                            return Err(
                                e.error(source_name, format!("unknown radius_base `{}`", e.value))
                            )
                        }
                    }
                }
                "sparsify_hard_negatives" => {
                    self.sparsify_hard_negatives = e.parse_bool(source_name)?
                }
                "streaming" => self.streaming = e.parse_bool(source_name)?,
                other => return Err(e.error(source_name, format!("unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let base = match self.radius_base {
            RadiusBase::Min => "min",
            RadiusBase::Max => "max",
            RadiusBase::GeometricMean => "geometric_mean",
        };
        let scope = match self.hard_mean_scope {
            HardMeanScope::PositiveExcludedOnly => "positive_excluded_only",
            HardMeanScope::AllExcluded => "all_excluded",
        };
        format!(
            "patch_size = {}\nstride = {}\nd_exclusive = {}\nd_sparse_positive = {}\nd_sparse_negative = {}\nstages = {}\nnegative_composition = {}\nhard_mean_scope = {}\nradius_base = {}\nsparsify_hard_negatives = {}\nstreaming = {}\n",
            self.patch_size,
            self.stride,
            self.d_exclusive.fraction(),
            self.d_sparse_positive.fraction(),
            self.d_sparse_negative.fraction(),
            self.stages,
            self.negative_composition.as_str(),
            scope,
            base,
            self.sparsify_hard_negatives,
            self.streaming,
        )
    }
}

fn parse_stages(e: &Entry, source_name: &str) -> Result<Stages> {
    let value = e.value.trim();
    if value.eq_ignore_ascii_case("all") {
        return Ok(Stages::ALL);
    }
    let mut stages = Stages {
        forward: false,
        backward: false,
        exclusive: false,
        sparse: false,
        hard: false,
    };
    for name in value.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let flag = match name.to_ascii_lowercase().as_str() {
            "forward" => &mut stages.forward,
            "backward" => &mut stages.backward,
            "exclusive" => &mut stages.exclusive,
            "sparse" => &mut stages.sparse,
            "hard" => &mut stages.hard,
            _ => return Err(e.error(source_name, format!("unknown stage `{name}`"))),
        };
        *flag = true;
    }
    Ok(stages)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Forward,
    Backward,
    Exclusive,
    SparsePositive,
    SparseNegative,
    Hard,
    Composition,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Forward => "forward",
            StageName::Backward => "backward",
            StageName::Exclusive => "exclusive",
            StageName::SparsePositive => "sparse_positive",
            StageName::SparseNegative => "sparse_negative",
            StageName::Hard => "hard",
            StageName::Composition => "composition",
        }
    }
}

/// One stage of the trace. `kept` is the scheme size after the stage and
/// always equals `points_after.len()`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: StageName,
    pub kept: usize,
    pub removed: Vec<PromptPoint>,
    pub points_after: Vec<PromptPoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PipelineTrace {
    pub stages: Vec<StageRecord>,
}

impl PipelineTrace {
    fn record(&mut self, stage: StageName, removed: Vec<PromptPoint>, after: &PromptScheme) {
        self.stages.push(StageRecord {
            stage,
            kept: after.len(),
            removed,
            points_after: after.points().to_vec(),
        });
    }

    fn record_transition(&mut self, stage: StageName, before: &PromptScheme, after: &PromptScheme) {
        let removed = before
            .points()
            .iter()
            .filter(|p| !after.points().contains(p))
            .copied()
            .collect();
        self.record(stage, removed, after);
    }

    pub fn stage(&self, stage: StageName) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }
}

fn check_inputs<T: Scalar>(
    reference: &FeatureMap<T>,
    ref_mask: &MaskImage,
    target: &FeatureMap<T>,
    target_width: usize,
    target_height: usize,
    config: &PipelineConfig,
) -> Result<()> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let grid = reference.grid();
    if (ref_mask.width(), ref_mask.height()) != (grid.image_width(), grid.image_height()) {
        return Err(Error::dims(
            "reference mask size",
            format!("{}x{}", grid.image_width(), grid.image_height()),
            format!("{}x{}", ref_mask.width(), ref_mask.height()),
        ));
    }
    if reference.dim() != target.dim() {
        return Err(Error::FeatureDimMismatch {
            reference: reference.dim(),
            target: target.dim(),
        });
    }
    let tg = target.grid();
    if tg.image_width() > target_width || tg.image_height() > target_height {
        return Err(Error::dims(
            "target image size",
            format!("at least {}x{}", tg.image_width(), tg.image_height()),
            format!("{target_width}x{target_height}"),
        ));
    }
    if u32::try_from(target_width).is_err() || u32::try_from(target_height).is_err() {
        return Err(Error::DimensionOverflow {
            width: target_width as u64,
            height: target_height as u64,
        });
    }
    Ok(())
}

fn to_scheme<T: Scalar>(
    grid: &PatchGrid,
    width: u32,
    height: u32,
    candidates: &[CandidatePrompt<T>],
) -> Result<PromptScheme> {
    PromptScheme::new(
        width,
        height,
        candidates.iter().map(|c| {
            let (x, y) = grid
                .patch_center(c.target_patch)
                .expect("candidate within target grid");
            let class = match c.label {
                PatchLabel::Positive => PromptClass::Positive,
                PatchLabel::Negative => PromptClass::Negative,
            };
            PromptPoint::new(x as u32, y as u32, class)
        }),
    )
}

/// Turns a labelled reference and a target feature map into a prompt scheme
/// for a `target_width x target_height` image.
pub fn run_pipeline<T: Scalar>(
    reference: &FeatureMap<T>,
    ref_mask: &MaskImage,
    target: &FeatureMap<T>,
    target_width: usize,
    target_height: usize,
    config: &PipelineConfig,
) -> Result<(PromptScheme, PipelineTrace)> {
    check_inputs(
        reference,
        ref_mask,
        target,
        target_width,
        target_height,
        config,
    )?;
    let (width, height) = (target_width as u32, target_height as u32);
    let stages = config.stages;
    let grid = target.grid();
    let mut trace = PipelineTrace::default();

    let labels = label_reference_patches(reference.grid(), ref_mask)?;
    log::debug!(
        "reference: {} positive / {} patches",
        labels
            .iter()
            .filter(|&&l| l == PatchLabel::Positive)
            .count(),
        labels.len()
    );

    // forward (+ backward)
    let (forward, split) = if config.streaming {
        let extrema = streaming_extrema(reference, target)?;
        let forward = extrema.forward(&labels)?;
        let split = stages
            .backward
            .then(|| extrema.backward(&forward, &labels))
            .transpose()?;
        (forward, split)
    } else {
        let m = correspondence_matrix(reference, target)?;
        let forward = forward_match(&m, &labels)?;
        let split = stages
            .backward
            .then(|| backward_match(&m, &forward, &labels))
            .transpose()?;
        (forward, split)
    };
    let mut scheme = to_scheme(grid, width, height, &forward)?;
    trace.record(StageName::Forward, Vec::new(), &scheme);

    let mut hard_points = Vec::new();
    if let Some((retained, excluded)) = split {
        let next = to_scheme(grid, width, height, &retained)?;
        trace.record_transition(StageName::Backward, &scheme, &next);
        scheme = next;
        if stages.hard {
            for c in select_hard_negatives(&excluded, config.hard_mean_scope) {
                let (x, y) = grid.patch_center(c.target_patch)?;
                let p = PromptPoint::new(x as u32, y as u32, PromptClass::HardNegative);
                if !hard_points.contains(&p) {
                    hard_points.push(p);
                }
            }
        }
    }

    let radius = |spec: RadiusSpec| spec.resolve(width, height, config.radius_base);
    let r_exclusive = radius(config.d_exclusive);

    if stages.exclusive {
        let next = exclusive_sampling(&scheme, r_exclusive);
        trace.record_transition(StageName::Exclusive, &scheme, &next);
        scheme = next;
    }

    if stages.sparse {
        let next = sparse_sampling(
            &scheme,
            PromptClass::Positive,
            radius(config.d_sparse_positive),
        );
        trace.record_transition(StageName::SparsePositive, &scheme, &next);
        scheme = next;
    }

    let hard_radius = if stages.exclusive { r_exclusive } else { 0.0 };
    let sparse_negatives = |scheme: &mut PromptScheme, trace: &mut PipelineTrace| {
        if stages.sparse {
            let next = sparse_sampling(
                scheme,
                PromptClass::Negative,
                radius(config.d_sparse_negative),
            );
            trace.record_transition(StageName::SparseNegative, scheme, &next);
            *scheme = next;
        }
    };
    let compose_and_merge = |scheme: &mut PromptScheme, trace: &mut PipelineTrace| -> Result<()> {
        if config.negative_composition == NegativeComposition::HardOnly {
            let next = scheme.retain(|p| p.class != PromptClass::Negative);
            trace.record_transition(StageName::Composition, scheme, &next);
            *scheme = next;
        }
        if stages.hard && config.negative_composition != NegativeComposition::BackgroundOnly {
            let next = merge_hard_negatives(scheme, &hard_points, hard_radius)?;
            let rejected = hard_points
                .iter()
                .filter(|p| !next.points().contains(p))
                .copied()
                .collect();
            trace.record(StageName::Hard, rejected, &next);
            *scheme = next;
        }
        Ok(())
    };

    if config.sparsify_hard_negatives {
        compose_and_merge(&mut scheme, &mut trace)?;
        sparse_negatives(&mut scheme, &mut trace);
    } else {
        sparse_negatives(&mut scheme, &mut trace);
        compose_and_merge(&mut scheme, &mut trace)?;
    }

    Ok((scheme, trace))
}
