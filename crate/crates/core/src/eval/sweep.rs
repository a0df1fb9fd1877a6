use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::ManifestEntry;
use super::synthetic::{generate_synthetic, SyntheticCase};
use crate::config_text::parse_sections;
use crate::error::{Error, Result};
use crate::io::load_mask;
use crate::mask::MaskImage;
use crate::matching::FeatureMap;
use crate::pipeline::{run_pipeline, validate_config, PipelineConfig};
use crate::segmenter::Segmenter;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub id: String,
    pub config: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepCase {
    Synthetic(SyntheticCase),
    Files(ManifestEntry),
}

/// Inputs of one evaluation case, loaded and ready for the pipeline.
#[derive(Clone, Debug)]
pub struct CaseData {
    pub reference: FeatureMap<f32>,
    pub ref_mask: MaskImage,
    pub target: FeatureMap<f32>,
    pub target_mask: MaskImage,
    pub target_image: Option<PathBuf>,
}

/// Synthetic cases carry their own grid; file cases are gridded with the
/// given patch size and stride over the mask dimensions.
pub fn prepare_case(case: &SweepCase, patch_size: usize, stride: usize) -> Result<CaseData> {
    match case {
        SweepCase::Synthetic(c) => {
            let s = generate_synthetic::<f32>(c)?;
            Ok(CaseData {
                reference: s.reference,
                ref_mask: s.ref_mask,
                target: s.target,
                target_mask: s.target_mask,
                target_image: None,
            })
        }
        SweepCase::Files(entry) => {
            let ref_mask = load_mask(&entry.ref_mask)?;
            let target_mask = load_mask(&entry.target_mask)?;
            let reference = crate::io::load_feature_map(
                &entry.ref_features,
                ref_mask.width(),
                ref_mask.height(),
                patch_size,
                stride,
            )?;
            let target = crate::io::load_feature_map(
                &entry.target_features,
                target_mask.width(),
                target_mask.height(),
                patch_size,
                stride,
            )?;
            Ok(CaseData {
                reference,
                ref_mask,
                target,
                target_mask,
                target_image: entry.target_image.clone(),
            })
        }
    }
}

/// Scores of one configuration under one segmenter.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub config_id: String,
    pub segmenter: String,
    /// Per-case Dice for the cases that succeeded, in case order.
    pub dice: Vec<f64>,
    /// `(case index, message)` for the cases that failed.
    pub failures: Vec<(usize, String)>,
}

impl EvalRecord {
    /// Arithmetic mean over successful cases; `None` if every case failed.
    pub fn mean(&self) -> Option<f64> {
        (!self.dice.is_empty()).then(|| self.dice.iter().sum::<f64>() / self.dice.len() as f64)
    }
}

fn evaluate(
    config: &PipelineConfig,
    data: &CaseData,
    segmenters: &[&dyn Segmenter],
) -> Vec<std::result::Result<f64, String>> {
    let (w, h) = (data.target_mask.width(), data.target_mask.height());
    match run_pipeline(&data.reference, &data.ref_mask, &data.target, w, h, config) {
        Err(e) => vec![Err(e.to_string()); segmenters.len()],
        Ok((scheme, _)) => segmenters
            .iter()
            .map(|seg| {
                seg.segment(data.target_image.as_deref(), &scheme)
                    .and_then(|pred| super::dice(&pred, &data.target_mask))
                    .map_err(|e| e.to_string())
            })
            .collect(),
    }
}

/// Runs every configuration over every case with every segmenter.
///
/// Cases run in parallel; records come back ordered by configuration, then
/// segmenter. A failing case is recorded and the sweep continues.
pub fn sweep(
    grid: &[SweepConfig],
    cases: &[SweepCase],
    segmenters: &[&dyn Segmenter],
) -> Result<Vec<EvalRecord>> {
    if grid.is_empty() || cases.is_empty() || segmenters.is_empty() {
        return Err(Error::InvalidValue(
            "sweep needs at least one configuration, case and segmenter".into(),
        ));
    }
    for entry in grid {
        let violations = validate_config(&entry.config);
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
    }

    let mut geometries: Vec<(usize, usize)> = grid
        .iter()
        .map(|c| (c.config.patch_size, c.config.stride))
        .collect();
    geometries.sort_unstable();
    geometries.dedup();
    let prepared: HashMap<(usize, usize), Vec<std::result::Result<CaseData, String>>> = geometries
        .into_iter()
        .map(|g| {
            let data = cases
                .par_iter()
                .map(|c| prepare_case(c, g.0, g.1).map_err(|e| e.to_string()))
                .collect();
            (g, data)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..cases.len()).map(move |c| (g, c)))
        .collect();
    let outcomes: Vec<Vec<std::result::Result<f64, String>>> = jobs
        .par_iter()
        .map(|&(g, c)| {
            let config = &grid[g].config;
            match &prepared[&(config.patch_size, config.stride)][c] {
                Ok(data) => evaluate(config, data, segmenters),
                Err(e) => vec![Err(e.clone()); segmenters.len()],
            }
        })
        .collect();

    let mut records = Vec::with_capacity(grid.len() * segmenters.len());
    for (g, entry) in grid.iter().enumerate() {
        for (s, seg) in segmenters.iter().enumerate() {
            let mut record = EvalRecord {
                config_id: entry.id.clone(),
                segmenter: seg.tag().to_string(),
                dice: Vec::new(),
                failures: Vec::new(),
            };
            for c in 0..cases.len() {
                match &outcomes[g * cases.len() + c][s] {
                    Ok(d) => record.dice.push(*d),
                    Err(e) => record.failures.push((c, e.clone())),
                }
            }
            if !record.failures.is_empty() {
                log::warn!(
                    "config {} / {}: {} of {} cases failed",
                    record.config_id,
                    record.segmenter,
                    record.failures.len(),
                    cases.len()
                );
            }
            records.push(record);
        }
    }
    Ok(records)
}

/// `0` for zero, otherwise a percentage with two decimals (`12.50%`).
pub fn format_fraction(fraction: f64) -> String {
    if fraction == 0.0 {
        "0".to_string()
    } else {
        format!("{:.2}%", fraction * 100.0)
    }
}

fn format_dice(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// One row per configuration: stage flags and radii, one DSC column per
/// segmenter, their average, and case counts with failure notes.
pub fn report_csv(
    grid: &[SweepConfig],
    records: &[EvalRecord],
    num_cases: usize,
) -> Result<String> {
    let mut tags: Vec<&str> = Vec::new();
    for r in records {
        if !tags.contains(&r.segmenter.as_str()) {
            tags.push(&r.segmenter);
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "config_id",
        "forward",
        "backward",
        "exclusive",
        "sparse",
        "hard",
        "d_exclusive",
        "d_sparse_positive",
        "d_sparse_negative",
        "negative_composition",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(tags.iter().map(|t| t.to_string()));
    header.extend(["ave", "cases", "failed", "notes"].map(String::from));
    writer.write_record(&header)?;

    let flag = |on: bool| if on { "1" } else { "0" }.to_string();
    for entry in grid {
        let c = &entry.config;
        let mut row = vec![
            entry.id.clone(),
            flag(c.stages.forward),
            flag(c.stages.backward),
            flag(c.stages.exclusive),
            flag(c.stages.sparse),
            flag(c.stages.hard),
            format_fraction(c.d_exclusive.fraction()),
            format_fraction(c.d_sparse_positive.fraction()),
            format_fraction(c.d_sparse_negative.fraction()),
            c.negative_composition.as_str().to_string(),
        ];
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.config_id == entry.id).collect();
        let means: Vec<Option<f64>> = tags
            .iter()
            .map(|t| {
                mine.iter()
                    .find(|r| r.segmenter == *t)
                    .and_then(|r| r.mean())
            })
            .collect();
        row.extend(means.iter().map(|&m| format_dice(m)));
        let present: Vec<f64> = means.iter().flatten().copied().collect();
        let ave = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        row.push(format_dice(ave));
        row.push(num_cases.to_string());
        let failed = mine.iter().map(|r| r.failures.len()).max().unwrap_or(0);
        row.push(failed.to_string());
        let mut notes: Vec<String> = mine
            .iter()
            .flat_map(|r| {
                r.failures
                    .iter()
                    .map(move |(i, e)| format!("{}#{i}: {e}", r.segmenter))
            })
            .collect();
        notes.truncate(3);
        row.push(notes.join(" | "));
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidValue(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a grid file: `[id]` sections of config keys, on top of an
/// optional leading block shared by every section. A file without sections
/// is a single configuration named `default`.
pub fn parse_grid(text: &str, source_name: &str) -> Result<Vec<SweepConfig>> {
    let sections = parse_sections(text, source_name)?;
    let mut base = PipelineConfig::default();
    base.apply(&sections[0].entries, source_name)?;
    if sections.len() == 1 {
        if sections[0].entries.is_empty() {
            return Err(Error::InvalidValue(format!(
                "{source_name}: grid has no configurations"
            )));
        }
        return Ok(vec![SweepConfig {
            id: "default".into(),
            config: base,
        }]);
    }
    let mut out: Vec<SweepConfig> = Vec::new();
    for s in &sections[1..] {
        let id = s.name.clone().expect("named section");
        if out.iter().any(|c| c.id == id) {
            return Err(crate::config_text::parse_error(
                source_name,
                s.line,
                format!("duplicate section `{id}`"),
            ));
        }
        let mut config = base.clone();
        config.apply(&s.entries, source_name)?;
        out.push(SweepConfig { id, config });
    }
    Ok(out)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Vec<SweepConfig>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, &path.display().to_string())
}
