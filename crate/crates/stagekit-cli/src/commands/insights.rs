use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use stagekit::classify::{Label, Prediction, PredictionOutcome};
use stagekit::insights::{
    compare_insights, frequent_patterns, stage_frequencies, transition_matrix, InsightReport,
    ReferenceDistribution, StageSequence, TransitionOptions,
};
use stagekit::taxonomy::UnifiedTaxonomy;

use crate::config::{resolve, InsightsConfig, LoadedConfig};
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Deserialize)]
struct ReferenceFile {
    #[serde(rename = "reference", default)]
    references: Vec<ReferenceDistribution>,
}

pub fn cmd_insights(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<(), CliError> {
    let cfg: &InsightsConfig =
        crate::config::require_section(loaded.file.insights.as_ref(), "insights")?;
    let base = &loaded.base_dir;

    let tax_path = resolve(base, &cfg.taxonomy);
    let unified = UnifiedTaxonomy::load(&tax_path)?;

    let predictions_path = resolve(base, &cfg.predictions);
    let text = std::fs::read_to_string(&predictions_path)
        .map_err(|e| crate::io_data(&predictions_path, e))?;
    let mut predictions: Vec<Prediction> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        predictions.push(serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!(
                "{} line {}: {e}",
                predictions_path.display(),
                i + 1
            ))
        })?);
    }
    if predictions.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no predictions",
            predictions_path.display()
        )));
    }

    // Stage names in predictions may come from either source vocabulary;
    // fold everything onto unified headwords before counting.
    let mut unmapped: Vec<String> = Vec::new();
    let project = |label: &Label, unmapped: &mut Vec<String>| -> Label {
        match label {
            Label::Stage(s) => match unified.group_containing(s) {
                Some(group) => Label::Stage(group.headword.clone()),
                None => {
                    if !unmapped.contains(s) {
                        unmapped.push(s.clone());
                    }
                    Label::Unknown
                }
            },
            other => other.clone(),
        }
    };

    // Per-instruction labels in artifact order; failed and truncated
    // predictions carry no usable stage.
    let usable = |p: &Prediction| matches!(p.outcome, PredictionOutcome::Ok);
    let instruction_labels: Vec<Label> = predictions
        .iter()
        .map(|p| {
            if usable(p) {
                project(&p.label, &mut unmapped)
            } else {
                Label::Unknown
            }
        })
        .collect();
    if !unmapped.is_empty() {
        return Err(CliError::Data(format!(
            "predicted stages missing from taxonomy {}: {}",
            unified.version,
            unmapped.join(", ")
        )));
    }

    // Notebook-order sequences, one per notebook, in artifact order.
    let mut sequences: Vec<StageSequence> = Vec::new();
    let mut seq_labels: Vec<Label> = Vec::new();
    let mut current: Option<String> = None;
    for (p, label) in predictions.iter().zip(&instruction_labels) {
        if current.as_deref() != Some(p.instruction.notebook_id.as_str()) {
            if let Some(id) = current.take() {
                sequences.push(StageSequence::from_labels(id, &seq_labels));
                seq_labels.clear();
            }
            current = Some(p.instruction.notebook_id.clone());
        }
        seq_labels.push(label.clone());
    }
    if let Some(id) = current.take() {
        sequences.push(StageSequence::from_labels(id, &seq_labels));
    }

    // Per-cell stage sets: a cell counts once per distinct stage.
    let mut cell_stages: BTreeMap<(String, usize), std::collections::BTreeSet<String>> =
        BTreeMap::new();
    let mut cell_seen: std::collections::BTreeSet<(String, usize)> = Default::default();
    for (p, label) in predictions.iter().zip(&instruction_labels) {
        let key = (p.instruction.notebook_id.clone(), p.instruction.cell_index);
        cell_seen.insert(key.clone());
        if let Label::Stage(s) = label {
            cell_stages.entry(key).or_default().insert(s.clone());
        }
    }
    let mut cell_labels: Vec<Label> = Vec::new();
    for key in &cell_seen {
        match cell_stages.get(key) {
            Some(stages) => {
                cell_labels.extend(stages.iter().map(|s| Label::Stage(s.clone())));
            }
            None => cell_labels.push(Label::None),
        }
    }

    let options = TransitionOptions {
        collapse_self: cfg.collapse_self,
        boundaries: cfg.boundaries,
    };
    let raw_options = TransitionOptions {
        collapse_self: false,
        boundaries: cfg.boundaries,
    };
    let mut report = InsightReport {
        taxonomy_version: unified.version.clone(),
        instruction_frequencies: stage_frequencies(&instruction_labels)?,
        cell_frequencies: stage_frequencies(&cell_labels)?,
        transitions: transition_matrix(&sequences, options)?,
        transitions_raw: transition_matrix(&sequences, raw_options)?,
        patterns: frequent_patterns(&sequences, cfg.pattern_length, cfg.min_support)?,
        comparisons: Vec::new(),
        notes: Vec::new(),
    };

    let references_path = cfg.references.as_ref().map(|rel| resolve(base, rel));
    if let Some(path) = &references_path {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_data(path, e))?;
        let parsed: ReferenceFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        report.comparisons = compare_insights(&report, &parsed.references, &unified, cfg.alpha)?;
    }

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;
    let report_path = out_dir.join("insights.toml");
    std::fs::write(
        &report_path,
        toml::to_string_pretty(&report)
            .map_err(|e| CliError::Data(format!("report serialization: {e}")))?,
    )
    .map_err(|e| crate::io_data(&report_path, e))?;
    let transitions_path = out_dir.join("transitions.tsv");
    std::fs::write(&transitions_path, report.transitions.to_delimited())
        .map_err(|e| crate::io_data(&transitions_path, e))?;
    let transitions_raw_path = out_dir.join("transitions_raw.tsv");
    std::fs::write(&transitions_raw_path, report.transitions_raw.to_delimited())
        .map_err(|e| crate::io_data(&transitions_raw_path, e))?;

    let mut manifest = RunManifest::new("insights", &loaded.raw);
    manifest.taxonomy_version = Some(unified.version.clone());
    manifest.add_input(&cfg.taxonomy, &tax_path)?;
    manifest.add_input(&cfg.predictions, &predictions_path)?;
    if let (Some(rel), Some(path)) = (&cfg.references, &references_path) {
        manifest.add_input(rel, path)?;
    }
    manifest.add_output(&report_path);
    manifest.add_output(&transitions_path);
    manifest.add_output(&transitions_raw_path);
    manifest.write(&out_dir)?;

    println!(
        "insights over {} instructions in {} notebooks ({} comparisons) -> {}",
        predictions.len(),
        sequences.len(),
        report.comparisons.len(),
        report_path.display()
    );
    Ok(())
}
