use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use stagekit::classify::{aggregate_cell, Label, Prediction};
use stagekit::ingest::{load_cell_labels, rejoin_cell_labels};
use stagekit::stats::{
    binarize, binarize_sets, cochran_q, mcc, per_class_f1, posthoc_mcnemar, ClassScores,
    ConfusionMatrix, PairwiseComparison, TestResult,
};
use stagekit::taxonomy::{StageTaxonomy, UnifiedTaxonomy};

use crate::config::{resolve, EvaluateConfig, LoadedConfig};
use crate::manifest::RunManifest;
use crate::CliError;

/// Labels confusion-matrix cells for predictions that carry no stage.
const NONE_SENTINEL: &str = "<none>";
const UNKNOWN_SENTINEL: &str = "<unknown>";

type CellKey = (String, usize);

/// One prediction artifact, keyed for pairing across systems.
struct System {
    name: String,
    /// Instruction key -> prediction, in artifact order.
    order: Vec<String>,
    by_key: BTreeMap<String, Prediction>,
}

fn load_predictions(name: &str, path: &Path) -> Result<System, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_data(path, e))?;
    let mut order = Vec::new();
    let mut by_key = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Prediction = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let key = record.instruction.key();
        if by_key.insert(key.clone(), record).is_some() {
            return Err(CliError::Data(format!(
                "{}: duplicate prediction for {key}",
                path.display()
            )));
        }
        order.push(key);
    }
    if order.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no predictions",
            path.display()
        )));
    }
    Ok(System {
        name: name.to_string(),
        order,
        by_key,
    })
}

/// Maps a stage name from any participating vocabulary onto its unified
/// group headword. Stages outside the taxonomy are alignment failures.
fn project_stage(
    stage: &str,
    unified: &UnifiedTaxonomy,
    offenders: &mut BTreeSet<String>,
) -> Option<String> {
    match unified.group_containing(stage) {
        Some(group) => Some(group.headword.clone()),
        None => {
            offenders.insert(stage.to_string());
            None
        }
    }
}

fn projected_label(
    prediction: &Prediction,
    unified: &UnifiedTaxonomy,
    offenders: &mut BTreeSet<String>,
) -> String {
    match &prediction.label {
        Label::Stage(s) => {
            project_stage(s, unified, offenders).unwrap_or_else(|| UNKNOWN_SENTINEL.to_string())
        }
        Label::None => NONE_SENTINEL.to_string(),
        Label::Unknown => UNKNOWN_SENTINEL.to_string(),
    }
}

#[derive(Serialize)]
struct InstructionEval {
    /// Instructions contributing: cell has exactly one truth stage.
    items: usize,
    accuracy: f64,
    mcc: f64,
    confusion: ConfusionMatrix,
    per_class: Vec<ClassScores>,
    /// Truth cells skipped because they carry several stages at once.
    multi_label_cells_skipped: usize,
}

#[derive(Serialize)]
struct CellEval {
    cells: usize,
    exact_match_rate: f64,
    mean_jaccard: f64,
    /// Truth cells whose stage set is empty (annotator left them blank).
    unlabeled_cells: usize,
}

#[derive(Serialize)]
struct ComparisonBlock {
    cochran_q: TestResult,
    pairwise: Vec<PairwiseComparison>,
}

#[derive(Serialize)]
struct DurationSummary {
    count: usize,
    total_ms: u64,
    mean_ms: f64,
    min_ms: u64,
    max_ms: u64,
}

#[derive(Serialize)]
struct PerplexitySummary {
    count: usize,
    mean: f64,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct EvaluationReport {
    taxonomy_version: String,
    alpha: f64,
    systems: Vec<String>,
    truth_records: usize,
    truth_unmatched_records: usize,
    instruction_eval: InstructionEval,
    cell_eval: CellEval,
    #[serde(skip_serializing_if = "Option::is_none")]
    instruction_comparison: Option<ComparisonBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cell_comparison: Option<ComparisonBlock>,
    durations: DurationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    perplexity: Option<PerplexitySummary>,
}

pub fn cmd_evaluate(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<(), CliError> {
    let cfg: &EvaluateConfig =
        crate::config::require_section(loaded.file.evaluate.as_ref(), "evaluate")?;
    let base = &loaded.base_dir;

    let tax_path = resolve(base, &cfg.taxonomy);
    let unified = UnifiedTaxonomy::load(&tax_path)?;
    let truth_tax_path = resolve(base, &cfg.truth_taxonomy);
    let truth_tax = StageTaxonomy::load(&truth_tax_path)?;
    let truth_path = resolve(base, &cfg.truth);
    if !truth_path.exists() {
        return Err(CliError::Usage(format!(
            "truth file {} does not exist",
            truth_path.display()
        )));
    }

    let corpus = super::corpus_paths(base, &Some(cfg.notebook_dir.clone()), &[])?;
    let notebooks = super::load_corpus(&corpus)?;

    // Ground truth: labeled cells rejoined onto the corpus, stage names
    // projected into the unified vocabulary.
    let records = load_cell_labels(&truth_path, &truth_tax)?;
    let rejoin = rejoin_cell_labels(&records, &notebooks);
    let mut offenders: BTreeSet<String> = BTreeSet::new();
    let mut truth_sets: BTreeMap<CellKey, BTreeSet<String>> = BTreeMap::new();
    for matched in &rejoin.matched {
        let record = &records[matched.record_index];
        let mut set = BTreeSet::new();
        for label in &record.labels {
            if let Some(headword) = project_stage(label, &unified, &mut offenders) {
                set.insert(headword);
            }
        }
        truth_sets.insert((matched.notebook_id.clone(), matched.cell_index), set);
    }
    if !offenders.is_empty() {
        return Err(CliError::Data(format!(
            "truth stages missing from taxonomy {}: {}",
            unified.version,
            offenders.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    // Prediction artifacts: the primary plus whatever it is compared with.
    let primary_path = resolve(base, &cfg.predictions);
    let mut systems = vec![load_predictions(&cfg.predictions, &primary_path)?];
    let mut system_paths: Vec<(String, PathBuf)> =
        vec![(cfg.predictions.clone(), primary_path.clone())];
    for rel in &cfg.compare_with {
        let path = resolve(base, rel);
        systems.push(load_predictions(rel, &path)?);
        system_paths.push((rel.clone(), path));
    }

    // Every comparison system must cover the primary's instructions, or the
    // pairing underneath McNemar breaks down.
    let primary = &systems[0];
    for other in &systems[1..] {
        let missing: Vec<&String> = primary
            .order
            .iter()
            .filter(|k| !other.by_key.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            let shown: Vec<String> = missing.iter().take(5).map(|k| k.to_string()).collect();
            return Err(CliError::Data(format!(
                "{} lacks {} of the primary artifact's instructions, e.g. {}",
                other.name,
                missing.len(),
                shown.join(", ")
            )));
        }
    }

    // Instruction mode: each instruction inherits its cell's truth stage;
    // cells with several stages have no single per-instruction answer.
    let single_truth: BTreeMap<&CellKey, &String> = truth_sets
        .iter()
        .filter(|(_, set)| set.len() == 1)
        .map(|(key, set)| (key, set.iter().next().expect("len checked")))
        .collect();
    let multi_label_cells_skipped = truth_sets.values().filter(|s| s.len() > 1).count();

    let mut instr_keys: Vec<&String> = Vec::new();
    let mut truth_labels: Vec<String> = Vec::new();
    for key in &primary.order {
        let record = &primary.by_key[key];
        let cell_key = (
            record.instruction.notebook_id.clone(),
            record.instruction.cell_index,
        );
        if let Some(stage) = single_truth.get(&cell_key) {
            instr_keys.push(key);
            truth_labels.push((*stage).clone());
        }
    }
    if instr_keys.is_empty() {
        return Err(CliError::Data(
            "no instruction has a single-stage truth cell; nothing to evaluate".into(),
        ));
    }

    let mut offenders = BTreeSet::new();
    let mut predicted_per_system: Vec<Vec<String>> = Vec::new();
    for system in &systems {
        let labels: Vec<String> = instr_keys
            .iter()
            .map(|key| projected_label(&system.by_key[*key], &unified, &mut offenders))
            .collect();
        predicted_per_system.push(labels);
    }
    if !offenders.is_empty() {
        return Err(CliError::Data(format!(
            "predicted stages missing from taxonomy {}: {}",
            unified.version,
            offenders.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let confusion = ConfusionMatrix::from_pairs(&truth_labels, &predicted_per_system[0])?;
    let instruction_eval = InstructionEval {
        items: instr_keys.len(),
        accuracy: confusion.accuracy(),
        mcc: mcc(&confusion),
        per_class: per_class_f1(&confusion),
        confusion,
        multi_label_cells_skipped,
    };

    // Cell mode: the aggregated stage set per cell against the truth set.
    let cell_keys: Vec<&CellKey> = truth_sets.keys().collect();
    let truth_vec: Vec<BTreeSet<String>> =
        cell_keys.iter().map(|k| truth_sets[*k].clone()).collect();
    let unlabeled_cells = truth_vec.iter().filter(|s| s.is_empty()).count();

    let mut offenders = BTreeSet::new();
    let mut cell_sets_per_system: Vec<Vec<BTreeSet<String>>> = Vec::new();
    for system in &systems {
        let mut grouped: BTreeMap<CellKey, Vec<Prediction>> = BTreeMap::new();
        for key in &system.order {
            let record = &system.by_key[key];
            grouped
                .entry((
                    record.instruction.notebook_id.clone(),
                    record.instruction.cell_index,
                ))
                .or_default()
                .push(record.clone());
        }
        let mut sets = Vec::with_capacity(cell_keys.len());
        for cell_key in &cell_keys {
            let set = match grouped.get(*cell_key) {
                Some(preds) => {
                    let cell = aggregate_cell(preds)?;
                    cell.stages
                        .iter()
                        .filter_map(|s| project_stage(s, &unified, &mut offenders))
                        .collect()
                }
                // A truth cell the classifier never saw predicts nothing.
                None => BTreeSet::new(),
            };
            sets.push(set);
        }
        cell_sets_per_system.push(sets);
    }
    if !offenders.is_empty() {
        return Err(CliError::Data(format!(
            "predicted stages missing from taxonomy {}: {}",
            unified.version,
            offenders.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let (primary_cell_valid, jaccard) = binarize_sets(&truth_vec, &cell_sets_per_system[0])?;
    let cell_eval = CellEval {
        cells: cell_keys.len(),
        exact_match_rate: primary_cell_valid.iter().filter(|v| **v).count() as f64
            / primary_cell_valid.len() as f64,
        mean_jaccard: jaccard.iter().sum::<f64>() / jaccard.len() as f64,
        unlabeled_cells,
    };

    // Paired significance tests appear once there is something to pair.
    let (instruction_comparison, cell_comparison) = if systems.len() >= 2 {
        let instr_treatments: Vec<(String, Vec<bool>)> = systems
            .iter()
            .zip(&predicted_per_system)
            .map(|(system, predicted)| {
                binarize(&truth_labels, predicted).map(|v| (system.name.clone(), v))
            })
            .collect::<Result<_, _>>()?;
        let cell_treatments: Vec<(String, Vec<bool>)> = systems
            .iter()
            .zip(&cell_sets_per_system)
            .map(|(system, sets)| {
                binarize_sets(&truth_vec, sets).map(|(v, _)| (system.name.clone(), v))
            })
            .collect::<Result<_, _>>()?;
        (
            Some(ComparisonBlock {
                cochran_q: cochran_q(&instr_treatments, cfg.alpha)?,
                pairwise: posthoc_mcnemar(&instr_treatments, cfg.alpha)?,
            }),
            Some(ComparisonBlock {
                cochran_q: cochran_q(&cell_treatments, cfg.alpha)?,
                pairwise: posthoc_mcnemar(&cell_treatments, cfg.alpha)?,
            }),
        )
    } else {
        (None, None)
    };

    let durations: Vec<u64> = primary
        .order
        .iter()
        .map(|k| primary.by_key[k].duration_ms)
        .collect();
    let duration_summary = DurationSummary {
        count: durations.len(),
        total_ms: durations.iter().sum(),
        mean_ms: durations.iter().sum::<u64>() as f64 / durations.len() as f64,
        min_ms: *durations.iter().min().expect("non-empty checked"),
        max_ms: *durations.iter().max().expect("non-empty checked"),
    };
    let perplexities: Vec<f64> = primary
        .order
        .iter()
        .filter_map(|k| primary.by_key[k].perplexity)
        .collect();
    let perplexity_summary = if perplexities.is_empty() {
        None
    } else {
        Some(PerplexitySummary {
            count: perplexities.len(),
            mean: perplexities.iter().sum::<f64>() / perplexities.len() as f64,
            min: perplexities.iter().cloned().fold(f64::INFINITY, f64::min),
            max: perplexities
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
        })
    };

    let report = EvaluationReport {
        taxonomy_version: unified.version.clone(),
        alpha: cfg.alpha,
        systems: systems.iter().map(|s| s.name.clone()).collect(),
        truth_records: records.len(),
        truth_unmatched_records: rejoin.unmatched.len(),
        instruction_eval,
        cell_eval,
        instruction_comparison,
        cell_comparison,
        durations: duration_summary,
        perplexity: perplexity_summary,
    };

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;
    let out_path = out_dir.join("evaluation.toml");
    std::fs::write(
        &out_path,
        toml::to_string_pretty(&report)
            .map_err(|e| CliError::Data(format!("report serialization: {e}")))?,
    )
    .map_err(|e| crate::io_data(&out_path, e))?;

    let mut manifest = RunManifest::new("evaluate", &loaded.raw);
    manifest.taxonomy_version = Some(unified.version.clone());
    manifest.add_input(&cfg.taxonomy, &tax_path)?;
    manifest.add_input(&cfg.truth_taxonomy, &truth_tax_path)?;
    manifest.add_input(&cfg.truth, &truth_path)?;
    for (label, path) in &system_paths {
        manifest.add_input(label, path)?;
    }
    for path in &corpus {
        manifest.add_input(&path.display().to_string(), path)?;
    }
    manifest.add_output(&out_path);
    manifest.write(&out_dir)?;

    println!(
        "evaluated {} instructions / {} cells for {} system(s) -> {}",
        report.instruction_eval.items,
        report.cell_eval.cells,
        report.systems.len(),
        out_path.display()
    );
    Ok(())
}
