use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use stagekit::classify::{
    aggregate_cell, classify_rule_based, classify_slm, Backend, ClassifierConfig, ClassifyError,
    Prediction, PredictionOutcome, PromptTemplate,
};
use stagekit::inference::InferenceClient;
use stagekit::ingest::{extract_notebook, IngestSummary, Instruction, Notebook, StaticMapping};
use stagekit::taxonomy::UnifiedTaxonomy;

use crate::config::{resolve, BackendChoice, ClassifyConfig, LoadedConfig};
use crate::manifest::RunManifest;
use crate::CliError;

/// Instructions classified between flushes to the artifact; bounds how much
/// work an interrupt can lose while keeping the file a valid prefix.
const CHUNK: usize = 64;

struct Workload {
    /// (corpus notebook index, instruction), in enumeration order.
    items: Vec<(usize, Instruction)>,
    summaries: Vec<IngestSummary>,
}

fn enumerate_corpus(notebooks: &[Notebook]) -> Workload {
    let mut items = Vec::new();
    let mut summaries = Vec::new();
    for (nb_index, notebook) in notebooks.iter().enumerate() {
        let (extractions, summary) = extract_notebook(notebook);
        for extraction in extractions {
            for instr in extraction.instructions {
                items.push((nb_index, instr));
            }
        }
        summaries.push(summary);
    }
    Workload { items, summaries }
}

/// Loads an existing artifact for resumption: every record must carry the
/// current config hash, otherwise the old run and this one would disagree
/// about what a prediction means.
fn load_existing(path: &Path, config_hash: &str) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_data(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Prediction = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if record.config_hash != config_hash {
            return Err(CliError::Data(format!(
                "{} line {}: record config hash {} does not match this run's {}; \
                 delete the artifact or disable resume",
                path.display(),
                i + 1,
                record.config_hash,
                config_hash
            )));
        }
        records.push(record);
    }
    Ok(records)
}

enum BackendRunner<'a> {
    Rule {
        mapping: &'a StaticMapping,
    },
    Slm {
        template: &'a PromptTemplate,
        taxonomy: &'a UnifiedTaxonomy,
        client: &'a InferenceClient,
    },
}

impl BackendRunner<'_> {
    fn classify(
        &self,
        instr: &Instruction,
        notebook: &Notebook,
        cfg: &ClassifierConfig,
        config_hash: &str,
    ) -> Result<Prediction, ClassifyError> {
        match self {
            BackendRunner::Rule { mapping } => Ok(classify_rule_based(instr, mapping, config_hash)),
            BackendRunner::Slm {
                template,
                taxonomy,
                client,
            } => classify_slm(instr, notebook, template, taxonomy, cfg, client),
        }
    }
}

pub fn cmd_classify(
    loaded: &LoadedConfig,
    output_override: Option<&Path>,
    parallelism_override: Option<usize>,
) -> Result<(), CliError> {
    let cfg: &ClassifyConfig =
        crate::config::require_section(loaded.file.classify.as_ref(), "classify")?;
    let base = &loaded.base_dir;

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;
    let predictions_path = out_dir.join("predictions.jsonl");
    let cells_path = out_dir.join("cell_predictions.jsonl");
    let summary_path = out_dir.join("corpus_summary.toml");

    let tax_path = resolve(base, &cfg.taxonomy);
    let taxonomy = UnifiedTaxonomy::load(&tax_path)?;

    let paths = super::corpus_paths(base, &cfg.notebook_dir, &cfg.notebooks)?;
    let notebooks = super::load_corpus(&paths)?;

    // Inputs the rule backend needs.
    let mut static_mapping: Option<StaticMapping> = None;
    let mut extra_inputs: Vec<(String, PathBuf)> = Vec::new();
    // Inputs the model backend needs.
    let mut template: Option<PromptTemplate> = None;
    let mut endpoint = cfg.endpoint.clone();

    let classifier = match cfg.backend {
        BackendChoice::Rule => {
            let codes_rel = cfg.stage_codes.as_ref().ok_or_else(|| {
                CliError::Usage("rule backend requires stage_codes in [classify]".into())
            })?;
            let csv_rel = cfg.stages_csv.as_ref().ok_or_else(|| {
                CliError::Usage("rule backend requires stages_csv in [classify]".into())
            })?;
            let codes_path = resolve(base, codes_rel);
            let csv_path = resolve(base, csv_rel);
            let legend = stagekit::ingest::load_stage_legend(&codes_path)?;
            static_mapping = Some(stagekit::ingest::load_static_mapping(&csv_path, &legend)?);
            extra_inputs.push((codes_rel.clone(), codes_path));
            extra_inputs.push((csv_rel.clone(), csv_path));
            ClassifierConfig {
                backend: Backend::Rule,
                taxonomy_version: taxonomy.version.clone(),
                template_id: None,
                decoding: cfg.decoding.clone().unwrap_or_else(default_decoding),
                endpoint: None,
                retry_base_ms: 250,
            }
        }
        BackendChoice::Slm => {
            let template_rel = cfg.template.as_ref().ok_or_else(|| {
                CliError::Usage("slm backend requires template in [classify]".into())
            })?;
            let template_path = resolve(base, template_rel);
            let loaded_template = PromptTemplate::load(&template_path)?;
            extra_inputs.push((template_rel.clone(), template_path));
            // The cassette lives wherever the config says, relative to the
            // config file like every other path.
            if let Some(ep) = endpoint.as_mut() {
                if let Some(cassette) = ep.cassette_path.take() {
                    ep.cassette_path = Some(resolve(base, &cassette.to_string_lossy()));
                }
            }
            let config = ClassifierConfig {
                backend: Backend::Slm,
                taxonomy_version: taxonomy.version.clone(),
                template_id: Some(loaded_template.id.clone()),
                decoding: cfg.decoding.clone().unwrap_or_else(default_decoding),
                endpoint: endpoint.clone(),
                retry_base_ms: 250,
            };
            template = Some(loaded_template);
            config
        }
    };
    classifier.validate(&taxonomy)?;
    let config_hash = classifier.hash();

    let workload = enumerate_corpus(&notebooks);
    if notebooks.is_empty() {
        eprintln!("warning: corpus is empty; writing empty artifacts");
    }

    // Resume: anything already recorded under this exact configuration is
    // kept verbatim and skipped.
    let mut existing: Vec<Prediction> = Vec::new();
    if cfg.resume && predictions_path.exists() {
        existing = load_existing(&predictions_path, &config_hash)?;
    }
    let done: BTreeSet<String> = existing.iter().map(|p| p.instruction.key()).collect();
    let pending: Vec<&(usize, Instruction)> = workload
        .items
        .iter()
        .filter(|(_, instr)| !done.contains(&instr.key()))
        .collect();

    let client;
    let runner = match cfg.backend {
        BackendChoice::Rule => BackendRunner::Rule {
            mapping: static_mapping.as_ref().expect("loaded above"),
        },
        BackendChoice::Slm => {
            let endpoint_cfg = classifier.endpoint.clone().ok_or_else(|| {
                CliError::Usage("slm backend requires endpoint in [classify]".into())
            })?;
            client = InferenceClient::new(endpoint_cfg)?;
            BackendRunner::Slm {
                template: template.as_ref().expect("loaded above"),
                taxonomy: &taxonomy,
                client: &client,
            }
        }
    };

    let parallelism = parallelism_override.unwrap_or(cfg.parallelism).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&predictions_path)
        .map_err(|e| crate::io_data(&predictions_path, e))?;
    if !cfg.resume && existing.is_empty() {
        // A fresh run must not append to leftovers.
        file.set_len(0)
            .map_err(|e| crate::io_data(&predictions_path, e))?;
    }

    let mut new_predictions: Vec<Prediction> = Vec::new();
    for chunk in pending.chunks(CHUNK) {
        let results: Vec<Result<Prediction, ClassifyError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(nb_index, instr)| {
                    runner.classify(instr, &notebooks[*nb_index], &classifier, &config_hash)
                })
                .collect()
        });
        for result in results {
            let prediction = result?;
            let line = serde_json::to_string(&prediction)
                .map_err(|e| CliError::Data(format!("prediction serialization: {e}")))?;
            writeln!(file, "{line}").map_err(|e| crate::io_data(&predictions_path, e))?;
            new_predictions.push(prediction);
        }
        file.flush()
            .map_err(|e| crate::io_data(&predictions_path, e))?;
    }
    drop(file);

    // A run where every fresh prediction failed at the endpoint produced no
    // information; surface it as the backend failure it is.
    if !new_predictions.is_empty()
        && new_predictions
            .iter()
            .all(|p| matches!(p.outcome, PredictionOutcome::Failed { .. }))
    {
        return Err(CliError::Backend(format!(
            "all {} predictions failed at the endpoint; artifact kept at {}",
            new_predictions.len(),
            predictions_path.display()
        )));
    }

    // Cell-level aggregation over the complete set, in enumeration order.
    let mut by_key: BTreeMap<String, Prediction> = BTreeMap::new();
    for p in existing.into_iter().chain(new_predictions.into_iter()) {
        by_key.insert(p.instruction.key(), p);
    }
    let mut cells_file =
        std::fs::File::create(&cells_path).map_err(|e| crate::io_data(&cells_path, e))?;
    let mut cell_group: Vec<Prediction> = Vec::new();
    let mut current_cell: Option<(String, usize)> = None;
    let flush_cell =
        |group: &mut Vec<Prediction>, out: &mut std::fs::File| -> Result<(), CliError> {
            if group.is_empty() {
                return Ok(());
            }
            let cell = aggregate_cell(group)?;
            let line = serde_json::to_string(&cell)
                .map_err(|e| CliError::Data(format!("cell serialization: {e}")))?;
            writeln!(out, "{line}").map_err(|e| crate::io_data(&cells_path, e))?;
            group.clear();
            Ok(())
        };
    for (nb_index, instr) in &workload.items {
        let key = instr.key();
        let Some(prediction) = by_key.get(&key) else {
            return Err(CliError::Data(format!(
                "instruction {key} has no prediction after classification"
            )));
        };
        let cell_id = (notebooks[*nb_index].id.clone(), instr.cell_index);
        if current_cell.as_ref() != Some(&cell_id) {
            flush_cell(&mut cell_group, &mut cells_file)?;
            current_cell = Some(cell_id);
        }
        cell_group.push(prediction.clone());
    }
    flush_cell(&mut cell_group, &mut cells_file)?;
    drop(cells_file);

    let summary = CorpusSummary::collect(&workload.summaries);
    std::fs::write(
        &summary_path,
        toml::to_string_pretty(&summary)
            .map_err(|e| CliError::Data(format!("summary serialization: {e}")))?,
    )
    .map_err(|e| crate::io_data(&summary_path, e))?;

    let mut manifest = RunManifest::new("classify", &loaded.raw);
    manifest.taxonomy_version = Some(taxonomy.version.clone());
    manifest.classifier_config_hash = Some(config_hash.clone());
    manifest.add_input(&cfg.taxonomy, &tax_path)?;
    for path in &paths {
        manifest.add_input(&path.display().to_string(), path)?;
    }
    for (label, path) in &extra_inputs {
        manifest.add_input(label, path)?;
    }
    if let Some(ep) = &classifier.endpoint {
        if let Some(cassette) = &ep.cassette_path {
            if cassette.exists() {
                manifest.add_input("cassette", cassette)?;
            }
        }
    }
    manifest.add_output(&predictions_path);
    manifest.add_output(&cells_path);
    manifest.add_output(&summary_path);
    manifest.write(&out_dir)?;

    println!(
        "classified {} instructions ({} reused) across {} notebooks -> {}",
        workload.items.len(),
        done.len(),
        notebooks.len(),
        predictions_path.display()
    );
    Ok(())
}

fn default_decoding() -> stagekit::inference::DecodingParams {
    stagekit::inference::DecodingParams {
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 16,
        logprobs: true,
    }
}

#[derive(serde::Serialize)]
struct CorpusSummary {
    notebooks: usize,
    code_cells: usize,
    instructions: usize,
    excluded_lines: usize,
    unparseable_cells: usize,
    #[serde(rename = "notebook")]
    per_notebook: Vec<IngestSummary>,
}

impl CorpusSummary {
    fn collect(summaries: &[IngestSummary]) -> Self {
        CorpusSummary {
            notebooks: summaries.len(),
            code_cells: summaries.iter().map(|s| s.code_cells).sum(),
            instructions: summaries.iter().map(|s| s.instructions).sum(),
            excluded_lines: summaries.iter().map(|s| s.excluded_lines).sum(),
            unparseable_cells: summaries.iter().map(|s| s.unparseable_cells.len()).sum(),
            per_notebook: summaries.to_vec(),
        }
    }
}
