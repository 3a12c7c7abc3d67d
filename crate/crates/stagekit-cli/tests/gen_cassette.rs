//! Regenerates the checked-in replay cassette from the fixture corpus.
//! Run explicitly after changing notebooks, taxonomies, or the prompt
//! template:
//!
//! ```text
//! cargo test -p stagekit-cli --test gen_cassette -- --ignored
//! ```
//!
//! Responses are fabricated deterministically per instruction (seeded by the
//! instruction key), mixing exact headwords, decorated variants, aliases,
//! wrong answers, junk, and truncations so downstream evaluation has
//! realistic texture.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use stagekit::classify::{
    default_token_estimate, render_prompt, Backend, ClassifierConfig, PromptTemplate,
};
use stagekit::inference::{request_hash, CassetteRecord, InferenceResponse};
use stagekit::ingest::{extract_notebook, load_cell_labels, load_notebook, rejoin_cell_labels};
use stagekit::taxonomy::{StageTaxonomy, UnifiedTaxonomy};
use stagekit_cli::commands::cmd_unify;
use stagekit_cli::config::load_config;

const BASE_EPOCH_MS: u64 = 1_755_600_000_000;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory exists")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn seed_for(key: &str) -> u64 {
    let digest = Sha256::digest(format!("cassette:{key}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn preview(prompt: &str) -> String {
    prompt
        .chars()
        .map(|c| if c == '\n' { ' ' } else { c })
        .take(120)
        .collect()
}

fn logprobs_for(rng: &mut ChaCha8Rng, text: &str, confident: bool) -> Vec<f64> {
    let n = default_token_estimate(text).max(1) as usize;
    (0..n)
        .map(|_| {
            if confident {
                -rng.random_range(0.01..0.15)
            } else {
                -rng.random_range(0.8..2.5)
            }
        })
        .collect()
}

#[test]
#[ignore = "regenerates fixtures/cassettes/baseline.jsonl in place"]
fn generate_baseline_cassette() {
    let fixtures = fixtures_dir();

    // The unified taxonomy the replay config reads; produced by the same
    // command the test flow uses, so prompts match byte for byte.
    let unify_config = load_config(&fixtures.join("configs/unify.toml")).expect("unify config");
    cmd_unify(&unify_config, None).expect("unify");

    let replay_config =
        load_config(&fixtures.join("configs/classify_replay.toml")).expect("replay config");
    let section = replay_config.file.classify.as_ref().expect("[classify]");
    let base = &replay_config.base_dir;

    let unified = UnifiedTaxonomy::load(&base.join(&section.taxonomy)).expect("unified taxonomy");
    let template =
        PromptTemplate::load(&base.join(section.template.as_ref().expect("template path")))
            .expect("template");
    let endpoint = section.endpoint.clone().expect("endpoint");
    let decoding = section.decoding.clone().expect("decoding");
    let classifier = ClassifierConfig {
        backend: Backend::Slm,
        taxonomy_version: unified.version.clone(),
        template_id: Some(template.id.clone()),
        decoding: decoding.clone(),
        endpoint: Some(endpoint.clone()),
        retry_base_ms: 250,
    };
    classifier.validate(&unified).expect("valid config");

    let notebook_dir = base.join(section.notebook_dir.as_ref().expect("notebook_dir"));
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&notebook_dir)
        .expect("notebook dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "ipynb"))
        .collect();
    paths.sort();
    let notebooks: Vec<_> = paths
        .iter()
        .map(|p| load_notebook(p).expect("notebook"))
        .collect();

    // Ground-truth stage sets drive the fabricated answers so evaluation
    // sees a mostly-right classifier rather than noise.
    let daswow = StageTaxonomy::load(&fixtures.join("taxonomies/daswow.toml")).expect("daswow");
    let records =
        load_cell_labels(&fixtures.join("labels/corpus_labels.csv"), &daswow).expect("labels");
    let rejoin = rejoin_cell_labels(&records, &notebooks);
    assert!(
        rejoin.unmatched.is_empty(),
        "label fixture must rejoin fully, {} unmatched",
        rejoin.unmatched.len()
    );
    let mut truth: BTreeMap<(String, usize), Vec<String>> = BTreeMap::new();
    for matched in &rejoin.matched {
        let record = &records[matched.record_index];
        let headwords: BTreeSet<String> = record
            .labels
            .iter()
            .map(|l| {
                unified
                    .group_containing(l)
                    .unwrap_or_else(|| panic!("stage {l} not in unified taxonomy"))
                    .headword
                    .clone()
            })
            .collect();
        truth.insert(
            (matched.notebook_id.clone(), matched.cell_index),
            headwords.into_iter().collect(),
        );
    }

    let headwords: Vec<String> = unified
        .groups()
        .iter()
        .map(|g| g.headword.clone())
        .collect();

    let cassette_path = fixtures.join("cassettes/baseline.jsonl");
    std::fs::create_dir_all(cassette_path.parent().expect("parent")).expect("cassette dir");
    let mut out = std::fs::File::create(&cassette_path).expect("cassette file");

    let mut lines = 0usize;
    let mut correct = 0usize;
    for notebook in &notebooks {
        let (extractions, _) = extract_notebook(notebook);
        for extraction in &extractions {
            for instr in &extraction.instructions {
                let prompt =
                    render_prompt(&template, instr, notebook, &unified).expect("prompt renders");
                let hash = request_hash(&endpoint.model, &prompt, &decoding);
                let mut rng = ChaCha8Rng::seed_from_u64(seed_for(&instr.key()));

                let cell_truth = truth
                    .get(&(notebook.id.clone(), instr.cell_index))
                    .filter(|v| !v.is_empty());
                let intended = match cell_truth {
                    Some(stages) => stages[rng.random_range(0..stages.len())].clone(),
                    None => headwords[rng.random_range(0..headwords.len())].clone(),
                };
                let group = unified
                    .groups()
                    .iter()
                    .find(|g| g.headword == intended)
                    .expect("intended stage exists");

                let roll = rng.random_range(0..100u32);
                let (text, finish_reason, confident) = if roll < 62 {
                    (intended.clone(), "stop", true)
                } else if roll < 72 {
                    let decorated = match rng.random_range(0..4u32) {
                        0 => format!(" {intended}\n"),
                        1 => format!("{intended}."),
                        2 => format!("\"{intended}\""),
                        _ => intended.to_lowercase(),
                    };
                    (decorated, "stop", true)
                } else if roll < 80 {
                    let aliases: Vec<&String> = group.aliases.iter().collect();
                    if aliases.is_empty() {
                        (intended.clone(), "stop", true)
                    } else {
                        (
                            aliases[rng.random_range(0..aliases.len())].clone(),
                            "stop",
                            true,
                        )
                    }
                } else if roll < 88 {
                    let mut other = headwords[rng.random_range(0..headwords.len())].clone();
                    while other == intended {
                        other = headwords[rng.random_range(0..headwords.len())].clone();
                    }
                    (other, "stop", false)
                } else if roll < 97 {
                    let junk = [
                        "I cannot determine the stage.",
                        "classification",
                        "N/A",
                        "Stage: ???",
                        "none of the above",
                    ];
                    (
                        junk[rng.random_range(0..junk.len())].to_string(),
                        "stop",
                        false,
                    )
                } else {
                    let cut: String = intended.chars().take(3).collect();
                    (cut, "length", false)
                };

                let logprobs = logprobs_for(&mut rng, &text, confident);
                let completion_tokens = logprobs.len() as u64;
                let first_token_ms = BASE_EPOCH_MS + rng.random_range(0..5_000);
                let last_token_ms = first_token_ms + rng.random_range(40..900);
                let response = InferenceResponse {
                    text: text.clone(),
                    logprobs: Some(logprobs),
                    first_token_ms,
                    last_token_ms,
                    completion_tokens: Some(completion_tokens),
                    finish_reason: Some(finish_reason.to_string()),
                };
                let record = CassetteRecord {
                    request_hash: hash,
                    model: endpoint.model.clone(),
                    prompt_digest: sha256_hex(prompt.as_bytes()),
                    prompt_preview: preview(&prompt),
                    response,
                };
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&record).expect("serializes")
                )
                .expect("write");
                lines += 1;
                if finish_reason == "stop" && confident {
                    correct += 1;
                }
            }
        }
    }
    println!(
        "cassette: {lines} responses ({correct} on-target) -> {}",
        cassette_path.display()
    );
    assert!(lines > 100, "corpus should yield a substantial cassette");
}
