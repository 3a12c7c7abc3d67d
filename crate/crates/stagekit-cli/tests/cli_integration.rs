//! End-to-end tests of the `stagekit` binary: the full pipeline over the
//! bundled fixtures, artifact shapes, resume behavior, and the exit-code
//! contract (1 usage, 2 data integrity, 3 backend).

use std::path::{Path, PathBuf};
use std::process::Output;

use stagekit::taxonomy::UnifiedTaxonomy;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory exists")
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name == "out" || name == "out_rule" {
            continue;
        }
        let src = entry.path();
        let dst = to.join(&name);
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&src, &dst);
        } else {
            std::fs::copy(&src, &dst).unwrap();
        }
    }
}

/// Copies the fixture tree into a fresh temp dir and returns it; commands
/// run against the copy so tests never dirty the checked-in fixtures.
fn stage() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixtures_dir(), dir.path());
    dir
}

fn run(config: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_stagekit"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("spawn stagekit")
}

fn assert_ok(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited normally")
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let staged = stage();
    let configs = staged.path().join("configs");
    let out = configs.join("out");

    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");
    assert!(out.join("unified.toml").exists());
    assert!(out.join("unify.manifest.toml").exists());
    let unified = UnifiedTaxonomy::load(&out.join("unified.toml")).unwrap();
    assert!(!unified.groups().is_empty());

    assert_ok(&run(&configs.join("mutate.toml"), &["mutate"]), "mutate");
    for i in 1..=4 {
        assert!(
            out.join(format!("mutated_{i}.toml")).exists(),
            "mutated_{i}.toml missing"
        );
    }
    let last = UnifiedTaxonomy::load(&out.join("mutated_4.toml")).unwrap();
    assert_eq!(last.mutations().len(), 4);
    assert!(last.version.starts_with("unified-v1+m1:"));

    assert_ok(
        &run(&configs.join("classify_rule.toml"), &["classify"]),
        "rule classify",
    );
    let rule_out = configs.join("out_rule");
    assert!(rule_out.join("predictions.jsonl").exists());
    assert!(rule_out.join("cell_predictions.jsonl").exists());
    assert!(rule_out.join("corpus_summary.toml").exists());

    assert_ok(
        &run(&configs.join("classify_replay.toml"), &["classify"]),
        "replay classify",
    );
    let predictions = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    assert!(predictions.lines().count() > 100);
    for line in predictions.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(
            record.get("instruction").is_some(),
            "prediction lacks provenance"
        );
        assert!(
            record.get("config_hash").is_some(),
            "prediction lacks config hash"
        );
    }

    assert_ok(
        &run(&configs.join("evaluate.toml"), &["evaluate"]),
        "evaluate",
    );
    let evaluation: toml::Value =
        toml::from_str(&std::fs::read_to_string(out.join("evaluation.toml")).unwrap()).unwrap();
    assert!(evaluation.get("instruction_eval").is_some());
    assert!(evaluation.get("cell_eval").is_some());
    assert!(
        evaluation.get("instruction_comparison").is_some(),
        "comparison block missing despite compare_with"
    );

    assert_ok(
        &run(&configs.join("insights.toml"), &["insights"]),
        "insights",
    );
    assert!(out.join("insights.toml").exists());
    assert!(out.join("transitions.tsv").exists());
    assert!(out.join("transitions_raw.tsv").exists());
    let transitions = std::fs::read_to_string(out.join("transitions.tsv")).unwrap();
    assert!(transitions.starts_with("stage\t"));

    assert_ok(&run(&configs.join("report.toml"), &["report"]), "report");
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("## "), "report has no sections");
    assert!(report.contains("|"), "report has no tables");
}

#[test]
fn classify_is_deterministic_across_parallelism() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");

    assert_ok(
        &run(
            &configs.join("classify_replay.toml"),
            &["classify", "--parallelism", "1"],
        ),
        "serial classify",
    );
    let serial = std::fs::read(configs.join("out/predictions.jsonl")).unwrap();

    assert_ok(
        &run(
            &configs.join("classify_replay.toml"),
            &["classify", "--parallelism", "8"],
        ),
        "parallel classify",
    );
    let parallel = std::fs::read(configs.join("out/predictions.jsonl")).unwrap();

    assert_eq!(serial, parallel, "artifact depends on worker count");
}

#[test]
fn resume_completes_a_truncated_artifact_identically() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");
    assert_ok(
        &run(&configs.join("classify_replay.toml"), &["classify"]),
        "full run",
    );

    let artifact = configs.join("out/predictions.jsonl");
    let full = std::fs::read_to_string(&artifact).unwrap();
    let prefix: String = full.lines().take(40).map(|l| format!("{l}\n")).collect();
    std::fs::write(&artifact, &prefix).unwrap();

    let config_path = configs.join("classify_replay.toml");
    let resumed_config = std::fs::read_to_string(&config_path)
        .unwrap()
        .replace("[classify]\n", "[classify]\nresume = true\n");
    std::fs::write(&config_path, resumed_config).unwrap();

    let output = run(&config_path, &["classify"]);
    assert_ok(&output, "resumed run");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("(40 reused)"),
        "resume did not reuse the prefix: {stdout}"
    );
    let resumed = std::fs::read_to_string(&artifact).unwrap();
    assert_eq!(
        resumed, full,
        "resumed artifact differs from a single full run"
    );
}

#[test]
fn resume_rejects_an_artifact_from_another_config() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");
    assert_ok(
        &run(&configs.join("classify_replay.toml"), &["classify"]),
        "full run",
    );

    let artifact = configs.join("out/predictions.jsonl");
    let text = std::fs::read_to_string(&artifact).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let hash = first["config_hash"].as_str().unwrap().to_string();
    std::fs::write(&artifact, text.replace(&hash, &"0".repeat(64))).unwrap();

    let config_path = configs.join("classify_replay.toml");
    let resumed_config = std::fs::read_to_string(&config_path)
        .unwrap()
        .replace("[classify]\n", "[classify]\nresume = true\n");
    std::fs::write(&config_path, resumed_config).unwrap();

    let output = run(&config_path, &["classify"]);
    assert_eq!(
        exit_code(&output),
        2,
        "foreign artifact must be a data error"
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("delete the artifact or disable resume"),
        "unexpected message: {stderr}"
    );
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_stagekit"))
        .arg("unify")
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("broken.toml");
    std::fs::write(&config, "[unify\nnot toml at all").unwrap();
    let output = run(&config, &["unify"]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn missing_section_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("empty.toml");
    std::fs::write(&config, "# no sections\n").unwrap();
    for subcommand in [
        "unify", "mutate", "classify", "evaluate", "insights", "report",
    ] {
        let output = run(&config, &[subcommand]);
        assert_eq!(exit_code(&output), 1, "`{subcommand}` without its section");
    }
}

#[test]
fn cassette_miss_is_a_data_error() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");

    let cassette = staged.path().join("cassettes/baseline.jsonl");
    let text = std::fs::read_to_string(&cassette).unwrap();
    let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    std::fs::write(&cassette, truncated).unwrap();

    let output = run(&configs.join("classify_replay.toml"), &["classify"]);
    assert_eq!(exit_code(&output), 2, "a replay miss must be a data error");
}

#[test]
fn unreachable_live_endpoint_is_a_backend_error_with_artifact_kept() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");

    let config_path = configs.join("classify_live.toml");
    std::fs::write(
        &config_path,
        r#"[classify]
backend = "slm"
notebooks = ["../notebooks/iris_species.ipynb"]
taxonomy = "out/unified.toml"
template = "../prompts/baseline.prompt"
output_dir = "out_live"
parallelism = 8

[classify.decoding]
temperature = 0.0
top_p = 1.0
max_tokens = 8
logprobs = true

[classify.endpoint]
base_url = "http://127.0.0.1:1"
model = "stagekit-test-7b"
timeout_ms = 500
mode = "live"
"#,
    )
    .unwrap();

    let output = run(&config_path, &["classify"]);
    assert_eq!(
        exit_code(&output),
        3,
        "an unreachable endpoint must be a backend error"
    );
    let artifact = configs.join("out_live/predictions.jsonl");
    assert!(
        artifact.exists(),
        "failed predictions must be kept for inspection"
    );
    let text = std::fs::read_to_string(&artifact).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            record["outcome"]["status"], "failed",
            "unexpected outcome in {line}"
        );
    }
}

#[test]
fn empty_corpus_warns_and_writes_empty_artifacts() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");

    std::fs::create_dir(staged.path().join("empty_notebooks")).unwrap();
    let config_path = configs.join("classify_rule.toml");
    let empty_config = std::fs::read_to_string(&config_path)
        .unwrap()
        .replace("\"../notebooks\"", "\"../empty_notebooks\"");
    std::fs::write(&config_path, empty_config).unwrap();

    let output = run(&config_path, &["classify"]);
    assert_ok(&output, "classify over an empty corpus");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("corpus is empty"),
        "missing warning: {stderr}"
    );
    let predictions = std::fs::read_to_string(configs.join("out_rule/predictions.jsonl")).unwrap();
    assert!(predictions.is_empty(), "empty corpus produced predictions");
}

#[test]
fn overbudget_synonym_chain_stops_at_the_failing_step() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");

    let config_path = configs.join("mutate.toml");
    let overbudget = std::fs::read_to_string(&config_path)
        .unwrap()
        .replace("synonyms.toml", "synonyms_overbudget.toml");
    std::fs::write(&config_path, overbudget).unwrap();

    let output = run(&config_path, &["mutate"]);
    assert_eq!(
        exit_code(&output),
        2,
        "an overbudget chain must be a data error"
    );
    let out = configs.join("out");
    assert!(
        out.join("mutated_3.toml").exists(),
        "steps before the failure are artifacts"
    );
    assert!(
        !out.join("mutated_4.toml").exists(),
        "the failing step must not produce output"
    );
}

#[test]
fn evaluate_rejects_truth_labels_outside_the_taxonomy() {
    let staged = stage();
    let configs = staged.path().join("configs");
    assert_ok(&run(&configs.join("unify.toml"), &["unify"]), "unify");
    assert_ok(
        &run(&configs.join("classify_rule.toml"), &["classify"]),
        "rule classify",
    );
    assert_ok(
        &run(&configs.join("classify_replay.toml"), &["classify"]),
        "replay classify",
    );

    // The truth table's stage columns are daswow headwords; declaring the
    // other source as the truth taxonomy leaves no recognizable column.
    let config_path = configs.join("evaluate.toml");
    let mismatched = std::fs::read_to_string(&config_path)
        .unwrap()
        .replace("daswow.toml", "dspipelines.toml");
    std::fs::write(&config_path, mismatched).unwrap();

    let output = run(&config_path, &["evaluate"]);
    assert_eq!(
        exit_code(&output),
        2,
        "unmatchable truth labels must be a data error"
    );
}

#[test]
fn report_without_inputs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("report.toml");
    std::fs::write(&config, "[report]\noutput_dir = \"out\"\n").unwrap();
    let output = run(&config, &["report"]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn unify_applies_overrides_and_removals() {
    let staged = stage();
    let configs = staged.path().join("configs");
    let config_path = configs.join("unify.toml");
    let customized = std::fs::read_to_string(&config_path).unwrap()
        + "remove_unmatched = [\"Monitoring\"]\nheadword_overrides = { \"Modeling\" = \"Model Phase\" }\n";
    std::fs::write(&config_path, customized).unwrap();

    assert_ok(&run(&config_path, &["unify"]), "unify with options");
    let unified = UnifiedTaxonomy::load(&configs.join("out/unified.toml")).unwrap();
    assert!(
        unified.groups().iter().any(|g| g.headword == "Model Phase"),
        "headword override not applied"
    );
    assert!(
        unified.group_containing("Monitoring").is_none(),
        "removed stage still grouped"
    );
}
