//! Cross-mapping TOML loader against two fixed taxonomies. Accepted files
//! must produce pairs whose endpoints all resolve in their taxonomies with
//! the canonical surface form.

#![no_main]

use std::io::Write;
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use stagekit::taxonomy::{load_cross_mapping, Stage, StageTaxonomy};

fn taxonomies() -> &'static (StageTaxonomy, StageTaxonomy) {
    static TAXES: OnceLock<(StageTaxonomy, StageTaxonomy)> = OnceLock::new();
    TAXES.get_or_init(|| {
        let tax = |name: &str, words: &[&str]| {
            StageTaxonomy::new(
                name,
                words
                    .iter()
                    .map(|w| Stage {
                        headword: w.to_string(),
                        definition: String::new(),
                        aliases: Default::default(),
                    })
                    .collect(),
            )
            .unwrap()
        };
        (
            tax(
                "lifecycle",
                &[
                    "Data Acquisition",
                    "Data Preparation",
                    "Data Exploration",
                    "Feature Engineering",
                    "Modeling",
                    "Training",
                    "Evaluation",
                    "Prediction",
                    "Interpretation",
                    "Deployment",
                    "Monitoring",
                ],
            ),
            tax(
                "cells",
                &[
                    "load_data",
                    "data_preprocessing",
                    "data_exploration",
                    "result_visualization",
                    "modelling",
                    "model_evaluation",
                    "model_prediction",
                    "save_results",
                    "comment_only",
                    "helper_functions",
                ],
            ),
        )
    })
}

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".toml")
        .tempfile()
        .expect("create temp file");
    file.write_all(data).expect("write temp file");
    let (tax_a, tax_b) = taxonomies();
    if let Ok(mapping) = load_cross_mapping(file.path(), tax_a, tax_b) {
        assert_eq!(mapping.source_a, tax_a.name());
        assert_eq!(mapping.source_b, tax_b.name());
        for (a, b) in mapping.pairs() {
            let stage_a = tax_a
                .get(a)
                .unwrap_or_else(|| panic!("pair endpoint `{a}` missing from taxonomy a"));
            let stage_b = tax_b
                .get(b)
                .unwrap_or_else(|| panic!("pair endpoint `{b}` missing from taxonomy b"));
            assert_eq!(&stage_a.headword, a, "endpoint not canonicalized");
            assert_eq!(&stage_b.headword, b, "endpoint not canonicalized");
        }
    }
});
