//! The labeled-cell table loader on arbitrary bytes, against a small
//! taxonomy whose headwords match the bundled tables' column names.

#![no_main]

use std::collections::BTreeSet;
use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::ingest::load_cell_labels;
use stagekit::taxonomy::{Stage, StageTaxonomy};

fn taxonomy() -> StageTaxonomy {
    let stage = |headword: &str| Stage {
        headword: headword.to_string(),
        definition: String::new(),
        aliases: BTreeSet::new(),
    };
    StageTaxonomy::new(
        "fuzz",
        vec![
            stage("load_data"),
            stage("data_preprocessing"),
            stage("data_exploration"),
            stage("modelling"),
            stage("evaluation"),
        ],
    )
    .expect("static taxonomy")
}

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".csv")
        .tempfile()
        .expect("temp file");
    file.write_all(data).expect("write fuzz input");
    let tax = taxonomy();
    if let Ok(records) = load_cell_labels(file.path(), &tax) {
        for record in &records {
            for label in &record.labels {
                assert!(
                    tax.get(label).is_some(),
                    "record carries label `{label}` outside the taxonomy"
                );
            }
            assert_eq!(
                record.unlabeled,
                record.labels.is_empty(),
                "unlabeled flag disagrees with the label set"
            );
        }
    }
});
