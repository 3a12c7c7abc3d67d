//! The name-to-stage-code mapping loader on arbitrary bytes. Whatever
//! loads must resolve: every accepted entry's code is in the legend, so
//! `stage_of` succeeds for every loaded name.

#![no_main]

use std::collections::BTreeMap;
use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::ingest::load_static_mapping;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".csv")
        .tempfile()
        .expect("temp file");
    file.write_all(data).expect("write fuzz input");

    let legend: BTreeMap<u16, String> = [
        (1, "Stage One".to_string()),
        (2, "Stage Two".to_string()),
        (7, "Stage Seven".to_string()),
    ]
    .into_iter()
    .collect();

    let Ok(mapping) = load_static_mapping(file.path(), &legend) else {
        return;
    };
    for name in mapping.entries.keys() {
        assert!(
            mapping.stage_of(name).is_some(),
            "loaded name `{name}` does not resolve to a stage"
        );
    }
});
