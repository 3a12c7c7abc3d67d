//! Stage-taxonomy TOML loader. Accepted files must yield a non-empty
//! taxonomy whose every declared headword resolves through lookup.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::taxonomy::StageTaxonomy;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".toml")
        .tempfile()
        .expect("create temp file");
    file.write_all(data).expect("write temp file");
    if let Ok(tax) = StageTaxonomy::load(file.path()) {
        assert!(!tax.is_empty(), "loader accepted an empty taxonomy");
        assert_eq!(tax.len(), tax.stages().len());
        for stage in tax.stages() {
            let found = tax
                .get(&stage.headword)
                .unwrap_or_else(|| panic!("headword `{}` does not resolve", stage.headword));
            assert_eq!(found, stage, "lookup returned a different stage record");
        }
    }
});
