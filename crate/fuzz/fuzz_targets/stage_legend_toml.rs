//! Stage-legend TOML loader. Accepted files must yield a non-empty legend
//! with no blank stage names.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::ingest::load_stage_legend;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".toml")
        .tempfile()
        .expect("create temp file");
    file.write_all(data).expect("write temp file");
    if let Ok(legend) = load_stage_legend(file.path()) {
        assert!(!legend.is_empty(), "loader accepted an empty legend");
        for (code, stage) in &legend {
            assert!(
                !stage.trim().is_empty(),
                "code {code} maps to a blank stage name"
            );
        }
    }
});
