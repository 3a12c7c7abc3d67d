//! Statement extraction on arbitrary cell text. Beyond not crashing, a
//! scanned cell must satisfy the line-coverage invariant: every line falls
//! into exactly one of excluded/blank/comment/instruction, or the cell is
//! flagged unparseable with no instructions at all.

#![no_main]

use libfuzzer_sys::fuzz_target;
use stagekit::ingest::{extract_instructions, sanitize_cell, verify_line_coverage, Cell, CellKind};

fuzz_target!(|data: &[u8]| {
    let Ok(source) = std::str::from_utf8(data) else {
        return;
    };
    let _ = sanitize_cell(source);
    let cell = Cell {
        index: 0,
        kind: CellKind::Code,
        source: source.to_string(),
    };
    let extraction = extract_instructions(&cell, "fuzz.ipynb");
    if extraction.unparseable.is_some() {
        assert!(
            extraction.instructions.is_empty(),
            "unparseable cell kept instructions"
        );
    } else if let Err(violation) = verify_line_coverage(source, &extraction) {
        panic!("line coverage violated: {violation}");
    }
});
