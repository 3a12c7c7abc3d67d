//! Notebook JSON loading on arbitrary bytes, and full instruction
//! extraction on whatever loads: crashes and invariant violations in the
//! load-extract pipeline both count as findings.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::ingest::{extract_notebook, load_notebook, verify_line_coverage};

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".ipynb")
        .tempfile()
        .expect("temp file");
    file.write_all(data).expect("write fuzz input");
    let Ok(notebook) = load_notebook(file.path()) else {
        return;
    };
    let (extractions, summary) = extract_notebook(&notebook);
    assert_eq!(
        extractions.len(),
        notebook.code_cells().count(),
        "one extraction per code cell"
    );
    let total: usize = extractions.iter().map(|e| e.instructions.len()).sum();
    assert_eq!(
        summary.instructions, total,
        "summary disagrees with extractions"
    );
    for extraction in &extractions {
        let cell = notebook
            .cells
            .iter()
            .find(|c| c.index == extraction.cell_index)
            .expect("extraction references a real cell");
        if extraction.unparseable.is_none() {
            verify_line_coverage(&cell.source, extraction).expect("line coverage");
        }
    }
});
