//! Notebook and ground-truth ingestion: loads version-4 notebook JSON,
//! strips magics and shell escapes, decomposes code cells into
//! statement-level instructions with line provenance, and loads the
//! rule-classifier mapping and labeled-cell tables.

pub(crate) mod statements;
mod tables;

pub use statements::{extract_instructions, verify_line_coverage, CellExtraction};
pub use tables::{
    load_cell_labels, load_stage_legend, load_static_mapping, rejoin_cell_labels, CellLabelRecord,
    JoinMethod, MatchedCell, RejoinOutcome, StaticMapping,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{path}` is not a readable notebook: {message}")]
    Notebook { path: String, message: String },
    #[error("`{path}` row {row}: {message}")]
    Table {
        path: String,
        row: usize,
        message: String,
    },
    #[error("`{path}`: {message}")]
    TableShape { path: String, message: String },
    #[error("stage legend `{path}`: {message}")]
    Legend { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notebook {
    /// Final path component of the source file; the join key against
    /// labeled-cell tables.
    pub id: String,
    pub cells: Vec<Cell>,
}

impl Notebook {
    pub fn code_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Code)
    }
}

/// Loads a version-4 notebook JSON document. Cell sources stored as line
/// arrays are joined; cells keep document order with contiguous indices.
pub fn load_notebook(path: &std::path::Path) -> Result<Notebook, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let notebook_err = |message: String| IngestError::Notebook {
        path: path.display().to_string(),
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| notebook_err(e.to_string()))?;
    let nbformat = value
        .get("nbformat")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| notebook_err("missing nbformat field".to_string()))?;
    if nbformat != 4 {
        return Err(notebook_err(format!(
            "unsupported nbformat {nbformat}, expected 4"
        )));
    }
    let cells_value = value
        .get("cells")
        .and_then(|v| v.as_array())
        .ok_or_else(|| notebook_err("missing cells array".to_string()))?;
    let mut cells = Vec::with_capacity(cells_value.len());
    for (index, cell) in cells_value.iter().enumerate() {
        let kind = match cell.get("cell_type").and_then(|v| v.as_str()) {
            Some("code") => CellKind::Code,
            Some("markdown") => CellKind::Markdown,
            Some("raw") => CellKind::Raw,
            other => {
                return Err(notebook_err(format!(
                    "cell {index} has unsupported cell_type {other:?}"
                )))
            }
        };
        let source = match cell.get("source") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Array(parts)) => {
                let mut joined = String::new();
                for part in parts {
                    match part.as_str() {
                        Some(s) => joined.push_str(s),
                        None => {
                            return Err(notebook_err(format!(
                                "cell {index} source array holds a non-string entry"
                            )))
                        }
                    }
                }
                joined
            }
            _ => {
                return Err(notebook_err(format!(
                    "cell {index} has no usable source field"
                )))
            }
        };
        cells.push(Cell {
            index,
            kind,
            source,
        });
    }
    let id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Notebook { id, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Magic,
    Shell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedLine {
    /// 1-based line number within the cell.
    pub line: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanitizedCell {
    /// Cell source with excluded lines blanked in place, so line numbers
    /// are unchanged.
    pub code: String,
    pub excluded: Vec<ExcludedLine>,
}

/// Removes notebook magic (`%`, `%%`) and shell-escape (`!`) lines, which
/// are not Python and would defeat statement parsing. Excluded lines are
/// replaced by empty lines to preserve numbering.
pub fn sanitize_cell(source: &str) -> SanitizedCell {
    let mut code_lines = Vec::new();
    let mut excluded = Vec::new();
    for (i, raw_line) in source.split('\n').enumerate() {
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        let trimmed = line.trim_start();
        let reason = if trimmed.starts_with('%') {
            Some(ExclusionReason::Magic)
        } else if trimmed.starts_with('!') {
            Some(ExclusionReason::Shell)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                excluded.push(ExcludedLine {
                    line: i + 1,
                    reason,
                });
                code_lines.push("");
            }
            None => code_lines.push(line),
        }
    }
    SanitizedCell {
        code: code_lines.join("\n"),
        excluded,
    }
}

/// Per-notebook ingestion counts for the run report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub notebook_id: String,
    pub total_cells: usize,
    pub code_cells: usize,
    pub instructions: usize,
    pub excluded_lines: usize,
    pub unparseable_cells: Vec<usize>,
}

/// Extracts instructions from every code cell and tallies the notebook.
pub fn extract_notebook(notebook: &Notebook) -> (Vec<CellExtraction>, IngestSummary) {
    let extractions: Vec<CellExtraction> = notebook
        .code_cells()
        .map(|cell| extract_instructions(cell, &notebook.id))
        .collect();
    let summary = IngestSummary {
        notebook_id: notebook.id.clone(),
        total_cells: notebook.cells.len(),
        code_cells: extractions.len(),
        instructions: extractions.iter().map(|e| e.instructions.len()).sum(),
        excluded_lines: extractions.iter().map(|e| e.excluded_lines.len()).sum(),
        unparseable_cells: extractions
            .iter()
            .filter(|e| e.unparseable.is_some())
            .map(|e| e.cell_index)
            .collect(),
    };
    (extractions, summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionKind {
    Simple,
    CompoundHeader,
}

/// One statement-level code unit with full provenance. Line numbers are
/// 1-based within the cell; both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub notebook_id: String,
    pub cell_index: usize,
    pub ordinal: usize,
    pub start_line: usize,
    pub end_line: usize,
    pub source: String,
    pub kind: InstructionKind,
}

impl Instruction {
    /// Stable identity used to key predictions and resume runs.
    pub fn key(&self) -> String {
        format!(
            "{}::{}::{}",
            self.notebook_id, self.cell_index, self.ordinal
        )
    }
}
