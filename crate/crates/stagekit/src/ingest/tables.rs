//! Loaders for the rule-classifier mapping table and labeled-cell tables,
//! plus the re-join of labeled cells onto a notebook corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, Notebook};
use crate::taxonomy::StageTaxonomy;

/// Lookup table from called function/class names to stage codes, with the
/// legend resolving each code to a stage name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticMapping {
    pub entries: BTreeMap<String, u16>,
    pub legend: BTreeMap<u16, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl StaticMapping {
    /// Stage name for a called name, if mapped.
    pub fn stage_of(&self, name: &str) -> Option<&str> {
        self.entries
            .get(name)
            .and_then(|code| self.legend.get(code))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads the code legend: a TOML table mapping numeric codes to stage names.
pub fn load_stage_legend(path: &Path) -> Result<BTreeMap<u16, String>, IngestError> {
    #[derive(Deserialize)]
    struct FileFormat {
        codes: BTreeMap<String, String>,
    }
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: FileFormat = toml::from_str(&text).map_err(|e| IngestError::Legend {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut legend = BTreeMap::new();
    for (key, stage) in parsed.codes {
        let code: u16 = key.parse().map_err(|_| IngestError::Legend {
            path: path.display().to_string(),
            message: format!("code key `{key}` is not a number"),
        })?;
        if stage.trim().is_empty() {
            return Err(IngestError::Legend {
                path: path.display().to_string(),
                message: format!("code {code} maps to an empty stage name"),
            });
        }
        legend.insert(code, stage);
    }
    if legend.is_empty() {
        return Err(IngestError::Legend {
            path: path.display().to_string(),
            message: "legend has no codes".to_string(),
        });
    }
    Ok(legend)
}

/// Loads the name-to-stage-code mapping CSV (headers `name,stage`).
/// Duplicate rows with the same code collapse silently; duplicates with
/// conflicting codes are rejected.
pub fn load_static_mapping(
    path: &Path,
    legend: &BTreeMap<u16, String>,
) -> Result<StaticMapping, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::TableShape {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::TableShape {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let name_col = headers.iter().position(|h| h == "name");
    let stage_col = headers.iter().position(|h| h == "stage");
    let (name_col, stage_col) = match (name_col, stage_col) {
        (Some(n), Some(s)) => (n, s),
        _ => {
            return Err(IngestError::TableShape {
                path: path.display().to_string(),
                message: "expected `name` and `stage` columns".to_string(),
            })
        }
    };

    let mut entries: BTreeMap<String, u16> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, counting the header line
        let record = record.map_err(|e| IngestError::Table {
            path: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        let name = record.get(name_col).unwrap_or("").trim().to_string();
        let stage_text = record.get(stage_col).unwrap_or("").trim();
        if name.is_empty() {
            return Err(IngestError::Table {
                path: path.display().to_string(),
                row,
                message: "empty name".to_string(),
            });
        }
        let code: u16 = stage_text.parse().map_err(|_| IngestError::Table {
            path: path.display().to_string(),
            row,
            message: format!("stage code `{stage_text}` is not a number"),
        })?;
        if !legend.contains_key(&code) {
            return Err(IngestError::Table {
                path: path.display().to_string(),
                row,
                message: format!("stage code {code} is not in the legend"),
            });
        }
        match entries.get(&name) {
            Some(&existing) if existing != code => {
                return Err(IngestError::Table {
                    path: path.display().to_string(),
                    row,
                    message: format!("name `{name}` maps to both code {existing} and code {code}"),
                });
            }
            _ => {
                entries.insert(name, code);
            }
        }
    }
    if entries.is_empty() {
        warnings.push(format!("`{}` holds no mapping rows", path.display()));
    }
    Ok(StaticMapping {
        entries,
        legend: legend.clone(),
        warnings,
    })
}

/// One labeled cell from a ground-truth table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabelRecord {
    /// Notebook file name the row claims to come from.
    pub notebook_id: String,
    /// Cell position when the table carries one.
    pub cell_index: Option<usize>,
    pub cell_type: String,
    pub labels: BTreeSet<String>,
    pub source_text: String,
    /// True when every stage column is 0.
    pub unlabeled: bool,
}

/// Loads a labeled-cell table: stage columns are the headers matching the
/// taxonomy's headwords (case-insensitive) and must hold 0/1; `filename`,
/// `cell_type`, and `text` are required metadata columns; `cell_index` is
/// honored when present.
pub fn load_cell_labels(
    path: &Path,
    taxonomy: &StageTaxonomy,
) -> Result<Vec<CellLabelRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::TableShape {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::TableShape {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();

    let mut stage_columns: Vec<(usize, String)> = Vec::new();
    for (i, header) in headers.iter().enumerate() {
        if let Some(stage) = taxonomy.get(header) {
            stage_columns.push((i, stage.headword.clone()));
        }
    }
    if stage_columns.is_empty() {
        return Err(IngestError::TableShape {
            path: path.display().to_string(),
            message: format!(
                "no column matches a stage of taxonomy `{}`",
                taxonomy.name()
            ),
        });
    }
    let require = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::TableShape {
                path: path.display().to_string(),
                message: format!("missing required column `{name}`"),
            })
    };
    let filename_col = require("filename")?;
    let cell_type_col = require("cell_type")?;
    let text_col = require("text")?;
    let cell_index_col = headers.iter().position(|h| h == "cell_index");

    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IngestError::Table {
            path: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        let mut labels = BTreeSet::new();
        for (col, stage) in &stage_columns {
            match record.get(*col).unwrap_or("").trim() {
                "0" => {}
                "1" => {
                    labels.insert(stage.clone());
                }
                other => {
                    return Err(IngestError::Table {
                        path: path.display().to_string(),
                        row,
                        message: format!("stage column `{stage}` holds `{other}`, expected 0 or 1"),
                    })
                }
            }
        }
        let cell_index = match cell_index_col {
            Some(col) => {
                let raw = record.get(col).unwrap_or("").trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<usize>().map_err(|_| IngestError::Table {
                        path: path.display().to_string(),
                        row,
                        message: format!("cell_index `{raw}` is not a non-negative integer"),
                    })?)
                }
            }
            None => None,
        };
        let unlabeled = labels.is_empty();
        records.push(CellLabelRecord {
            notebook_id: record.get(filename_col).unwrap_or("").trim().to_string(),
            cell_index,
            cell_type: record.get(cell_type_col).unwrap_or("").trim().to_string(),
            labels,
            source_text: record.get(text_col).unwrap_or("").to_string(),
            unlabeled,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinMethod {
    /// Matched by (filename, cell index) with source text agreeing.
    IndexKey,
    /// Matched by whitespace-insensitive source text alone.
    TextFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedCell {
    pub record_index: usize,
    pub notebook_id: String,
    pub cell_index: usize,
    pub method: JoinMethod,
}

/// Audit trail of a label-table re-join.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RejoinOutcome {
    pub matched: Vec<MatchedCell>,
    /// Record indices that found no (unique) counterpart.
    pub unmatched: Vec<usize>,
}

fn squash_whitespace(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Re-joins label records onto corpus notebooks. The primary key is
/// (filename, cell index) confirmed by whitespace-insensitive text
/// equality (label tables often lose indentation); rows without an index
/// or whose indexed cell disagrees fall back to a unique text match
/// within the notebook. Ambiguous or absent matches are left unmatched.
pub fn rejoin_cell_labels(records: &[CellLabelRecord], notebooks: &[Notebook]) -> RejoinOutcome {
    let by_id: BTreeMap<&str, &Notebook> =
        notebooks.iter().map(|nb| (nb.id.as_str(), nb)).collect();
    let mut outcome = RejoinOutcome::default();
    for (record_index, record) in records.iter().enumerate() {
        let Some(notebook) = by_id.get(record.notebook_id.as_str()) else {
            outcome.unmatched.push(record_index);
            continue;
        };
        let wanted = squash_whitespace(&record.source_text);

        if let Some(index) = record.cell_index {
            if let Some(cell) = notebook.cells.get(index) {
                if squash_whitespace(&cell.source) == wanted {
                    outcome.matched.push(MatchedCell {
                        record_index,
                        notebook_id: notebook.id.clone(),
                        cell_index: index,
                        method: JoinMethod::IndexKey,
                    });
                    continue;
                }
            }
        }

        let candidates: Vec<usize> = notebook
            .cells
            .iter()
            .filter(|c| squash_whitespace(&c.source) == wanted)
            .map(|c| c.index)
            .collect();
        if candidates.len() == 1 {
            outcome.matched.push(MatchedCell {
                record_index,
                notebook_id: notebook.id.clone(),
                cell_index: candidates[0],
                method: JoinMethod::TextFallback,
            });
        } else {
            outcome.unmatched.push(record_index);
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Cell, CellKind};
    use crate::taxonomy::Stage;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn legend() -> BTreeMap<u16, String> {
        BTreeMap::from([
            (1, "load_data".to_string()),
            (2, "data_preprocessing".to_string()),
            (3, "modelling".to_string()),
        ])
    }

    #[test]
    fn legend_loads_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "codes.toml",
            "[codes]\n1 = \"load_data\"\n2 = \"modelling\"\n",
        );
        let legend = load_stage_legend(&path).unwrap();
        assert_eq!(legend[&1], "load_data");
        assert_eq!(legend[&2], "modelling");
    }

    #[test]
    fn legend_rejects_non_numeric_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "codes.toml", "[codes]\nx = \"load_data\"\n");
        assert!(load_stage_legend(&path).is_err());
    }

    #[test]
    fn mapping_loads_and_resolves_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "stages.csv",
            "name,stage\nread_csv,1\ndropna,2\nfit,3\n",
        );
        let mapping = load_static_mapping(&path, &legend()).unwrap();
        assert_eq!(mapping.len(), 3);
        assert_eq!(mapping.stage_of("read_csv"), Some("load_data"));
        assert_eq!(mapping.stage_of("fit"), Some("modelling"));
        assert_eq!(mapping.stage_of("nope"), None);
    }

    #[test]
    fn mapping_row_count_matches_independent_line_count() {
        let dir = tempfile::tempdir().unwrap();
        let body = "name,stage\na,1\nb,1\nc,2\nd,3\ne,2\n";
        let path = write_file(dir.path(), "stages.csv", body);
        let mapping = load_static_mapping(&path, &legend()).unwrap();
        let expected = body.lines().count() - 1;
        assert_eq!(mapping.len(), expected);
    }

    #[test]
    fn mapping_deduplicates_identical_rows_silently() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "stages.csv",
            "name,stage\nread_csv,1\nread_csv,1\nfit,3\n",
        );
        let mapping = load_static_mapping(&path, &legend()).unwrap();
        assert_eq!(mapping.len(), 2);
    }

    #[test]
    fn mapping_rejects_conflicting_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "stages.csv",
            "name,stage\nread_csv,1\nread_csv,2\n",
        );
        let err = load_static_mapping(&path, &legend()).unwrap_err();
        assert!(err.to_string().contains("read_csv"));
    }

    #[test]
    fn mapping_rejects_unknown_code() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "stages.csv", "name,stage\nread_csv,99\n");
        let err = load_static_mapping(&path, &legend()).unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn mapping_empty_file_warns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "stages.csv", "name,stage\n");
        let mapping = load_static_mapping(&path, &legend()).unwrap();
        assert!(mapping.is_empty());
        assert_eq!(mapping.warnings.len(), 1);
    }

    fn daswow_taxonomy() -> StageTaxonomy {
        let stages = ["load_data", "data_preprocessing", "modelling"]
            .iter()
            .map(|n| Stage {
                headword: n.to_string(),
                definition: String::new(),
                aliases: BTreeSet::new(),
            })
            .collect();
        StageTaxonomy::new("daswow", stages).unwrap()
    }

    #[test]
    fn cell_labels_read_binary_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "cells.csv",
            "filename,cell_index,cell_type,text,load_data,data_preprocessing,modelling\n\
             nb1.ipynb,0,code,import pandas,1,0,0\n\
             nb1.ipynb,1,code,df.dropna(),0,1,0\n\
             nb2.ipynb,,code,x = 1,0,0,0\n",
        );
        let records = load_cell_labels(&path, &daswow_taxonomy()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(
            records[0].labels.iter().collect::<Vec<_>>(),
            vec!["load_data"]
        );
        assert_eq!(records[0].cell_index, Some(0));
        assert!(records[2].unlabeled);
        assert_eq!(records[2].cell_index, None);
    }

    #[test]
    fn cell_labels_match_column_sum_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let body = "filename,cell_type,text,load_data,data_preprocessing,modelling\n\
            a.ipynb,code,s1,1,1,0\n\
            a.ipynb,code,s2,0,1,0\n\
            b.ipynb,code,s3,1,0,1\n";
        let path = write_file(dir.path(), "cells.csv", body);
        let records = load_cell_labels(&path, &daswow_taxonomy()).unwrap();
        // Independent oracle: per-column sums over the raw text.
        let mut preprocessing = 0;
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            preprocessing += cols[4].parse::<u64>().unwrap();
        }
        let counted = records
            .iter()
            .filter(|r| r.labels.contains("data_preprocessing"))
            .count() as u64;
        assert_eq!(counted, preprocessing);
    }

    #[test]
    fn cell_labels_reject_non_binary_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "cells.csv",
            "filename,cell_type,text,load_data,data_preprocessing,modelling\n\
             a.ipynb,code,s,2,0,0\n",
        );
        let err = load_cell_labels(&path, &daswow_taxonomy()).unwrap_err();
        assert!(err.to_string().contains("expected 0 or 1"));
    }

    #[test]
    fn cell_labels_require_metadata_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "cells.csv",
            "filename,text,load_data,data_preprocessing,modelling\na.ipynb,s,1,0,0\n",
        );
        let err = load_cell_labels(&path, &daswow_taxonomy()).unwrap_err();
        assert!(err.to_string().contains("cell_type"));
    }

    fn notebook(id: &str, sources: &[&str]) -> Notebook {
        Notebook {
            id: id.to_string(),
            cells: sources
                .iter()
                .enumerate()
                .map(|(index, s)| Cell {
                    index,
                    kind: CellKind::Code,
                    source: s.to_string(),
                })
                .collect(),
        }
    }

    fn record(nb: &str, index: Option<usize>, text: &str) -> CellLabelRecord {
        CellLabelRecord {
            notebook_id: nb.to_string(),
            cell_index: index,
            cell_type: "code".to_string(),
            labels: BTreeSet::new(),
            source_text: text.to_string(),
            unlabeled: true,
        }
    }

    #[test]
    fn rejoin_prefers_index_key_when_text_agrees() {
        let nb = notebook("a.ipynb", &["x = 1", "if t:\n    y = 2"]);
        // Indentation lost in the table, as the source datasets do.
        let records = vec![record("a.ipynb", Some(1), "if t:\ny = 2")];
        let outcome = rejoin_cell_labels(&records, &[nb]);
        assert_eq!(outcome.matched.len(), 1);
        assert_eq!(outcome.matched[0].cell_index, 1);
        assert_eq!(outcome.matched[0].method, JoinMethod::IndexKey);
    }

    #[test]
    fn rejoin_falls_back_to_unique_text_match() {
        let nb = notebook("a.ipynb", &["x = 1", "y = 2"]);
        let records = vec![
            record("a.ipynb", None, "y=2"),
            record("a.ipynb", Some(0), "y = 2"),
        ];
        let outcome = rejoin_cell_labels(&records, &[nb]);
        assert_eq!(outcome.matched.len(), 2);
        assert!(outcome
            .matched
            .iter()
            .all(|m| m.method == JoinMethod::TextFallback && m.cell_index == 1));
    }

    #[test]
    fn rejoin_leaves_ambiguous_and_missing_unmatched() {
        let nb = notebook("a.ipynb", &["dup()", "dup()"]);
        let records = vec![
            record("a.ipynb", None, "dup()"),
            record("a.ipynb", None, "absent()"),
            record("other.ipynb", Some(0), "dup()"),
        ];
        let outcome = rejoin_cell_labels(&records, &[nb]);
        assert!(outcome.matched.is_empty());
        assert_eq!(outcome.unmatched, vec![0, 1, 2]);
    }
}
