//! One module per subcommand, plus corpus helpers they share.

mod classify;
mod evaluate;
mod insights;
mod mutate;
mod report;
mod unify;

pub use classify::cmd_classify;
pub use evaluate::cmd_evaluate;
pub use insights::cmd_insights;
pub use mutate::cmd_mutate;
pub use report::cmd_report;
pub use unify::cmd_unify;

use std::path::{Path, PathBuf};

use stagekit::ingest::{load_notebook, Notebook};

use crate::config::resolve;
use crate::CliError;

pub(crate) fn ensure_output_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Resolves the corpus from either an explicit notebook list or a directory
/// scan, in sorted order so every run enumerates identically. An empty scan
/// result is legal (callers decide whether that deserves a warning); having
/// neither source configured is not.
pub(crate) fn corpus_paths(
    base: &Path,
    notebook_dir: &Option<String>,
    notebooks: &[String],
) -> Result<Vec<PathBuf>, CliError> {
    if notebook_dir.is_none() && notebooks.is_empty() {
        return Err(CliError::Usage(
            "no notebooks: set notebook_dir or notebooks in the config".into(),
        ));
    }
    let mut paths = Vec::new();
    if let Some(dir) = notebook_dir {
        let dir = resolve(base, dir);
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| CliError::Usage(format!("notebook dir {}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry
                .map_err(|e| CliError::Data(format!("notebook dir {}: {e}", dir.display())))?
                .path();
            if path.extension().is_some_and(|ext| ext == "ipynb") {
                paths.push(path);
            }
        }
    }
    for name in notebooks {
        paths.push(resolve(base, name));
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

pub(crate) fn load_corpus(paths: &[PathBuf]) -> Result<Vec<Notebook>, CliError> {
    paths
        .iter()
        .map(|p| load_notebook(p).map_err(CliError::from))
        .collect()
}
